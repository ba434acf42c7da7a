//! Benchmark-only crate; see benches/fusion.rs.
