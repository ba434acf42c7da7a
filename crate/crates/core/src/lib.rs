// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive
// values. Index-based loops are kept where reads and writes mix across
// several rasters and enumerate() would obscure the stencil.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Multi-focus image fusion toolkit: dual-scale weighted gradient fusion,
//! classic comparison methods, quality metrics, focal-stack projection and
//! depth coding, and a synthetic defocus generator for end-to-end checks.

pub mod baselines;
pub mod compare;
pub mod error;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod morph;
pub mod mwgf;
pub mod poisson;
pub mod raster;
pub mod stack;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{BitMask, GradientField, ImageF, LabelMap};
