//! Side-by-side evaluation of the fusion methods against a ground truth.

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_fuse, BaselineMethod, BaselineSpec};
use crate::error::Result;
use crate::metrics::{metric_report, MetricReport};
use crate::mwgf::{mwgf_fuse, FusionConfig};
use crate::raster::ImageF;

/// The comparison set: the five pyramid/transform methods plus mwgf.
pub const COMPARISON_METHODS: [&str; 6] = ["lap", "dwt", "pca", "gra", "fsd", "mwgf"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub inputs: Vec<MetricReport>,
    pub methods: Vec<MethodReport>,
}

/// Fuses `a` and `b` with every comparison method, scoring each result
/// (and the inputs) against `gt`.
pub fn compare_methods(
    a: &ImageF,
    b: &ImageF,
    gt: &ImageF,
    config: &FusionConfig,
) -> Result<ComparisonReport> {
    let inputs = vec![
        metric_report(a, Some(gt))?,
        metric_report(b, Some(gt))?,
    ];
    let mut methods = Vec::with_capacity(COMPARISON_METHODS.len());
    for name in COMPARISON_METHODS {
        let fused = if name == "mwgf" {
            mwgf_fuse(&[a.clone(), b.clone()], config)?.fused
        } else {
            let method: BaselineMethod = name.parse()?;
            baseline_fuse(a, b, &BaselineSpec::new(method))?
        };
        methods.push(MethodReport {
            method: name.to_string(),
            metrics: metric_report(&fused, Some(gt))?,
        });
    }
    Ok(ComparisonReport { inputs, methods })
}
