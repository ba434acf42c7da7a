//! Reference-free image quality metrics plus MSE, all on the 0-255 code
//! scale so values are comparable across bit depths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{gradient_magnitude, sobel_gradient};
use crate::raster::ImageF;

const SCALE: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub entropy: f64,
    pub average_gradient: f64,
    pub std_dev: f64,
    pub edge_strength: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
}

/// Shannon entropy in bits over 256 intensity bins.
pub fn entropy(img: &ImageF) -> f64 {
    let mut hist = [0usize; 256];
    for &v in img.data() {
        let bin = (v.clamp(0.0, 1.0) * SCALE).round() as usize;
        hist[bin] += 1;
    }
    let n = img.data().len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mean of sqrt((dx^2 + dy^2)/2) over forward differences, 0-255 scale.
pub fn average_gradient(img: &ImageF) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(Error::invalid(
            "average gradient needs at least a 2x2 image",
        ));
    }
    let mut acc = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let dx = (img.at(x + 1, y) - img.at(x, y)) * SCALE;
            let dy = (img.at(x, y + 1) - img.at(x, y)) * SCALE;
            acc += ((dx * dx + dy * dy) / 2.0).sqrt();
        }
    }
    Ok(acc / ((w - 1) * (h - 1)) as f64)
}

/// Population standard deviation on the 0-255 scale.
pub fn std_dev(img: &ImageF) -> f64 {
    let n = img.data().len() as f64;
    let mean = img.mean();
    let var = img
        .data()
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    var.sqrt() * SCALE
}

/// Mean Sobel gradient magnitude on the 0-255 scale.
pub fn edge_strength(img: &ImageF) -> f64 {
    let mag = gradient_magnitude(&sobel_gradient(img));
    mag.mean() * SCALE
}

/// Mean squared error on the 0-255 scale.
pub fn mse(a: &ImageF, b: &ImageF) -> Result<f64> {
    a.check_same_dims(b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (x - y) * SCALE;
            d * d
        })
        .sum::<f64>()
        / n)
}

pub fn metric_report(img: &ImageF, reference: Option<&ImageF>) -> Result<MetricReport> {
    Ok(MetricReport {
        entropy: entropy(img),
        average_gradient: average_gradient(img)?,
        std_dev: std_dev(img),
        edge_strength: edge_strength(img),
        mse: reference.map(|r| mse(img, r)).transpose()?,
    })
}

impl MetricReport {
    /// True if every reference-free metric strictly exceeds `other`'s.
    pub fn dominates(&self, other: &MetricReport) -> bool {
        self.entropy > other.entropy
            && self.average_gradient > other.average_gradient
            && self.std_dev > other.std_dev
            && self.edge_strength > other.edge_strength
    }
}
