//! Convolution primitives: separable Gaussian smoothing and Sobel gradients.
//!
//! Border policy is replicate everywhere.

use crate::error::{Error, Result};
use crate::raster::{GradientField, ImageF};

/// 1D Gaussian kernel truncated at radius ceil(3 sigma), renormalized to sum 1.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn convolve_rows(img: &ImageF, kernel: &[f64]) -> ImageF {
    let (w, h) = (img.width(), img.height());
    let radius = kernel.len() / 2;
    let mut out = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                let sx = x as isize + i as isize - radius as isize;
                acc += kv * img.at_clamped(sx, y as isize);
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn convolve_cols(img: &ImageF, kernel: &[f64]) -> ImageF {
    let (w, h) = (img.width(), img.height());
    let radius = kernel.len() / 2;
    let mut out = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                let sy = y as isize + i as isize - radius as isize;
                acc += kv * img.at_clamped(x as isize, sy);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Separable Gaussian blur; sigma 0 is the identity.
pub fn gaussian_blur(img: &ImageF, sigma: f64) -> Result<ImageF> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!("gaussian sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let k = gaussian_kernel(sigma);
    Ok(convolve_cols(&convolve_rows(img, &k), &k))
}

/// 3x3 Sobel derivatives scaled by 1/8, so a unit-slope ramp reads as
/// gradient 1.0 intensity per pixel.
pub fn sobel_gradient(img: &ImageF) -> GradientField {
    let (w, h) = (img.width(), img.height());
    let mut gx = ImageF::zeros(w, h);
    let mut gy = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let p = |dx: isize, dy: isize| img.at_clamped(xi + dx, yi + dy);
            let sx = (p(1, -1) - p(-1, -1)) + 2.0 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
            let sy = (p(-1, 1) - p(-1, -1)) + 2.0 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
            gx.set(x, y, sx / 8.0);
            gy.set(x, y, sy / 8.0);
        }
    }
    GradientField { gx, gy }
}

/// Per-pixel sqrt(gx^2 + gy^2); values are >= 0 and not clamped to [0,1].
pub fn gradient_magnitude(g: &GradientField) -> ImageF {
    let mut out = ImageF::zeros(g.width(), g.height());
    for (o, (x, y)) in out
        .data_mut()
        .iter_mut()
        .zip(g.gx.data().iter().zip(g.gy.data()))
    {
        *o = x.hypot(*y);
    }
    out
}
