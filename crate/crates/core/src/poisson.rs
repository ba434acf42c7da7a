//! Least-squares integration of a gradient field.
//!
//! Minimizes ||DF - g||^2 where D is the forward-difference operator on a
//! staggered grid, which yields a 5-point Neumann Laplacian system solved
//! by conjugate gradients. The per-pixel gradient samples are averaged to
//! edge midpoints before forming the right-hand side.

use crate::error::{Error, Result};
use crate::raster::{GradientField, ImageF};

const MAX_ITERS: usize = 10_000;
const REL_TOL: f64 = 1e-6;

fn apply_neumann_laplacian(w: usize, h: usize, f: &[f64], out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut acc = 0.0;
            if x > 0 {
                acc += f[i] - f[i - 1];
            }
            if x + 1 < w {
                acc += f[i] - f[i + 1];
            }
            if y > 0 {
                acc += f[i] - f[i - w];
            }
            if y + 1 < h {
                acc += f[i] - f[i + w];
            }
            out[i] = acc;
        }
    }
}

/// Integrates `g` in the least-squares sense, shifts the solution so its
/// mean equals `anchor_mean`, and clamps to [0,1].
pub fn reconstruct_from_gradients(g: &GradientField, anchor_mean: f64) -> Result<ImageF> {
    if !anchor_mean.is_finite() {
        return Err(Error::invalid("anchor mean must be finite"));
    }
    let (w, h) = (g.width(), g.height());
    let n = w * h;
    let gx = g.gx.data();
    let gy = g.gy.data();

    // staggered gradients: value on the edge between pixel i and its
    // +x (resp. +y) neighbor, by midpoint averaging
    let mut b = vec![0.0f64; n];
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            let i = y * w + x;
            let e = 0.5 * (gx[i] + gx[i + 1]);
            // b = -div g
            b[i] -= e;
            b[i + 1] += e;
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            let i = y * w + x;
            let e = 0.5 * (gy[i] + gy[i + w]);
            b[i] -= e;
            b[i + w] += e;
        }
    }

    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut f = vec![0.0f64; n];
    if b_norm > 0.0 {
        // conjugate gradients on the singular but consistent system;
        // b is orthogonal to the constant null space by construction
        let mut r = b.clone();
        let mut p = b.clone();
        let mut ap = vec![0.0f64; n];
        let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..MAX_ITERS {
            apply_neumann_laplacian(w, h, &p, &mut ap);
            let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if p_ap.abs() < f64::MIN_POSITIVE {
                break;
            }
            let alpha = rs_old / p_ap;
            for i in 0..n {
                f[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new: f64 = r.iter().map(|v| v * v).sum();
            if rs_new.sqrt() <= REL_TOL * b_norm {
                break;
            }
            let beta = rs_new / rs_old;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rs_old = rs_new;
        }
    }

    let mean = f.iter().sum::<f64>() / n as f64;
    let shift = anchor_mean - mean;
    let data: Vec<f64> = f.iter().map(|v| (v + shift).clamp(0.0, 1.0)).collect();
    ImageF::new(w, h, data)
}
