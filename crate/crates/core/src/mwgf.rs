//! Dual-scale weighted gradient fusion for multi-focus images.
//!
//! The pipeline: large-scale focus saliency per source, per-pixel argmax
//! focus regions, morphological refinement, an unknown band around region
//! boundaries, small-scale saliency weights inside the band, and a final
//! weighted fusion (pixel domain by default, gradient domain optionally).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{gaussian_blur, gradient_magnitude, sobel_gradient};
use crate::morph::{connected_components, fill_holes, largest_component, morph_close};
use crate::poisson::reconstruct_from_gradients;
use crate::raster::{BitMask, GradientField, ImageF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum FusionDomain {
    #[default]
    Pixel,
    Gradient,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub sigma_large: f64,
    pub sigma_small: f64,
    pub close_radius: usize,
    pub band_radius: usize,
    pub domain: FusionDomain,
    pub tie_break: TieBreak,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            sigma_large: 11.0,
            sigma_small: 1.0,
            close_radius: 5,
            band_radius: 11,
            domain: FusionDomain::Pixel,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_large.is_finite() && self.sigma_small.is_finite()) {
            return Err(Error::invalid("fusion sigmas must be finite"));
        }
        if !(self.sigma_large > self.sigma_small && self.sigma_small > 0.0) {
            return Err(Error::invalid(
                "fusion scales must satisfy sigma_large > sigma_small > 0",
            ));
        }
        if self.band_radius < 1 {
            return Err(Error::invalid("band_radius must be >= 1"));
        }
        Ok(())
    }
}

pub const UNKNOWN: u16 = u16::MAX;

/// Per-pixel decision: focused in source n, or in the unknown band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriMap {
    width: usize,
    height: usize,
    n_sources: usize,
    labels: Vec<u16>,
}

impl TriMap {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    #[inline]
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    pub fn is_unknown(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == UNKNOWN
    }
}

/// Per-source weight rasters forming a partition of unity.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMaps {
    maps: Vec<ImageF>,
}

impl WeightMaps {
    pub fn new(maps: Vec<ImageF>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::invalid("weight maps require at least two sources"));
        }
        for m in &maps[1..] {
            maps[0].check_same_dims(m)?;
        }
        Ok(Self { maps })
    }

    #[inline]
    pub fn n_sources(&self) -> usize {
        self.maps.len()
    }

    #[inline]
    pub fn maps(&self) -> &[ImageF] {
        &self.maps
    }

    /// Largest deviation of the per-pixel weight sum from 1.
    pub fn max_unity_deviation(&self) -> f64 {
        let n = self.maps[0].data().len();
        (0..n)
            .map(|i| {
                let s: f64 = self.maps.iter().map(|m| m.data()[i]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Everything the pipeline produced, intermediates included.
#[derive(Debug, Clone)]
pub struct FusionResult {
    pub fused: ImageF,
    pub weights: WeightMaps,
    pub trimap: TriMap,
    pub saliency_large: Vec<ImageF>,
    pub saliency_small: Vec<ImageF>,
}

/// Gaussian-smoothed squared gradient magnitude.
pub fn focus_saliency(img: &ImageF, sigma: f64) -> Result<ImageF> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("saliency sigma must be > 0"));
    }
    let mag = gradient_magnitude(&sobel_gradient(img));
    gaussian_blur(&mag.map(|v| v * v), sigma)
}

/// Per-pixel argmax over saliencies; ties go to the lowest source index.
/// The returned masks are pairwise disjoint and cover the image.
pub fn detect_focus_regions(saliencies: &[ImageF]) -> Result<Vec<BitMask>> {
    if saliencies.len() < 2 {
        return Err(Error::invalid("need at least two saliency rasters"));
    }
    for s in &saliencies[1..] {
        saliencies[0].check_same_dims(s)?;
    }
    let (w, h) = (saliencies[0].width(), saliencies[0].height());
    let mut masks = vec![BitMask::filled(w, h, false); saliencies.len()];
    for i in 0..w * h {
        let mut best = 0usize;
        for (n, s) in saliencies.iter().enumerate().skip(1) {
            if s.data()[i] > saliencies[best].data()[i] {
                best = n;
            }
        }
        let (x, y) = (i % w, i / w);
        masks[best].set(x, y, true);
    }
    Ok(masks)
}

/// Close, keep the largest component, fill its holes.
pub fn refine_region(mask: &BitMask, close_radius: usize) -> BitMask {
    let closed = morph_close(mask, close_radius);
    let biggest = largest_component(&connected_components(&closed));
    fill_holes(&biggest)
}

/// Chebyshev max-filter: true where any set bit lies within the
/// (2r+1)^2 window clipped to the image.
fn chebyshev_dilate(mask: &BitMask, radius: usize) -> BitMask {
    let (w, h) = (mask.width(), mask.height());
    let r = radius as isize;
    // separable: rows then columns
    let mut rowpass = BitMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let lo = (x as isize - r).max(0) as usize;
            let hi = ((x as isize + r) as usize).min(w - 1);
            let any = (lo..=hi).any(|xx| mask.get(xx, y));
            rowpass.set(x, y, any);
        }
    }
    let mut out = BitMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let lo = (y as isize - r).max(0) as usize;
            let hi = ((y as isize + r) as usize).min(h - 1);
            let any = (lo..=hi).any(|yy| rowpass.get(x, yy));
            out.set(x, y, any);
        }
    }
    out
}

/// Labels each pixel with its unique claiming mask, or UNKNOWN when the
/// pixel sits within `band_radius` (Chebyshev) of any mask boundary or is
/// claimed by zero or several masks.
pub fn build_trimap(refined: &[BitMask], band_radius: usize) -> Result<TriMap> {
    if refined.len() < 2 {
        return Err(Error::invalid("need at least two refined masks"));
    }
    if refined.len() >= UNKNOWN as usize {
        return Err(Error::invalid("too many sources"));
    }
    let (w, h) = (refined[0].width(), refined[0].height());
    for m in &refined[1..] {
        if !refined[0].same_dims(m) {
            return Err(Error::DimensionMismatch {
                expected_w: w,
                expected_h: h,
                got_w: m.width(),
                got_h: m.height(),
            });
        }
    }
    if band_radius < 1 {
        return Err(Error::invalid("band_radius must be >= 1"));
    }

    // near-boundary band of mask m: pixels whose Chebyshev ball contains
    // both mask and non-mask pixels
    let mut band = BitMask::filled(w, h, false);
    for m in refined {
        let inv = BitMask::new(w, h, m.bits().iter().map(|&b| !b).collect()).unwrap();
        let near_in = chebyshev_dilate(m, band_radius);
        let near_out = chebyshev_dilate(&inv, band_radius);
        for i in 0..w * h {
            if near_in.bits()[i] && near_out.bits()[i] {
                let (x, y) = (i % w, i / w);
                band.set(x, y, true);
            }
        }
    }

    let mut labels = vec![0u16; w * h];
    for i in 0..w * h {
        let claims: Vec<usize> = refined
            .iter()
            .enumerate()
            .filter(|(_, m)| m.bits()[i])
            .map(|(n, _)| n)
            .collect();
        labels[i] = if band.bits()[i] || claims.len() != 1 {
            UNKNOWN
        } else {
            claims[0] as u16
        };
    }
    Ok(TriMap {
        width: w,
        height: h,
        n_sources: refined.len(),
        labels,
    })
}

const DEGENERATE_SALIENCY_SUM: f64 = 1e-12;

/// Hard 0/1 weights in decided regions; normalized small-scale saliencies
/// in the unknown band, uniform 1/N when the saliency sum degenerates.
pub fn compute_weights(trimap: &TriMap, small_saliencies: &[ImageF]) -> Result<WeightMaps> {
    let n = trimap.n_sources();
    if small_saliencies.len() != n {
        return Err(Error::invalid("saliency count must match trimap sources"));
    }
    let (w, h) = (trimap.width(), trimap.height());
    for s in small_saliencies {
        if s.width() != w || s.height() != h {
            return Err(Error::DimensionMismatch {
                expected_w: w,
                expected_h: h,
                got_w: s.width(),
                got_h: s.height(),
            });
        }
    }
    let mut maps = vec![ImageF::zeros(w, h); n];
    for i in 0..w * h {
        let (x, y) = (i % w, i / w);
        let label = trimap.labels()[i];
        if label != UNKNOWN {
            maps[label as usize].set(x, y, 1.0);
        } else {
            let sum: f64 = small_saliencies.iter().map(|s| s.data()[i]).sum();
            if sum < DEGENERATE_SALIENCY_SUM {
                for m in maps.iter_mut() {
                    m.set(x, y, 1.0 / n as f64);
                }
            } else {
                for (m, s) in maps.iter_mut().zip(small_saliencies) {
                    m.set(x, y, s.data()[i] / sum);
                }
            }
        }
    }
    WeightMaps::new(maps)
}

/// Weighted combination of the sources, in the configured domain.
pub fn fuse_weighted(
    images: &[ImageF],
    weights: &WeightMaps,
    domain: FusionDomain,
) -> Result<ImageF> {
    if images.len() != weights.n_sources() {
        return Err(Error::invalid("image count must match weight maps"));
    }
    for img in images {
        weights.maps()[0].check_same_dims(img)?;
    }
    let (w, h) = (images[0].width(), images[0].height());
    match domain {
        FusionDomain::Pixel => {
            let mut out = ImageF::zeros(w, h);
            for i in 0..w * h {
                let v: f64 = images
                    .iter()
                    .zip(weights.maps())
                    .map(|(img, wm)| wm.data()[i] * img.data()[i])
                    .sum();
                let (x, y) = (i % w, i / w);
                out.set(x, y, v.clamp(0.0, 1.0));
            }
            Ok(out)
        }
        FusionDomain::Gradient => {
            let grads: Vec<GradientField> = images.iter().map(sobel_gradient).collect();
            let mut gx = ImageF::zeros(w, h);
            let mut gy = ImageF::zeros(w, h);
            for i in 0..w * h {
                let (x, y) = (i % w, i / w);
                let mut ax = 0.0;
                let mut ay = 0.0;
                for (g, wm) in grads.iter().zip(weights.maps()) {
                    ax += wm.data()[i] * g.gx.data()[i];
                    ay += wm.data()[i] * g.gy.data()[i];
                }
                gx.set(x, y, ax);
                gy.set(x, y, ay);
            }
            let anchor: f64 = images
                .iter()
                .zip(weights.maps())
                .map(|(img, wm)| {
                    img.data()
                        .iter()
                        .zip(wm.data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / (w * h) as f64
                })
                .sum();
            reconstruct_from_gradients(&GradientField { gx, gy }, anchor)
        }
    }
}

/// Runs the full five-step fusion pipeline and returns all intermediates.
pub fn mwgf_fuse(images: &[ImageF], config: &FusionConfig) -> Result<FusionResult> {
    config.validate()?;
    if images.len() < 2 {
        return Err(Error::invalid("fusion requires at least two source images"));
    }
    for img in &images[1..] {
        images[0].check_same_dims(img)?;
    }
    let (w, h) = (images[0].width(), images[0].height());
    let min_side = 4 * config.band_radius;
    if w < min_side || h < min_side {
        return Err(Error::invalid(format!(
            "images must be at least {min_side} pixels on a side for band_radius {}",
            config.band_radius
        )));
    }

    let saliency_large: Vec<ImageF> = images
        .iter()
        .map(|img| focus_saliency(img, config.sigma_large))
        .collect::<Result<_>>()?;
    let rough = detect_focus_regions(&saliency_large)?;
    let refined: Vec<BitMask> = rough
        .iter()
        .map(|m| refine_region(m, config.close_radius))
        .collect();
    let trimap = build_trimap(&refined, config.band_radius)?;
    let saliency_small: Vec<ImageF> = images
        .iter()
        .map(|img| focus_saliency(img, config.sigma_small))
        .collect::<Result<_>>()?;
    let weights = compute_weights(&trimap, &saliency_small)?;
    let fused = fuse_weighted(images, &weights, config.domain)?;
    Ok(FusionResult {
        fused,
        weights,
        trimap,
        saliency_large,
        saliency_small,
    })
}
