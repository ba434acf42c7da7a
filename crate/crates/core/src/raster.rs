//! Core raster types shared by the whole pipeline.
//!
//! All images are single-channel, row-major, `f64` samples. Source images
//! live in `[0,1]`; derived rasters (gradient magnitudes, saliency maps)
//! may exceed that range and are only required to be finite.

use crate::error::{Error, Result};

/// Single-channel 2D raster of finite intensity samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be >= 1"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "sample count {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("image contains non-finite samples"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    /// Sample with replicate (clamp-to-edge) border handling.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn same_dims(&self, other: &ImageF) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_dims(&self, other: &ImageF) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: other.width,
                got_h: other.height,
            })
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageF {
        ImageF {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped_unit(&self) -> ImageF {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Checks the source-image invariant: every sample in [0,1].
    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask dimensions must be >= 1"));
        }
        if bits.len() != width * height {
            return Err(Error::invalid("bit count does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, other: &BitMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// True if every set bit of `self` is also set in `other`.
    pub fn subset_of(&self, other: &BitMask) -> bool {
        self.same_dims(other)
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| !a || b)
    }
}

/// Connected-component labeling: 0 is background, components are 1..=K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    num_labels: u32,
}

impl LabelMap {
    pub(crate) fn from_parts(width: usize, height: usize, labels: Vec<u32>, num_labels: u32) -> Self {
        debug_assert_eq!(labels.len(), width * height);
        Self {
            width,
            height,
            labels,
            num_labels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Number of components K; labels used are exactly {0, 1, .., K}.
    pub fn num_labels(&self) -> u32 {
        self.num_labels
    }
}

/// Per-pixel horizontal and vertical derivatives, in intensity per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gx: ImageF,
    pub gy: ImageF,
}

impl GradientField {
    pub fn new(gx: ImageF, gy: ImageF) -> Result<Self> {
        gx.check_same_dims(&gy)?;
        Ok(Self { gx, gy })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.gx.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.gx.height()
    }
}
