//! Comparison fusion methods: plain averaging, Laplacian pyramid, Haar
//! wavelet, PCA weighting, gradient pyramid, and filter-subtract pyramid.
//!
//! The pyramid/wavelet transforms here are exactly invertible, so fusing
//! an image with itself reproduces it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Average,
    Lap,
    Dwt,
    Pca,
    Gra,
    Fsd,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Average => "average",
            BaselineMethod::Lap => "lap",
            BaselineMethod::Dwt => "dwt",
            BaselineMethod::Pca => "pca",
            BaselineMethod::Gra => "gra",
            BaselineMethod::Fsd => "fsd",
        }
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "average" => BaselineMethod::Average,
            "lap" => BaselineMethod::Lap,
            "dwt" => BaselineMethod::Dwt,
            "pca" => BaselineMethod::Pca,
            "gra" => BaselineMethod::Gra,
            "fsd" => BaselineMethod::Fsd,
            other => return Err(Error::invalid(format!("unknown baseline method '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    pub levels: usize,
}

impl BaselineSpec {
    pub fn new(method: BaselineMethod) -> Self {
        Self { method, levels: 4 }
    }
}

const KERNEL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn blur5(img: &ImageF) -> ImageF {
    let (w, h) = (img.width(), img.height());
    let mut tmp = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &k) in KERNEL5.iter().enumerate() {
                acc += k * img.at_clamped(x as isize + i as isize - 2, y as isize);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &k) in KERNEL5.iter().enumerate() {
                acc += k * tmp.at_clamped(x as isize, y as isize + i as isize - 2);
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn downsample2(img: &ImageF) -> ImageF {
    let (w, h) = (img.width() / 2, img.height() / 2);
    let mut out = ImageF::zeros(w.max(1), h.max(1));
    for y in 0..out.height() {
        for x in 0..out.width() {
            out.set(x, y, img.at(2 * x, 2 * y));
        }
    }
    out
}

/// Zero-insert then convolve with the doubled 5-tap kernel.
fn upsample2(img: &ImageF, target_w: usize, target_h: usize) -> ImageF {
    let mut sparse = ImageF::zeros(target_w, target_h);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if 2 * x < target_w && 2 * y < target_h {
                sparse.set(2 * x, 2 * y, img.at(x, y));
            }
        }
    }
    let mut tmp = ImageF::zeros(target_w, target_h);
    for y in 0..target_h {
        for x in 0..target_w {
            let mut acc = 0.0;
            for (i, &k) in KERNEL5.iter().enumerate() {
                let sx = x as isize + i as isize - 2;
                if sx >= 0 && (sx as usize) < target_w {
                    acc += 2.0 * k * sparse.at(sx as usize, y);
                }
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = ImageF::zeros(target_w, target_h);
    for y in 0..target_h {
        for x in 0..target_w {
            let mut acc = 0.0;
            for (i, &k) in KERNEL5.iter().enumerate() {
                let sy = y as isize + i as isize - 2;
                if sy >= 0 && (sy as usize) < target_h {
                    acc += 2.0 * k * tmp.at(x, sy as usize);
                }
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn gaussian_pyramid(img: &ImageF, levels: usize) -> Vec<ImageF> {
    let mut pyr = vec![img.clone()];
    for _ in 0..levels {
        let next = downsample2(&blur5(pyr.last().unwrap()));
        pyr.push(next);
    }
    pyr
}

/// Band-pass details (finest first) plus the coarse residual.
pub fn laplacian_pyramid(img: &ImageF, levels: usize) -> (Vec<ImageF>, ImageF) {
    let gauss = gaussian_pyramid(img, levels);
    let mut details = Vec::with_capacity(levels);
    for i in 0..levels {
        let up = upsample2(&gauss[i + 1], gauss[i].width(), gauss[i].height());
        let mut d = gauss[i].clone();
        for (dv, uv) in d.data_mut().iter_mut().zip(up.data()) {
            *dv -= uv;
        }
        details.push(d);
    }
    (details, gauss[levels].clone())
}

pub fn laplacian_reconstruct(details: &[ImageF], coarse: &ImageF) -> ImageF {
    let mut cur = coarse.clone();
    for d in details.iter().rev() {
        let up = upsample2(&cur, d.width(), d.height());
        let mut next = d.clone();
        for (nv, uv) in next.data_mut().iter_mut().zip(up.data()) {
            *nv += uv;
        }
        cur = next;
    }
    cur
}

/// Undecimated filter-subtract pyramid: detail = level minus its 5-tap
/// smoothing, successive levels smoothed in place at full resolution.
/// Exactly invertible by summation.
pub fn fsd_pyramid(img: &ImageF, levels: usize) -> (Vec<ImageF>, ImageF) {
    let mut details = Vec::with_capacity(levels);
    let mut cur = img.clone();
    for _ in 0..levels {
        let smooth = blur5(&cur);
        let mut d = cur.clone();
        for (dv, sv) in d.data_mut().iter_mut().zip(smooth.data()) {
            *dv -= sv;
        }
        details.push(d);
        cur = smooth;
    }
    (details, cur)
}

pub fn fsd_reconstruct(details: &[ImageF], coarse: &ImageF) -> ImageF {
    let mut out = coarse.clone();
    for d in details {
        for (ov, dv) in out.data_mut().iter_mut().zip(d.data()) {
            *ov += dv;
        }
    }
    out
}

/// In-place 2D Haar transform with the LL quadrant recursed `levels`
/// times; orthonormal (1/sqrt(2)) filters.
pub fn haar_forward(img: &ImageF, levels: usize) -> ImageF {
    let mut out = img.clone();
    let (mut w, mut h) = (img.width(), img.height());
    for _ in 0..levels {
        haar_step_rows(&mut out, w, h);
        haar_step_cols(&mut out, w, h);
        w /= 2;
        h /= 2;
    }
    out
}

pub fn haar_inverse(coeffs: &ImageF, levels: usize) -> ImageF {
    let mut out = coeffs.clone();
    let mut dims = Vec::new();
    let (mut w, mut h) = (coeffs.width(), coeffs.height());
    for _ in 0..levels {
        dims.push((w, h));
        w /= 2;
        h /= 2;
    }
    for &(w, h) in dims.iter().rev() {
        haar_unstep_cols(&mut out, w, h);
        haar_unstep_rows(&mut out, w, h);
    }
    out
}

const SQRT1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn haar_step_rows(img: &mut ImageF, w: usize, h: usize) {
    let mut row = vec![0.0; w];
    for y in 0..h {
        for x in 0..w / 2 {
            let a = img.at(2 * x, y);
            let b = img.at(2 * x + 1, y);
            row[x] = (a + b) * SQRT1_2;
            row[w / 2 + x] = (a - b) * SQRT1_2;
        }
        for x in 0..w {
            img.set(x, y, row[x]);
        }
    }
}

fn haar_step_cols(img: &mut ImageF, w: usize, h: usize) {
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h / 2 {
            let a = img.at(x, 2 * y);
            let b = img.at(x, 2 * y + 1);
            col[y] = (a + b) * SQRT1_2;
            col[h / 2 + y] = (a - b) * SQRT1_2;
        }
        for y in 0..h {
            img.set(x, y, col[y]);
        }
    }
}

fn haar_unstep_rows(img: &mut ImageF, w: usize, h: usize) {
    let mut row = vec![0.0; w];
    for y in 0..h {
        for x in 0..w / 2 {
            let s = img.at(x, y);
            let d = img.at(w / 2 + x, y);
            row[2 * x] = (s + d) * SQRT1_2;
            row[2 * x + 1] = (s - d) * SQRT1_2;
        }
        for x in 0..w {
            img.set(x, y, row[x]);
        }
    }
}

fn haar_unstep_cols(img: &mut ImageF, w: usize, h: usize) {
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h / 2 {
            let s = img.at(x, y);
            let d = img.at(x, h / 2 + y);
            col[2 * y] = (s + d) * SQRT1_2;
            col[2 * y + 1] = (s - d) * SQRT1_2;
        }
        for y in 0..h {
            img.set(x, y, col[y]);
        }
    }
}

/// Global PCA weights from the 2x2 sample covariance; degenerate spectra
/// fall back to (0.5, 0.5).
pub fn pca_weights(a: &ImageF, b: &ImageF) -> (f64, f64) {
    let n = a.data().len() as f64;
    let (ma, mb) = (a.mean(), b.mean());
    let mut caa = 0.0;
    let mut cbb = 0.0;
    let mut cab = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        caa += (x - ma) * (x - ma);
        cbb += (y - mb) * (y - mb);
        cab += (x - ma) * (y - mb);
    }
    caa /= n;
    cbb /= n;
    cab /= n;
    let lambda = 0.5 * ((caa + cbb) + ((caa - cbb).powi(2) + 4.0 * cab * cab).sqrt());
    // eigenvector for the leading eigenvalue
    let (vx, vy) = if cab.abs() > 1e-15 {
        (cab, lambda - caa)
    } else if caa >= cbb {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let (ax, ay) = (vx.abs(), vy.abs());
    let sum = ax + ay;
    if !(sum > 1e-12) || caa + cbb < 1e-15 {
        return (0.5, 0.5);
    }
    (ax / sum, ay / sum)
}

fn replicate_pad(img: &ImageF, w: usize, h: usize) -> ImageF {
    let mut out = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, img.at(x.min(img.width() - 1), y.min(img.height() - 1)));
        }
    }
    out
}

fn crop(img: &ImageF, w: usize, h: usize) -> ImageF {
    let mut out = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, img.at(x, y));
        }
    }
    out
}

fn max_abs_select(a: &ImageF, b: &ImageF) -> ImageF {
    let mut out = a.clone();
    for (o, &bv) in out.data_mut().iter_mut().zip(b.data()) {
        if bv.abs() > o.abs() {
            *o = bv;
        }
    }
    out
}

fn average_images(a: &ImageF, b: &ImageF) -> ImageF {
    let mut out = a.clone();
    for (o, &bv) in out.data_mut().iter_mut().zip(b.data()) {
        *o = 0.5 * (*o + bv);
    }
    out
}

/// Sum of absolute derivatives in the four lattice directions, the
/// selection statistic for the gradient-pyramid method.
fn directional_activity(img: &ImageF) -> ImageF {
    let (w, h) = (img.width(), img.height());
    let mut out = ImageF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let c = img.at(x, y);
            let dh = img.at_clamped(xi + 1, yi) - c;
            let dv = img.at_clamped(xi, yi + 1) - c;
            let dd1 = img.at_clamped(xi + 1, yi + 1) - c;
            let dd2 = img.at_clamped(xi - 1, yi + 1) - c;
            out.set(x, y, dh.abs() + dv.abs() + dd1.abs() + dd2.abs());
        }
    }
    out
}

fn fuse_lap_like(a: &ImageF, b: &ImageF, levels: usize, gradient_statistic: bool) -> ImageF {
    let (da, ca) = laplacian_pyramid(a, levels);
    let (db, cb) = laplacian_pyramid(b, levels);
    let mut fused_details = Vec::with_capacity(levels);
    if gradient_statistic {
        let ga = gaussian_pyramid(a, levels);
        let gb = gaussian_pyramid(b, levels);
        for i in 0..levels {
            let acta = directional_activity(&ga[i]);
            let actb = directional_activity(&gb[i]);
            let mut d = da[i].clone();
            for j in 0..d.data().len() {
                if actb.data()[j] > acta.data()[j] {
                    d.data_mut()[j] = db[i].data()[j];
                }
            }
            fused_details.push(d);
        }
    } else {
        for i in 0..levels {
            fused_details.push(max_abs_select(&da[i], &db[i]));
        }
    }
    laplacian_reconstruct(&fused_details, &average_images(&ca, &cb))
}

fn fuse_dwt(a: &ImageF, b: &ImageF, levels: usize) -> ImageF {
    let ca = haar_forward(a, levels);
    let cb = haar_forward(b, levels);
    let (w, h) = (ca.width(), ca.height());
    let (ll_w, ll_h) = (w >> levels, h >> levels);
    let mut fused = max_abs_select(&ca, &cb);
    for y in 0..ll_h {
        for x in 0..ll_w {
            fused.set(x, y, 0.5 * (ca.at(x, y) + cb.at(x, y)));
        }
    }
    haar_inverse(&fused, levels)
}

fn fuse_fsd(a: &ImageF, b: &ImageF, levels: usize) -> ImageF {
    let (da, ca) = fsd_pyramid(a, levels);
    let (db, cb) = fsd_pyramid(b, levels);
    let fused: Vec<ImageF> = da
        .iter()
        .zip(&db)
        .map(|(x, y)| max_abs_select(x, y))
        .collect();
    fsd_reconstruct(&fused, &average_images(&ca, &cb))
}

/// Fuses two registered images with the chosen comparison method.
pub fn baseline_fuse(a: &ImageF, b: &ImageF, spec: &BaselineSpec) -> Result<ImageF> {
    a.check_same_dims(b)?;
    if spec.levels < 1 {
        return Err(Error::invalid("levels must be >= 1"));
    }
    let (w, h) = (a.width(), a.height());
    let needs_pyramid = !matches!(spec.method, BaselineMethod::Average | BaselineMethod::Pca);
    if needs_pyramid {
        let max_levels = (w.min(h) as f64).log2().floor() as usize;
        if spec.levels > max_levels {
            return Err(Error::invalid(format!(
                "levels {} too deep for {}x{} (max {})",
                spec.levels, w, h, max_levels
            )));
        }
    }

    let fused = match spec.method {
        BaselineMethod::Average => average_images(a, b),
        BaselineMethod::Pca => {
            let (wa, wb) = pca_weights(a, b);
            let mut out = a.clone();
            for (o, &bv) in out.data_mut().iter_mut().zip(b.data()) {
                *o = wa * *o + wb * bv;
            }
            out
        }
        method => {
            let block = 1usize << spec.levels;
            let pw = w.div_ceil(block) * block;
            let ph = h.div_ceil(block) * block;
            let (pa, pb) = if (pw, ph) == (w, h) {
                (a.clone(), b.clone())
            } else {
                (replicate_pad(a, pw, ph), replicate_pad(b, pw, ph))
            };
            let full = match method {
                BaselineMethod::Lap => fuse_lap_like(&pa, &pb, spec.levels, false),
                BaselineMethod::Gra => fuse_lap_like(&pa, &pb, spec.levels, true),
                BaselineMethod::Dwt => fuse_dwt(&pa, &pb, spec.levels),
                BaselineMethod::Fsd => fuse_fsd(&pa, &pb, spec.levels),
                _ => unreachable!(),
            };
            crop(&full, w, h)
        }
    };
    Ok(fused.clamped_unit())
}
