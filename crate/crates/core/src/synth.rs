//! Synthetic defocus oracle: seeded ground-truth scenes, depth-dependent
//! blur rendering, and depth-of-field sharpness curves.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{gaussian_blur, gradient_magnitude, sobel_gradient};
use crate::io::{load_image, save_image, BitDepth};
use crate::mwgf::{mwgf_fuse, FusionConfig};
use crate::raster::ImageF;

pub const SIGMA_MAX: f64 = 4.0;
const SIGMA_LEVELS: usize = 9;
/// "In focus" threshold: sharpness at or above this fraction of the peak.
pub const IN_FOCUS_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    TwoPlane,
    Vessels,
    Clocks,
    /// Vertical depth staircase, 0 to 200 um; gives dof curves enough
    /// probe depths to trace a profile.
    Ladder,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "two_plane" => SceneKind::TwoPlane,
            "vessels" => SceneKind::Vessels,
            "clocks" => SceneKind::Clocks,
            "ladder" => SceneKind::Ladder,
            other => return Err(Error::invalid(format!("unknown scene kind '{other}'"))),
        })
    }
}

/// All-in-focus ground truth plus per-pixel depth in micrometers.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gt: ImageF,
    pub depth_um: ImageF,
}

impl Scene {
    pub fn new(gt: ImageF, depth_um: ImageF) -> Result<Self> {
        gt.check_same_dims(&depth_um)?;
        if !depth_um.data().iter().all(|&d| d.is_finite() && d >= 0.0) {
            return Err(Error::invalid("depths must be finite and >= 0"));
        }
        Ok(Self { gt, depth_um })
    }

    /// Sorted distinct depth values present in the scene.
    pub fn distinct_depths(&self) -> Vec<f64> {
        let mut ds: Vec<f64> = self.depth_um.data().to_vec();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ds.dedup();
        ds
    }
}

fn band_limited_noise(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageF {
    let noise = ImageF::new(w, h, (0..w * h).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let smooth = gaussian_blur(&noise, 1.2).unwrap();
    let lo = smooth.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = smooth.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // full-contrast so that defocus blur narrows the histogram, as it does
    // for natural in-focus/out-of-focus pairs
    smooth.map(|v| 0.02 + 0.96 * (v - lo) / (hi - lo))
}

fn draw_disk(img: &mut ImageF, cx: f64, cy: f64, r: f64, value: f64) {
    let (w, h) = (img.width(), img.height());
    let x0 = ((cx - r).floor().max(0.0)) as usize;
    let x1 = ((cx + r).ceil().min(w as f64 - 1.0)) as usize;
    let y0 = ((cy - r).floor().max(0.0)) as usize;
    let y1 = ((cy + r).ceil().min(h as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                img.set(x, y, value);
            }
        }
    }
}

fn draw_line(img: &mut ImageF, x0: f64, y0: f64, x1: f64, y1: f64, value: f64, thickness: f64) {
    let len = ((x1 - x0).hypot(y1 - y0)).max(1.0);
    let steps = (len * 2.0).ceil() as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        draw_disk(img, x0 + t * (x1 - x0), y0 + t * (y1 - y0), thickness, value);
    }
}

fn add_random_lines(rng: &mut ChaCha8Rng, img: &mut ImageF, count: usize) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    for _ in 0..count {
        let x0 = rng.gen::<f64>() * w;
        let y0 = rng.gen::<f64>() * h;
        let x1 = rng.gen::<f64>() * w;
        let y1 = rng.gen::<f64>() * h;
        let v = if rng.gen_bool(0.5) { 0.95 } else { 0.05 };
        draw_line(img, x0, y0, x1, y1, v, 0.8);
    }
}

fn draw_clock(rng: &mut ChaCha8Rng, img: &mut ImageF, cx: f64, cy: f64, r: f64) {
    draw_disk(img, cx, cy, r, 0.95);
    draw_disk(img, cx, cy, r * 0.9, 0.2);
    // tick marks
    for i in 0..12 {
        let a = i as f64 * std::f64::consts::TAU / 12.0;
        let (s, c) = a.sin_cos();
        draw_line(
            img,
            cx + 0.75 * r * c,
            cy + 0.75 * r * s,
            cx + 0.88 * r * c,
            cy + 0.88 * r * s,
            0.9,
            0.7,
        );
    }
    // hands at seeded angles
    for (frac, len) in [(rng.gen::<f64>(), 0.5), (rng.gen::<f64>(), 0.8)] {
        let a = frac * std::f64::consts::TAU;
        let (s, c) = a.sin_cos();
        draw_line(img, cx, cy, cx + len * r * c, cy + len * r * s, 0.9, 0.9);
    }
}

/// Deterministic seeded scene generation.
pub fn make_scene(kind: SceneKind, width: usize, height: usize, seed: u64) -> Result<Scene> {
    if width < 64 || height < 64 {
        return Err(Error::invalid("scenes must be at least 64x64"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SceneKind::TwoPlane => {
            let mut gt = band_limited_noise(&mut rng, width, height);
            add_random_lines(&mut rng, &mut gt, width / 16);
            let mut depth = ImageF::zeros(width, height);
            for y in 0..height {
                for x in width / 2..width {
                    depth.set(x, y, 100.0);
                }
            }
            Scene::new(gt, depth)
        }
        SceneKind::Vessels => {
            let mut gt = ImageF::constant(width, height, 0.05);
            let mut depth = ImageF::zeros(width, height);
            let n_vessels = 14;
            for _ in 0..n_vessels {
                // snapped to f32 so the raw depth block round-trips exactly
                let d = (rng.gen::<f64>() * 200.0) as f32 as f64;
                let brightness = 0.7 + 0.3 * rng.gen::<f64>();
                let mut x = rng.gen::<f64>() * width as f64;
                let mut y = rng.gen::<f64>() * height as f64;
                let mut angle = rng.gen::<f64>() * std::f64::consts::TAU;
                let steps = (width + height) / 2;
                for _ in 0..steps {
                    angle += (rng.gen::<f64>() - 0.5) * 0.5;
                    let nx = x + angle.cos() * 2.0;
                    let ny = y + angle.sin() * 2.0;
                    draw_line(&mut gt, x, y, nx, ny, brightness, 1.2);
                    draw_line(&mut depth, x, y, nx, ny, d, 1.2);
                    x = nx;
                    y = ny;
                    if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                        break;
                    }
                }
            }
            Scene::new(gt, depth)
        }
        SceneKind::Clocks => {
            let mut gt = band_limited_noise(&mut rng, width, height);
            add_random_lines(&mut rng, &mut gt, width / 24);
            let r_front = width.min(height) as f64 * 0.22;
            let r_back = width.min(height) as f64 * 0.17;
            draw_clock(&mut rng, &mut gt, width as f64 * 0.28, height as f64 * 0.62, r_front);
            draw_clock(&mut rng, &mut gt, width as f64 * 0.72, height as f64 * 0.34, r_back);
            // fine-grained texture over everything: flat regions would turn
            // defocus blur into a histogram-spreading (entropy-raising)
            // operation, which no natural in-focus image exhibits
            let grain =
                ImageF::new(width, height, (0..width * height).map(|_| rng.gen::<f64>()).collect())
                    .unwrap();
            let grain = gaussian_blur(&grain, 0.6).unwrap();
            for y in 0..height {
                for x in 0..width {
                    let v = gt.at(x, y) + 0.35 * (grain.at(x, y) - 0.5);
                    gt.set(x, y, v.clamp(0.0, 1.0));
                }
            }
            let mut depth = ImageF::zeros(width, height);
            for y in 0..height {
                for x in width / 2..width {
                    depth.set(x, y, 100.0);
                }
            }
            Scene::new(gt, depth)
        }
        SceneKind::Ladder => {
            let mut gt = band_limited_noise(&mut rng, width, height);
            add_random_lines(&mut rng, &mut gt, width / 12);
            let steps = 11usize;
            let mut depth = ImageF::zeros(width, height);
            for y in 0..height {
                for x in 0..width {
                    let band = (x * steps / width).min(steps - 1);
                    depth.set(x, y, band as f64 * 20.0);
                }
            }
            Scene::new(gt, depth)
        }
    }
}

fn sigma_at(depth: f64, focus_z: f64, dof: f64) -> f64 {
    SIGMA_MAX * ((depth - focus_z).abs() / dof).min(1.0)
}

/// Renders the scene as seen with the focus at `focus_z`: a spatially
/// varying Gaussian blur approximated by linear interpolation between
/// uniformly blurred layers at nine sigma levels.
pub fn defocus_render(scene: &Scene, focus_z: f64, dof: f64) -> Result<ImageF> {
    if !(dof > 0.0 && dof.is_finite()) {
        return Err(Error::invalid("dof must be finite and > 0"));
    }
    let (w, h) = (scene.gt.width(), scene.gt.height());
    let step = SIGMA_MAX / (SIGMA_LEVELS - 1) as f64;

    // per-pixel level interpolation coordinates
    let mut level_lo = vec![0usize; w * h];
    let mut frac = vec![0f64; w * h];
    let mut used = [false; SIGMA_LEVELS];
    for i in 0..w * h {
        let sigma = sigma_at(scene.depth_um.data()[i], focus_z, dof);
        let pos = sigma / step;
        let lo = (pos.floor() as usize).min(SIGMA_LEVELS - 2);
        level_lo[i] = lo;
        frac[i] = (pos - lo as f64).clamp(0.0, 1.0);
        used[lo] = true;
        if frac[i] > 0.0 {
            used[lo + 1] = true;
        }
    }

    let mut layers: Vec<Option<ImageF>> = vec![None; SIGMA_LEVELS];
    for (lvl, flag) in used.iter().enumerate() {
        if *flag {
            layers[lvl] = Some(gaussian_blur(&scene.gt, lvl as f64 * step)?);
        }
    }

    let mut out = ImageF::zeros(w, h);
    for i in 0..w * h {
        let lo = level_lo[i];
        let t = frac[i];
        let a = layers[lo].as_ref().unwrap().data()[i];
        let v = if t > 0.0 {
            let b = layers[lo + 1].as_ref().unwrap().data()[i];
            (1.0 - t) * a + t * b
        } else {
            a
        };
        let (x, y) = (i % w, i / w);
        out.set(x, y, v);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofFuse {
    None,
    Mwgf,
}

/// One rendered acquisition request: focus position and system DoF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub focus_z_um: f64,
    pub dof_um: f64,
}

/// Per-probe-depth sharpness (mean Sobel magnitude on the 0-255 scale
/// restricted to pixels at that depth) of the single acquisition or of
/// the fused image.
pub fn dof_curve(
    scene: &Scene,
    acquisitions: &[AcquisitionSpec],
    fuse: DofFuse,
    probe_depths: &[f64],
    config: &FusionConfig,
) -> Result<Vec<(f64, f64)>> {
    if probe_depths.is_empty() {
        return Err(Error::invalid("probe depth list is empty"));
    }
    if acquisitions.is_empty() {
        return Err(Error::invalid("need at least one acquisition spec"));
    }
    let rendered: Vec<ImageF> = acquisitions
        .iter()
        .map(|a| defocus_render(scene, a.focus_z_um, a.dof_um))
        .collect::<Result<_>>()?;
    let eval = match fuse {
        DofFuse::None => {
            if rendered.len() != 1 {
                return Err(Error::invalid(
                    "fuse=none expects exactly one acquisition spec",
                ));
            }
            rendered[0].clone()
        }
        DofFuse::Mwgf => {
            if rendered.len() < 2 {
                return Err(Error::invalid("fuse=mwgf needs at least two acquisitions"));
            }
            mwgf_fuse(&rendered, config)?.fused
        }
    };
    let mag = gradient_magnitude(&sobel_gradient(&eval));
    let mut series = Vec::with_capacity(probe_depths.len());
    for &probe in probe_depths {
        let mut acc = 0.0;
        let mut count = 0usize;
        for (i, &d) in scene.depth_um.data().iter().enumerate() {
            if (d - probe).abs() < 1e-6 {
                acc += mag.data()[i];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid(format!(
                "no scene pixels at probe depth {probe} um"
            )));
        }
        series.push((probe, acc / count as f64 * 255.0));
    }
    Ok(series)
}

/// Number of probe depths whose sharpness reaches the in-focus fraction
/// of the series peak.
pub fn in_focus_support(series: &[(f64, f64)]) -> usize {
    let peak = series.iter().map(|&(_, s)| s).fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return 0;
    }
    series
        .iter()
        .filter(|&&(_, s)| s >= IN_FOCUS_FRACTION * peak)
        .count()
}

/// On-disk scene layout: ground-truth PNG, raw f32 depth block, manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub width: usize,
    pub height: usize,
    pub gt: PathBuf,
    pub depth_raw: PathBuf,
    pub dof_um: f64,
    pub kind: SceneKind,
    pub seed: u64,
}

pub fn export_scene(
    scene: &Scene,
    dir: impl AsRef<Path>,
    dof_um: f64,
    kind: SceneKind,
    seed: u64,
) -> Result<SceneManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_image(&scene.gt, dir.join("gt.png"), BitDepth::Sixteen)?;
    let mut bytes = Vec::with_capacity(scene.depth_um.data().len() * 4);
    for &d in scene.depth_um.data() {
        bytes.extend_from_slice(&(d as f32).to_le_bytes());
    }
    let depth_path = dir.join("depth.raw");
    fs::write(&depth_path, bytes).map_err(|e| Error::io(&depth_path, e))?;
    let manifest = SceneManifest {
        width: scene.gt.width(),
        height: scene.gt.height(),
        gt: PathBuf::from("gt.png"),
        depth_raw: PathBuf::from("depth.raw"),
        dof_um,
        kind,
        seed,
    };
    let mp = dir.join("scene.json");
    fs::write(&mp, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&mp, e))?;
    Ok(manifest)
}

pub fn load_scene(dir: impl AsRef<Path>) -> Result<(Scene, SceneManifest)> {
    let dir = dir.as_ref();
    let mp = dir.join("scene.json");
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: SceneManifest = serde_json::from_str(&text)?;
    let gt = load_image(dir.join(&manifest.gt))?;
    if gt.width() != manifest.width || gt.height() != manifest.height {
        return Err(Error::Manifest("scene gt dimensions mismatch".into()));
    }
    let depth_path = dir.join(&manifest.depth_raw);
    let bytes = fs::read(&depth_path).map_err(|e| Error::io(&depth_path, e))?;
    if bytes.len() != 4 * manifest.width * manifest.height {
        return Err(Error::Manifest("scene depth block size mismatch".into()));
    }
    let depths: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let depth_um = ImageF::new(manifest.width, manifest.height, depths)?;
    Ok((Scene::new(gt, depth_um)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{mse, std_dev};

    #[test]
    fn scene_determinism() {
        for kind in [
            SceneKind::TwoPlane,
            SceneKind::Vessels,
            SceneKind::Clocks,
            SceneKind::Ladder,
        ] {
            let a = make_scene(kind, 96, 96, 7).unwrap();
            let b = make_scene(kind, 96, 96, 7).unwrap();
            assert_eq!(a, b);
            let c = make_scene(kind, 96, 96, 8).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn two_plane_depth_histogram() {
        let s = make_scene(SceneKind::TwoPlane, 80, 64, 1).unwrap();
        assert_eq!(s.distinct_depths(), vec![0.0, 100.0]);
    }

    #[test]
    fn vessels_have_texture() {
        let s = make_scene(SceneKind::Vessels, 128, 128, 2).unwrap();
        assert!(std_dev(&s.gt) > 10.0);
    }

    #[test]
    fn too_small_scene_is_error() {
        assert!(make_scene(SceneKind::TwoPlane, 32, 128, 0).is_err());
    }

    #[test]
    fn render_in_focus_everywhere_equals_gt() {
        let s = make_scene(SceneKind::TwoPlane, 64, 64, 3).unwrap();
        let flat = Scene::new(s.gt.clone(), ImageF::constant(64, 64, 40.0)).unwrap();
        let r = defocus_render(&flat, 40.0, 120.0).unwrap();
        assert_eq!(r, flat.gt);
    }

    #[test]
    fn render_of_constant_gt_is_constant() {
        let depth = make_scene(SceneKind::TwoPlane, 64, 64, 3).unwrap().depth_um;
        let flat = Scene::new(ImageF::constant(64, 64, 0.42), depth).unwrap();
        let r = defocus_render(&flat, 0.0, 120.0).unwrap();
        for &v in r.data() {
            assert!((v - 0.42).abs() < 1e-9);
        }
    }

    #[test]
    fn two_plane_render_matches_per_region_blur() {
        let s = make_scene(SceneKind::TwoPlane, 96, 96, 4).unwrap();
        // dof chosen so the far plane lands exactly on a sigma level:
        // sigma = 4 * min(1, 100/100) = 4.0, the top layer
        let r = defocus_render(&s, 0.0, 100.0).unwrap();
        let blurred = gaussian_blur(&s.gt, SIGMA_MAX).unwrap();
        for y in 0..96 {
            for x in 0..96 {
                if x < 48 {
                    assert!((r.at(x, y) - s.gt.at(x, y)).abs() < 1e-6);
                } else {
                    assert!((r.at(x, y) - blurred.at(x, y)).abs() < 1e-6);
                }
            }
        }
        // off-level sigma (100/120 * 4 = 3.33): interpolated blur stays
        // close to the exact kernel
        let r2 = defocus_render(&s, 0.0, 120.0).unwrap();
        let exact = gaussian_blur(&s.gt, sigma_at(100.0, 0.0, 120.0)).unwrap();
        let mut acc = 0.0;
        let mut n = 0;
        for y in 0..96 {
            for x in 48..96 {
                acc += (r2.at(x, y) - exact.at(x, y)).powi(2);
                n += 1;
            }
        }
        assert!((acc / n as f64).sqrt() < 0.02);
    }

    #[test]
    fn huge_dof_renders_gt() {
        let s = make_scene(SceneKind::Ladder, 96, 64, 5).unwrap();
        let r = defocus_render(&s, 0.0, 1e9).unwrap();
        // sigma is ~1e-6 rather than exactly zero, so the render mixes in a
        // sliver of the first blurred layer; tolerance sized accordingly
        for (a, b) in r.data().iter().zip(s.gt.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn render_error_grows_with_focal_offset() {
        let s = make_scene(SceneKind::TwoPlane, 96, 96, 6).unwrap();
        let mut prev = -1.0;
        for offset in [0.0, 30.0, 60.0, 90.0] {
            // move the focus away from the far plane; evaluate over the
            // off-focus (right) half only
            let r = defocus_render(&s, 100.0 + offset, 120.0).unwrap();
            let mut gt_right = Vec::new();
            let mut r_right = Vec::new();
            for y in 0..96 {
                for x in 0..48 {
                    gt_right.push(s.gt.at(x, y));
                    r_right.push(r.at(x, y));
                }
            }
            let a = ImageF::new(48, 96, gt_right).unwrap();
            let b = ImageF::new(48, 96, r_right).unwrap();
            let e = mse(&a, &b).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn dof_curve_single_focus_peaks_at_focus_and_decays() {
        let s = make_scene(SceneKind::Ladder, 128, 96, 9).unwrap();
        let probes: Vec<f64> = (0..11).map(|i| i as f64 * 20.0).collect();
        let spec = AcquisitionSpec {
            focus_z_um: 0.0,
            dof_um: 120.0,
        };
        let series = dof_curve(&s, &[spec], DofFuse::None, &probes, &FusionConfig::default())
            .unwrap();
        // normalise by the all-in-focus sharpness of each stripe so that
        // texture differences between stripes drop out of the comparison
        let sharp = AcquisitionSpec {
            focus_z_um: 0.0,
            dof_um: 1e9,
        };
        let reference = dof_curve(&s, &[sharp], DofFuse::None, &probes, &FusionConfig::default())
            .unwrap();
        let ratios: Vec<(f64, f64)> = series
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a.0, a.1 / b.1))
            .collect();
        let peak_depth = ratios
            .iter()
            .cloned()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak_depth, 0.0);
        // sigma grows with |probe - focus| until it saturates at the dof;
        // decay is only expected over the unsaturated range, the tail just
        // has to stay below the shoulder
        let shoulder = ratios.iter().position(|r| r.0 >= spec.dof_um).unwrap();
        for w in ratios[..=shoulder].windows(2) {
            assert!(
                w[1].1 <= w[0].1 * 1.02 + 1e-9,
                "relative sharpness must decay with |probe - focus|: {ratios:?}"
            );
        }
        for r in &ratios[shoulder..] {
            // the border stripe reads a little sharp through replicate
            // padding, hence the wider margin here
            assert!(r.1 <= ratios[shoulder - 1].1 * 1.1, "tail above shoulder: {ratios:?}");
        }
    }

    #[test]
    fn dof_curve_unknown_probe_is_error() {
        let s = make_scene(SceneKind::TwoPlane, 64, 64, 10).unwrap();
        let spec = AcquisitionSpec {
            focus_z_um: 0.0,
            dof_um: 120.0,
        };
        let err = dof_curve(&s, &[spec], DofFuse::None, &[55.0], &FusionConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("55"));
    }

    #[test]
    fn scene_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_scene(SceneKind::Vessels, 72, 64, 11).unwrap();
        export_scene(&s, dir.path(), 120.0, SceneKind::Vessels, 11).unwrap();
        let (back, manifest) = load_scene(dir.path()).unwrap();
        assert_eq!(manifest.dof_um, 120.0);
        assert_eq!(back.depth_um, s.depth_um, "raw depth block is exact");
        for (a, b) in back.gt.data().iter().zip(s.gt.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-9);
        }
    }
}
