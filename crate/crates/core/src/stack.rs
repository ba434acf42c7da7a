//! Focal-stack processing: volume ingestion, max-amplitude projection,
//! depth-coded rendering, and fusion of multiple focal acquisitions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_image, save_image, BitDepth};
use crate::mwgf::{mwgf_fuse, FusionConfig, FusionResult};
use crate::raster::ImageF;

/// 3D amplitude grid with physical depth spacing. Index order: x fastest,
/// then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    nx: usize,
    ny: usize,
    nz: usize,
    dz_um: f64,
    amplitudes: Vec<f64>,
}

impl Volume {
    pub fn new(nx: usize, ny: usize, nz: usize, dz_um: f64, amplitudes: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid("volume dimensions must be >= 1"));
        }
        if !(dz_um > 0.0 && dz_um.is_finite()) {
            return Err(Error::invalid("dz must be > 0"));
        }
        if amplitudes.len() != nx * ny * nz {
            return Err(Error::invalid("amplitude count does not match dimensions"));
        }
        if !amplitudes.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid("amplitudes must be finite and >= 0"));
        }
        Ok(Self {
            nx,
            ny,
            nz,
            dz_um,
            amplitudes,
        })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn nz(&self) -> usize {
        self.nz
    }

    #[inline]
    pub fn dz_um(&self) -> f64 {
        self.dz_um
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.amplitudes[x + self.nx * (y + self.ny * z)]
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
}

/// Per-pixel depth index of the projection maximum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    nx: usize,
    ny: usize,
    z_index: Vec<u16>,
}

impl DepthMap {
    pub fn new(nx: usize, ny: usize, z_index: Vec<u16>) -> Result<Self> {
        if z_index.len() != nx * ny {
            return Err(Error::invalid("depth map size mismatch"));
        }
        Ok(Self { nx, ny, z_index })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.z_index[y * self.nx + x]
    }

    pub fn indices(&self) -> &[u16] {
        &self.z_index
    }
}

/// On-disk description of one focal acquisition: either per-slice image
/// files or a single raw little-endian f32 block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackManifest {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dz_um: f64,
    pub focal_depth_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
    #[serde(default = "default_amplitude_scale")]
    pub amplitude_scale: f64,
}

fn default_amplitude_scale() -> f64 {
    1.0
}

/// Loads a volume from a manifest file; slice or raw paths are resolved
/// relative to the manifest location.
pub fn load_volume(manifest_path: impl AsRef<Path>) -> Result<(Volume, StackManifest)> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: StackManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let volume = load_volume_from_manifest(&manifest, base)?;
    Ok((volume, manifest))
}

pub fn load_volume_from_manifest(manifest: &StackManifest, base: &Path) -> Result<Volume> {
    if !(manifest.amplitude_scale > 0.0) {
        return Err(Error::Manifest("amplitude_scale must be > 0".into()));
    }
    let n = manifest.nx * manifest.ny * manifest.nz;
    let scale = manifest.amplitude_scale;
    let amplitudes: Vec<f64> = match (&manifest.slices, &manifest.raw) {
        (Some(slices), None) => {
            if slices.len() != manifest.nz {
                return Err(Error::Manifest(format!(
                    "manifest declares nz={} but lists {} slices",
                    manifest.nz,
                    slices.len()
                )));
            }
            let mut amps = Vec::with_capacity(n);
            for (z, rel) in slices.iter().enumerate() {
                let path = base.join(rel);
                let img = load_image(&path).map_err(|e| {
                    Error::Manifest(format!("slice {z} ({}): {e}", rel.display()))
                })?;
                if img.width() != manifest.nx || img.height() != manifest.ny {
                    return Err(Error::Manifest(format!(
                        "slice {z} ({}): {}x{} does not match {}x{}",
                        rel.display(),
                        img.width(),
                        img.height(),
                        manifest.nx,
                        manifest.ny
                    )));
                }
                amps.extend(img.data().iter().map(|&v| (v / scale).clamp(0.0, 1.0)));
            }
            amps
        }
        (None, Some(raw)) => {
            let path = base.join(raw);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != 4 * n {
                return Err(Error::Manifest(format!(
                    "raw block {} has {} bytes, expected {}",
                    raw.display(),
                    bytes.len(),
                    4 * n
                )));
            }
            bytes
                .chunks_exact(4)
                .map(|c| {
                    let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
                    (v / scale).clamp(0.0, 1.0)
                })
                .collect()
        }
        _ => {
            return Err(Error::Manifest(
                "manifest must provide exactly one of 'slices' or 'raw'".into(),
            ))
        }
    };
    Volume::new(manifest.nx, manifest.ny, manifest.nz, manifest.dz_um, amplitudes)
}

/// Writes a volume as a raw f32 block plus its manifest.
pub fn save_volume_raw(
    volume: &Volume,
    focal_depth_um: f64,
    manifest_path: impl AsRef<Path>,
    raw_name: &str,
) -> Result<StackManifest> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let raw_path = base.join(raw_name);
    let mut bytes = Vec::with_capacity(volume.amplitudes.len() * 4);
    for &v in &volume.amplitudes {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let manifest = StackManifest {
        nx: volume.nx,
        ny: volume.ny,
        nz: volume.nz,
        dz_um: volume.dz_um,
        focal_depth_um,
        slices: None,
        raw: Some(PathBuf::from(raw_name)),
        amplitude_scale: 1.0,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

/// Writes a volume as per-slice 8-bit PNGs plus its manifest.
pub fn save_volume_slices(
    volume: &Volume,
    focal_depth_um: f64,
    manifest_path: impl AsRef<Path>,
    slice_prefix: &str,
) -> Result<StackManifest> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut slices = Vec::with_capacity(volume.nz);
    for z in 0..volume.nz {
        let name = format!("{slice_prefix}{z:04}.png");
        let start = volume.nx * volume.ny * z;
        let img = ImageF::new(
            volume.nx,
            volume.ny,
            volume.amplitudes[start..start + volume.nx * volume.ny].to_vec(),
        )?;
        save_image(&img, base.join(&name), BitDepth::Eight)?;
        slices.push(PathBuf::from(name));
    }
    let manifest = StackManifest {
        nx: volume.nx,
        ny: volume.ny,
        nz: volume.nz,
        dz_um: volume.dz_um,
        focal_depth_um,
        slices: Some(slices),
        raw: None,
        amplitude_scale: 1.0,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

/// Max amplitude projection along z with the smallest attaining index.
pub fn map_projection(vol: &Volume) -> (ImageF, DepthMap) {
    let (nx, ny, nz) = (vol.nx, vol.ny, vol.nz);
    let mut map = ImageF::zeros(nx, ny);
    let mut depth = vec![0u16; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let mut best = vol.at(x, y, 0);
            let mut best_z = 0usize;
            for z in 1..nz {
                let v = vol.at(x, y, z);
                if v > best {
                    best = v;
                    best_z = z;
                }
            }
            map.set(x, y, best);
            depth[y * nx + x] = best_z as u16;
        }
    }
    (map, DepthMap::new(nx, ny, depth).expect("sized"))
}

/// Seven-anchor blue-to-red colormap, evaluated at t in [0,1].
const COLOR_ANCHORS: [[f64; 3]; 7] = [
    [0.0, 0.0, 255.0],
    [0.0, 128.0, 255.0],
    [0.0, 255.0, 255.0],
    [0.0, 255.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 128.0, 0.0],
    [255.0, 0.0, 0.0],
];

pub fn depth_colormap(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0) * 6.0;
    let i = (t.floor() as usize).min(5);
    let f = t - i as f64;
    let a = COLOR_ANCHORS[i];
    let b = COLOR_ANCHORS[i + 1];
    [
        a[0] + f * (b[0] - a[0]),
        a[1] + f * (b[1] - a[1]),
        a[2] + f * (b[2] - a[2]),
    ]
}

/// Depth-coded rendering: hue from depth, brightness from amplitude.
/// Returns interleaved 8-bit RGB.
pub fn depth_code(map: &ImageF, depth: &DepthMap, nz: usize) -> Result<Vec<u8>> {
    if map.width() != depth.nx() || map.height() != depth.ny() {
        return Err(Error::DimensionMismatch {
            expected_w: map.width(),
            expected_h: map.height(),
            got_w: depth.nx(),
            got_h: depth.ny(),
        });
    }
    let mut rgb = Vec::with_capacity(map.data().len() * 3);
    for (i, &amp) in map.data().iter().enumerate() {
        let z = depth.indices()[i] as f64;
        let t = if nz > 1 { z / (nz - 1) as f64 } else { 0.0 };
        let c = depth_colormap(t);
        let a = amp.clamp(0.0, 1.0);
        for ch in c {
            rgb.push((ch * a).round() as u8);
        }
    }
    Ok(rgb)
}

/// One registered focal acquisition ready for fusion.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub map: ImageF,
    pub depth: DepthMap,
    pub nz: usize,
    pub dz_um: f64,
    pub focal_depth_um: f64,
}

#[derive(Debug)]
pub struct FusedStack {
    pub map: ImageF,
    pub depth: DepthMap,
    pub rgb: Vec<u8>,
    pub nz: usize,
    pub fusion: FusionResult,
}

/// Fuses the MAP images of several acquisitions; the fused depth at each
/// pixel comes from the acquisition with the largest fusion weight (ties
/// to the lowest index).
pub fn fuse_stacks(acquisitions: &[Acquisition], config: &FusionConfig) -> Result<FusedStack> {
    if acquisitions.len() < 2 {
        return Err(Error::invalid("stack fusion needs at least two acquisitions"));
    }
    let maps: Vec<ImageF> = acquisitions.iter().map(|a| a.map.clone()).collect();
    for a in acquisitions {
        if a.map.width() != a.depth.nx() || a.map.height() != a.depth.ny() {
            return Err(Error::invalid("acquisition map/depth dimension mismatch"));
        }
    }
    let fusion = mwgf_fuse(&maps, config)?;
    let (nx, ny) = (maps[0].width(), maps[0].height());
    let mut depth = vec![0u16; nx * ny];
    for i in 0..nx * ny {
        let mut best = 0usize;
        for n in 1..acquisitions.len() {
            if fusion.weights.maps()[n].data()[i] > fusion.weights.maps()[best].data()[i] {
                best = n;
            }
        }
        depth[i] = acquisitions[best].depth.indices()[i];
    }
    let depth = DepthMap::new(nx, ny, depth)?;
    let nz = acquisitions.iter().map(|a| a.nz).max().unwrap();
    let rgb = depth_code(&fusion.fused, &depth, nz)?;
    Ok(FusedStack {
        map: fusion.fused.clone(),
        depth,
        rgb,
        nz,
        fusion,
    })
}
