//! Image file I/O: grayscale PNG and binary PGM (P5), 8- and 16-bit.
//!
//! RGB PNG inputs are collapsed to luminance (0.299 R + 0.587 G + 0.114 B)
//! at load time; all internal processing is single-channel.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::raster::ImageF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Loads an 8- or 16-bit grayscale or RGB image, normalized to [0,1].
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageF> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => load_pgm(path),
        "png" => load_png(path),
        other => Err(Error::UnsupportedFormat(format!(
            "unknown image extension '{other}' (expected png or pgm)"
        ))),
    }
}

fn load_png(path: &Path) -> Result<ImageF> {
    let dynimg = image::open(path)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::invalid(format!("{}: zero-sized image", path.display())));
    }
    let data: Vec<f64> = match dynimg {
        DynamicImage::ImageLuma8(img) => img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(img) => img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(img) => img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(img) => img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(img) => img
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgba8(img) => img
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgb16(img) => img
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 65535.0)
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unsupported PNG pixel layout {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    ImageF::new(w, h, data)
}

fn load_pgm(path: &Path) -> Result<ImageF> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|msg| Error::UnsupportedFormat(format!("{}: {msg}", path.display())))
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> std::result::Result<String, String> {
    // skip whitespace and comments
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err("truncated PGM header".into());
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<ImageF, String> {
    let mut pos = 0usize;

    let magic = pgm_token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(format!("not a binary PGM (magic '{magic}')"));
    }
    let width: usize = pgm_token(bytes, &mut pos)?.parse().map_err(|_| "bad width")?;
    let height: usize = pgm_token(bytes, &mut pos)?.parse().map_err(|_| "bad height")?;
    let maxval: u32 = pgm_token(bytes, &mut pos)?.parse().map_err(|_| "bad maxval")?;
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let n = width * height;
    let data: Vec<f64> = if maxval < 256 {
        let raster = bytes.get(pos..pos + n).ok_or("truncated PGM raster")?;
        raster.iter().map(|&b| b as f64 / maxval as f64).collect()
    } else {
        let raster = bytes.get(pos..pos + 2 * n).ok_or("truncated PGM raster")?;
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
            .collect()
    };
    ImageF::new(width, height, data).map_err(|e| e.to_string())
}

/// Saves a grayscale image, quantizing with round-to-nearest at the
/// requested bit depth. Format picked by extension (.png or .pgm).
pub fn save_image(img: &ImageF, path: impl AsRef<Path>, bit_depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => save_pgm(img, path, bit_depth),
        "png" => save_png(img, path, bit_depth),
        other => Err(Error::UnsupportedFormat(format!(
            "unknown image extension '{other}' (expected png or pgm)"
        ))),
    }
}

fn quantize(v: f64, max_code: u32) -> u32 {
    (v.clamp(0.0, 1.0) * max_code as f64).round() as u32
}

fn save_png(img: &ImageF, path: &Path, bit_depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    match bit_depth {
        BitDepth::Eight => {
            let buf: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255) as u8).collect();
            let img8 = image::GrayImage::from_raw(w, h, buf).expect("buffer size");
            img8.save(path)?;
        }
        BitDepth::Sixteen => {
            let buf: Vec<u16> = img
                .data()
                .iter()
                .map(|&v| quantize(v, 65535) as u16)
                .collect();
            let img16 = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w, h, buf)
                .expect("buffer size");
            img16.save(path)?;
        }
    }
    Ok(())
}

fn save_pgm(img: &ImageF, path: &Path, bit_depth: BitDepth) -> Result<()> {
    let maxval = bit_depth.max_code();
    let mut out = Vec::with_capacity(img.data().len() * 2 + 32);
    write!(out, "P5\n{} {}\n{}\n", img.width(), img.height(), maxval).unwrap();
    match bit_depth {
        BitDepth::Eight => {
            out.extend(img.data().iter().map(|&v| quantize(v, 255) as u8));
        }
        BitDepth::Sixteen => {
            for &v in img.data() {
                out.extend_from_slice(&(quantize(v, 65535) as u16).to_be_bytes());
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Saves an 8-bit RGB PNG from interleaved bytes.
pub fn save_rgb_png(
    width: usize,
    height: usize,
    rgb: &[u8],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if rgb.len() != width * height * 3 {
        return Err(Error::invalid("rgb buffer size mismatch"));
    }
    let img = image::RgbImage::from_raw(width as u32, height as u32, rgb.to_vec())
        .expect("buffer size");
    img.save(path)?;
    Ok(())
}
