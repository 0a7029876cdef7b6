//! Image and mask carriers plus their on-disk form.
//!
//! An image is stored as three files sharing a base path:
//! `<base>.f32` (raw little-endian `f32`, row-major), `<base>.json`
//! (a one-line sidecar `{"width":..,"height":..,"role":".."}`) and
//! `<base>.png` (an 8-bit grayscale preview).

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D scalar field with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Builds an image, rejecting non-finite or out-of-range values.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::shape(
                "ImageGrid::new",
                format!("{} values", width * height),
                data.len(),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "image value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by clamping every value into `[0, 1]`.
    /// Non-finite values are rejected.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ImageGrid::from_clamped"));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_extent(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_extent(&self, other: &ImageGrid, op: &'static str) -> Result<()> {
        if self.same_extent(other) {
            Ok(())
        } else {
            Err(Error::shape(
                op,
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ))
        }
    }

    /// Rounds every value through `f32`, the on-disk precision.
    pub fn quantized(&self) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(v as f32)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn mean_abs_diff(&self, other: &ImageGrid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.data.len() as f64
    }

    /// Writes `<base>.f32`, `<base>.json` and `<base>.png`.
    pub fn save(&self, base: &Path, role: &str) -> Result<()> {
        if let Some(dir) = base.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let raw_path = with_suffix(base, "f32");
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;

        let sidecar = Sidecar {
            width: self.width,
            height: self.height,
            role: role.to_string(),
        };
        let json_path = with_suffix(base, "json");
        let mut line = serde_json::to_string(&sidecar).map_err(|e| Error::json(&json_path, e))?;
        line.push('\n');
        fs::write(&json_path, line).map_err(|e| Error::io(&json_path, e))?;

        write_png(&with_suffix(base, "png"), self)
    }

    /// Reads an image written by [`ImageGrid::save`].
    pub fn load(base: &Path) -> Result<Self> {
        let json_path = with_suffix(base, "json");
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let sidecar: Sidecar =
            serde_json::from_str(text.trim()).map_err(|e| Error::json(&json_path, e))?;
        let raw_path = with_suffix(base, "f32");
        let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
        let n = sidecar.width * sidecar.height;
        if bytes.len() != n * 4 {
            return Err(Error::shape("ImageGrid::load", n * 4, bytes.len()));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Self::new(sidecar.width, sidecar.height, data)
    }
}

/// One-line JSON sidecar describing a raw image file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub role: String,
}

/// `base` with `.ext` appended (not replacing any existing dot segment).
pub fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_png(path: &Path, img: &ImageGrid) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(png_err)?;
    let pixels: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    writer.write_image_data(&pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// A per-pixel `{0, 1}` field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape(
                "BinaryMask::new",
                width * height,
                bits.len(),
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![1; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count_ones() as f64 / self.bits.len() as f64
    }

    pub fn matches_image(&self, img: &ImageGrid) -> bool {
        self.width == img.width() && self.height == img.height()
    }

    /// The mask as a 0/1 image.
    pub fn to_image(&self) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self.bits.iter().map(|&b| f64::from(b)).collect(),
        }
    }

    /// Inverse of [`BinaryMask::to_image`]; any value above 0.5 is set.
    pub fn from_image(img: &ImageGrid) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            bits: img.values().iter().map(|&v| u8::from(v > 0.5)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(ImageGrid::new(2, 1, vec![0.0, 1.5]).is_err());
        assert!(ImageGrid::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageGrid::from_clamped(2, 1, vec![-0.5, 1.5]).is_ok());
    }

    #[test]
    fn save_load_roundtrip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::from_fn(8, 4, |x, y| (x * 4 + y) as f64 / 40.0).unwrap();
        let base = dir.path().join("sub/img");
        img.save(&base, "ndct").unwrap();
        let back = ImageGrid::load(&base).unwrap();
        assert_eq!(back, img.quantized());
        let sidecar = fs::read_to_string(with_suffix(&base, "json")).unwrap();
        assert_eq!(sidecar.lines().count(), 1);
        assert!(sidecar.contains("\"role\":\"ndct\""));
        assert!(with_suffix(&base, "png").exists());
    }

    #[test]
    fn mask_image_roundtrip() {
        let m = BinaryMask::new(3, 1, vec![1, 0, 1]).unwrap();
        assert_eq!(BinaryMask::from_image(&m.to_image()), m);
        assert!(BinaryMask::new(2, 1, vec![0, 2]).is_err());
    }
}
