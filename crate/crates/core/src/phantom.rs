//! Synthetic NDCT/uLDCT pairs.
//!
//! A "subject" is a random anatomy (soft ellipses over a smooth background)
//! whose ellipses drift and grow slowly along the slice axis, so slices of
//! one subject resemble each other the way neighbouring CT slices do. Each
//! sample is one slice: the clean render is the NDCT image. The uLDCT image
//! is rendered at a slice position jittered by up to `slice_jitter` slices
//! (through-plane motion between the two acquisitions), warped by a smooth
//! random in-plane displacement field and then corrupted with
//! signal-dependent low-dose noise.
//!
//! The noise model is a stand-in, not a calibrated scanner model. A pixel of
//! normalized attenuation `v` yields `lambda = photon_scale * dose * exp(-a v)`
//! detected counts; counts are drawn from a Poisson law (Gaussian with
//! variance `lambda + sigma_e^2` once `lambda > 30`), mapped back through
//! `-ln(counts / (photon_scale * dose)) / a` and clipped to `[0, 1]`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::purify::PurifyConfig;
use crate::rng::stream_rng;

pub const DEFAULT_SIZE: usize = 64;
pub const MANIFEST_FILE: &str = "manifest.json";
const GAUSSIAN_COUNT_LIMIT: f64 = 30.0;
const MIN_COUNTS: f64 = 0.5;
const MIN_SIZE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Centre and semi-axes as fractions of the image side.
    pub cx: f64,
    pub cy: f64,
    pub ax: f64,
    pub ay: f64,
    pub angle: f64,
    pub intensity: f64,
    /// Per-slice change of centre (fraction of side) and relative size.
    pub drift_x: f64,
    pub drift_y: f64,
    pub growth: f64,
}

/// Smooth background plus an ordered list of ellipses painted on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anatomy {
    pub background: f64,
    /// `(amplitude, fx, fy, phase)` cosine terms, frequencies in cycles per image.
    pub waves: Vec<(f64, f64, f64, f64)>,
    pub ellipses: Vec<Ellipse>,
}

impl Anatomy {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let background = rng.random_range(0.12..0.22);
        let waves = (0..2)
            .map(|_| {
                (
                    rng.random_range(0.015..0.045),
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-1.2..1.2),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let count = rng.random_range(5..=15);
        let ellipses = (0..count)
            .map(|_| {
                let bright = rng.random_bool(0.6);
                Ellipse {
                    cx: rng.random_range(0.18..0.82),
                    cy: rng.random_range(0.18..0.82),
                    ax: rng.random_range(0.04..0.13),
                    ay: rng.random_range(0.04..0.13),
                    angle: rng.random_range(0.0..std::f64::consts::PI),
                    intensity: if bright {
                        rng.random_range(0.6..0.95)
                    } else {
                        rng.random_range(0.3..0.45)
                    },
                    drift_x: rng.random_range(-0.02..0.02),
                    drift_y: rng.random_range(-0.02..0.02),
                    growth: rng.random_range(-0.06..0.06),
                }
            })
            .collect();
        Self {
            background,
            waves,
            ellipses,
        }
    }

    /// Renders slice offset `slice` (0 is the reference slice).
    pub fn render(&self, size: usize, slice: f64) -> Result<ImageGrid> {
        let n = size as f64;
        let tau = std::f64::consts::TAU;
        let prepared: Vec<_> = self
            .ellipses
            .iter()
            .map(|e| {
                let scale = (1.0 + e.growth * slice).max(0.2);
                let (s, c) = e.angle.sin_cos();
                (
                    e.cx + e.drift_x * slice,
                    e.cy + e.drift_y * slice,
                    e.ax * scale,
                    e.ay * scale,
                    s,
                    c,
                    e.intensity,
                )
            })
            .collect();
        let mut data = Vec::with_capacity(size * size);
        for y in 0..size {
            let v = (y as f64 + 0.5) / n;
            for x in 0..size {
                let u = (x as f64 + 0.5) / n;
                let mut val = self.background;
                for &(amp, fx, fy, ph) in &self.waves {
                    val += amp * (tau * (fx * u + fy * v) + ph).cos();
                }
                for &(cx, cy, ax, ay, s, c, intensity) in &prepared {
                    let (dx, dy) = (u - cx, v - cy);
                    let rx = (dx * c + dy * s) / ax;
                    let ry = (-dx * s + dy * c) / ay;
                    let r = rx.hypot(ry);
                    // about one pixel of edge blur
                    let depth_px = (1.0 - r) * ax.min(ay) * n;
                    let alpha = 1.0 / (1.0 + (-depth_px / 0.6).exp());
                    val = val * (1.0 - alpha) + intensity * alpha;
                }
                data.push(val);
            }
        }
        ImageGrid::from_clamped(size, size, data)
    }
}

/// A single random phantom image; deterministic in `seed`.
pub fn generate_phantom(seed: u64, size: usize) -> Result<ImageGrid> {
    check_size(size)?;
    Anatomy::random(&mut stream_rng(seed, "anatomy", 0)).render(size, 0.0)
}

fn check_size(size: usize) -> Result<()> {
    if size < MIN_SIZE || !size.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "image size {size} must be a power of two >= {MIN_SIZE}"
        )));
    }
    Ok(())
}

/// Per-pixel displacement in pixels; sampling position is `(x + dx, y + dy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    width: usize,
    height: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
    max_magnitude: f64,
}

impl DeformationField {
    pub fn new(
        width: usize,
        height: usize,
        dx: Vec<f64>,
        dy: Vec<f64>,
        max_magnitude: f64,
    ) -> Result<Self> {
        let n = width * height;
        if dx.len() != n || dy.len() != n {
            return Err(Error::shape("DeformationField::new", n, dx.len().min(dy.len())));
        }
        if dx.iter().chain(&dy).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DeformationField::new"));
        }
        let worst = dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
        if worst > max_magnitude + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "displacement {worst} exceeds bound {max_magnitude}"
            )));
        }
        Ok(Self {
            width,
            height,
            dx,
            dy,
            max_magnitude,
        })
    }

    pub fn zero(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
            max_magnitude: 0.0,
        }
    }

    pub fn translation(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        Self {
            width,
            height,
            dx: vec![dx; width * height],
            dy: vec![dy; width * height],
            max_magnitude: dx.hypot(dy),
        }
    }

    /// Sum of one to four low-frequency sinusoidal displacement components,
    /// rescaled so the peak magnitude lies in `[0.7, 1] * max_px`.
    pub fn random(rng: &mut ChaCha8Rng, width: usize, height: usize, max_px: f64) -> Self {
        let k = rng.random_range(1..=4);
        let comps: Vec<_> = (0..k)
            .map(|_| {
                let dir = rng.random_range(0.0..std::f64::consts::TAU);
                (
                    rng.random_range(0.3..1.0),
                    dir.cos(),
                    dir.sin(),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let target = max_px * rng.random_range(0.7..1.0);
        let mut dx = Vec::with_capacity(width * height);
        let mut dy = Vec::with_capacity(width * height);
        for y in 0..height {
            let v = y as f64 / height as f64;
            for x in 0..width {
                let u = x as f64 / width as f64;
                let (mut sx, mut sy) = (0.0, 0.0);
                for &(a, cx, cy, fx, fy, ph) in &comps {
                    let w = a * (std::f64::consts::TAU * (fx * u + fy * v) + ph).sin();
                    sx += w * cx;
                    sy += w * cy;
                }
                dx.push(sx);
                dy.push(sy);
            }
        }
        let peak = dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
        if peak <= 0.0 || max_px <= 0.0 {
            return Self::zero(width, height);
        }
        let s = target / peak;
        for v in dx.iter_mut().chain(dy.iter_mut()) {
            *v *= s;
        }
        Self {
            width,
            height,
            dx,
            dy,
            max_magnitude: max_px,
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.max_magnitude
    }

    /// Largest displacement actually present.
    pub fn peak(&self) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }
}

/// Bilinear warp with border replication.
pub fn deform(img: &ImageGrid, field: &DeformationField) -> Result<ImageGrid> {
    let (w, h) = (img.width(), img.height());
    if field.width != w || field.height != h {
        return Err(Error::shape(
            "deform",
            format!("{w}x{h}"),
            format!("{}x{}", field.width, field.height),
        ));
    }
    let src = img.values();
    let (wmax, hmax) = ((w - 1) as f64, (h - 1) as f64);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = (x as f64 + field.dx[i]).clamp(0.0, wmax);
            let sy = (y as f64 + field.dy[i]).clamp(0.0, hmax);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    ImageGrid::from_clamped(w, h, out)
}

/// Signal-dependent low-dose noise (see module docs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub dose_fraction: f64,
    /// Detected counts through zero attenuation at full dose.
    pub photon_scale: f64,
    /// Additive electronic noise, in counts.
    pub electronic_sigma: f64,
    /// Attenuation of a pixel with value 1, as a line integral.
    pub attenuation: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            dose_fraction: 0.02,
            photon_scale: 6.0e3,
            electronic_sigma: 2.0,
            attenuation: 3.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.dose_fraction > 0.0 && self.dose_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dose_fraction {} outside (0, 1]",
                self.dose_fraction
            )));
        }
        if !(self.photon_scale > 0.0 && self.photon_scale.is_finite()) {
            return Err(Error::InvalidArgument("photon_scale must be positive".into()));
        }
        if !(self.electronic_sigma >= 0.0 && self.electronic_sigma.is_finite()) {
            return Err(Error::InvalidArgument("electronic_sigma must be >= 0".into()));
        }
        if !(self.attenuation > 0.0 && self.attenuation.is_finite()) {
            return Err(Error::InvalidArgument("attenuation must be positive".into()));
        }
        Ok(())
    }
}

/// Applies the noise model with a generator derived from `seed`.
pub fn apply_noise(img: &ImageGrid, model: &NoiseModel, seed: u64) -> Result<ImageGrid> {
    apply_noise_with(img, model, &mut stream_rng(seed, "noise", 0))
}

pub fn apply_noise_with(
    img: &ImageGrid,
    model: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<ImageGrid> {
    model.validate()?;
    let blank = model.photon_scale * model.dose_fraction;
    let mut out = Vec::with_capacity(img.len());
    for &v in img.values() {
        let lambda = blank * (-model.attenuation * v).exp();
        let z: f64 = StandardNormal.sample(rng);
        let counts = if lambda > GAUSSIAN_COUNT_LIMIT {
            lambda + (lambda + model.electronic_sigma.powi(2)).sqrt() * z
        } else {
            let p = Poisson::new(lambda.max(1e-9))
                .map_err(|e| Error::InvalidArgument(format!("poisson rate {lambda}: {e}")))?;
            let k: f64 = p.sample(rng);
            k + model.electronic_sigma * z
        };
        let counts = counts.max(MIN_COUNTS);
        out.push(-(counts / blank).ln() / model.attenuation);
    }
    ImageGrid::from_clamped(img.width(), img.height(), out)
}

/// Dataset generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    /// Relative train/validation/test weights.
    pub split: [f64; 3],
    pub slices_per_subject: usize,
    /// Peak in-plane displacement bound in pixels.
    pub max_displacement: f64,
    /// Largest through-plane offset of the uLDCT slice, in slices.
    pub slice_jitter: f64,
    pub noise: NoiseModel,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 300,
            size: DEFAULT_SIZE,
            split: [7.0, 1.5, 1.5],
            slices_per_subject: 10,
            max_displacement: 3.0,
            slice_jitter: 2.0,
            noise: NoiseModel::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        check_size(self.size)?;
        if self.count == 0 {
            return Err(Error::InvalidArgument("count must be positive".into()));
        }
        if self.split.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || self.split.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "split weights {:?} must be non-negative with a positive sum",
                self.split
            )));
        }
        if self.slices_per_subject == 0 {
            return Err(Error::InvalidArgument("slices_per_subject must be positive".into()));
        }
        if !(self.max_displacement >= 0.0 && self.max_displacement.is_finite()) {
            return Err(Error::InvalidArgument("max_displacement must be >= 0".into()));
        }
        if !(self.slice_jitter >= 0.0 && self.slice_jitter.is_finite()) {
            return Err(Error::InvalidArgument("slice_jitter must be >= 0".into()));
        }
        self.noise.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Split sizes: `train = round(n * w0 / sum)`, `val = floor(n * w1 / sum)`
/// (capped by what is left), `test` takes the remainder. With `n = 10` and
/// weights 7:1.5:1.5 this gives 7/1/2.
pub fn split_counts(n: usize, weights: [f64; 3]) -> SplitCounts {
    let total: f64 = weights.iter().sum();
    let nf = n as f64;
    let train = ((nf * weights[0] / total).round() as usize).min(n);
    let val = ((nf * weights[1] / total).floor() as usize).min(n - train);
    SplitCounts {
        train,
        val,
        test: n - train - val,
    }
}

/// One generated sample with its noiseless misaligned intermediate.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub index: usize,
    pub id: String,
    pub split: Split,
    pub subject: usize,
    pub slice: usize,
    pub ndct: ImageGrid,
    pub deformed: ImageGrid,
    pub uldct: ImageGrid,
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:05}")
}

fn split_of(index: usize, counts: SplitCounts) -> Split {
    if index < counts.train {
        Split::Train
    } else if index < counts.train + counts.val {
        Split::Val
    } else {
        Split::Test
    }
}

/// Generates sample `index`; a pure function of `(config, index)`.
pub fn synthesize(config: &DatasetConfig, index: usize) -> Result<SynthSample> {
    config.validate()?;
    let subject = index / config.slices_per_subject;
    let slice = index % config.slices_per_subject;
    let anatomy = Anatomy::random(&mut stream_rng(config.seed, "anatomy", subject as u64));
    let offset = slice as f64 - (config.slices_per_subject as f64 - 1.0) / 2.0;
    let ndct = anatomy.render(config.size, offset)?;
    let shift = if config.slice_jitter > 0.0 {
        stream_rng(config.seed, "shift", index as u64)
            .random_range(-config.slice_jitter..=config.slice_jitter)
    } else {
        0.0
    };
    let moved = if shift == 0.0 {
        ndct.clone()
    } else {
        anatomy.render(config.size, offset + shift)?
    };
    let field = DeformationField::random(
        &mut stream_rng(config.seed, "deform", index as u64),
        config.size,
        config.size,
        config.max_displacement,
    );
    let deformed = deform(&moved, &field)?;
    let uldct = apply_noise_with(
        &deformed,
        &config.noise,
        &mut stream_rng(config.seed, "noise", index as u64),
    )?;
    Ok(SynthSample {
        index,
        id: sample_id(index),
        split: split_of(index, split_counts(config.count, config.split)),
        subject,
        slice,
        ndct,
        deformed,
        uldct,
    })
}

/// All samples of a dataset, in memory.
pub fn generate_samples(config: &DatasetConfig) -> Result<Vec<SynthSample>> {
    config.validate()?;
    (0..config.count).map(|i| synthesize(config, i)).collect()
}

/// Manifest entry; image paths are relative base paths (no extension).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
    pub subject: usize,
    pub slice: usize,
    pub ndct: String,
    pub uldct: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip_uldct: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip_ndct: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cm: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub counts: SplitCounts,
    pub samples: Vec<SampleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purification: Option<PurifyConfig>,
}

/// Extensions written for every stored image.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["f32", "json", "png"];

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Every referenced image file exists and ids are unique.
    pub fn verify_files(&self, root: &Path) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate sample id {}", s.id)));
            }
            let rels = [Some(&s.ndct), Some(&s.uldct), s.ip_uldct.as_ref(), s.ip_ndct.as_ref(), s.cm.as_ref()];
            for rel in rels.into_iter().flatten() {
                for ext in IMAGE_EXTENSIONS {
                    let p = crate::image::with_suffix(&root.join(rel), ext);
                    if !p.is_file() {
                        return Err(Error::io(
                            p,
                            std::io::Error::new(std::io::ErrorKind::NotFound, "missing image file"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn image_base(root: &Path, rel: &str) -> PathBuf {
    root.join(rel)
}

/// Writes every sample and `manifest.json` under `out_dir`.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let counts = split_counts(config.count, config.split);
    let mut samples = Vec::with_capacity(config.count);
    for index in 0..config.count {
        let s = synthesize(config, index)?;
        let ndct = format!("samples/{}_ndct", s.id);
        let uldct = format!("samples/{}_uldct", s.id);
        s.ndct.save(&out_dir.join(&ndct), "ndct")?;
        s.uldct.save(&out_dir.join(&uldct), "uldct")?;
        samples.push(SampleEntry {
            id: s.id,
            split: s.split,
            subject: s.subject,
            slice: s.slice,
            ndct,
            uldct,
            ip_uldct: None,
            ip_ndct: None,
            cm: None,
        });
    }
    let manifest = DatasetManifest {
        config: config.clone(),
        counts,
        samples,
        purification: None,
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rounding() {
        assert_eq!(
            split_counts(10, [7.0, 1.5, 1.5]),
            SplitCounts {
                train: 7,
                val: 1,
                test: 2
            }
        );
        assert_eq!(
            split_counts(300, [7.0, 1.5, 1.5]),
            SplitCounts {
                train: 210,
                val: 45,
                test: 45
            }
        );
        let c = split_counts(1, [7.0, 1.5, 1.5]);
        assert_eq!(c.train + c.val + c.test, 1);
    }

    #[test]
    fn zero_field_is_identity() {
        let img = generate_phantom(5, 32).unwrap();
        assert_eq!(deform(&img, &DeformationField::zero(32, 32)).unwrap(), img);
    }

    #[test]
    fn random_field_respects_bound() {
        let f = DeformationField::random(&mut stream_rng(1, "t", 0), 64, 64, 3.0);
        assert!(f.peak() <= 3.0 + 1e-12 && f.peak() >= 2.0);
        assert!(DeformationField::new(2, 1, vec![3.0, 0.0], vec![4.0, 0.0], 4.0).is_err());
    }

    #[test]
    fn noise_model_validation() {
        let bad = NoiseModel {
            dose_fraction: 0.0,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
        let img = ImageGrid::filled(8, 8, 0.3).unwrap();
        assert!(apply_noise(&img, &bad, 1).is_err());
    }
}
