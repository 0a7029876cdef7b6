//! Image purification: Otsu structure masks, the common mask, the residual
//! split and the purified images, plus the patch-similarity (PSP) filter
//! baseline.
//!
//! Masks mark the above-threshold (bright, high attenuation) region. The
//! "contours" the purified images exchange are therefore whole structure
//! regions, not edge maps.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, ImageGrid};
use crate::metrics::filter::{gaussian_taps, separable_same};
use crate::metrics::ssim_planes;

pub const OTSU_BINS: usize = 256;

/// How one image is binarized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskParams {
    /// Gaussian presmoothing; 0 disables it.
    pub presmooth_sigma: f64,
    /// 3x3 opening followed by 3x3 closing.
    pub morph: bool,
}

impl MaskParams {
    pub const ULDCT: MaskParams = MaskParams {
        presmooth_sigma: 1.0,
        morph: true,
    };
    pub const NDCT: MaskParams = MaskParams {
        presmooth_sigma: 0.0,
        morph: false,
    };
    pub const RAW: MaskParams = MaskParams {
        presmooth_sigma: 0.0,
        morph: false,
    };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Combination {
    /// Input IP(uLDCT), label NDCT.
    #[default]
    I,
    /// Input uLDCT, label IP(NDCT).
    II,
    /// I followed by II.
    III,
}

impl Combination {
    pub fn as_str(self) -> &'static str {
        match self {
            Combination::I => "I",
            Combination::II => "II",
            Combination::III => "III",
        }
    }
}

impl FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Combination::I),
            "II" | "2" => Ok(Combination::II),
            "III" | "3" => Ok(Combination::III),
            _ => Err(Error::InvalidArgument(format!("unknown combination {s:?}"))),
        }
    }
}

/// Settings of the purification stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurifyConfig {
    /// Share of NDCT texture blended into IP(uLDCT) off the common mask.
    pub t: f64,
    pub combination: Combination,
    pub uldct_mask: MaskParams,
    pub ndct_mask: MaskParams,
    pub psp_threshold: f64,
    /// PSP patch side; `None` means one eighth of the image side.
    pub psp_patch: Option<usize>,
}

impl Default for PurifyConfig {
    fn default() -> Self {
        Self {
            t: 0.0,
            combination: Combination::I,
            uldct_mask: MaskParams::ULDCT,
            ndct_mask: MaskParams::NDCT,
            psp_threshold: 0.85,
            psp_patch: None,
        }
    }
}

impl PurifyConfig {
    pub fn validate(&self) -> Result<()> {
        check_t(self.t)?;
        for m in [self.uldct_mask, self.ndct_mask] {
            if !(m.presmooth_sigma >= 0.0 && m.presmooth_sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "presmooth sigma {} must be >= 0",
                    m.presmooth_sigma
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.psp_threshold) {
            return Err(Error::InvalidArgument(format!(
                "psp threshold {} outside [0, 1]",
                self.psp_threshold
            )));
        }
        if self.psp_patch == Some(0) {
            return Err(Error::InvalidArgument("psp patch must be positive".into()));
        }
        Ok(())
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("T = {t} outside [0, 1]")));
    }
    Ok(())
}

fn bin_of(v: f64) -> usize {
    ((v * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Otsu threshold over a 256-bin histogram of `[0, 1]`.
///
/// Candidate thresholds are the bin edges `k / 256`, `k = 1..=255`; the
/// first edge with maximal between-class variance wins. Pixels `>=` the
/// returned value are foreground.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    let mut hist = [0usize; OTSU_BINS];
    for &v in values {
        hist[bin_of(v)] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 1);
    for k in 1..OTSU_BINS {
        w0 += hist[k - 1] as f64;
        sum0 += (k - 1) as f64 * hist[k - 1] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let d = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * d * d;
        if between > best.0 {
            best = (between, k);
        }
    }
    Ok(best.1 as f64 / OTSU_BINS as f64)
}

fn smooth(img: &ImageGrid, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return img.values().to_vec();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let taps = gaussian_taps(2 * radius + 1, sigma);
    separable_same(img.values(), img.width(), img.height(), &taps)
}

fn morph3(bits: &[u8], w: usize, h: usize, dilate: bool) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = if dilate { 0 } else { 1 };
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let b = bits[yy * w + xx];
                    acc = if dilate { acc | b } else { acc & b };
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// 3x3 opening then closing; outside pixels are ignored (replicated border).
pub fn open_close(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let opened = morph3(&morph3(mask.bits(), w, h, false), w, h, true);
    let closed = morph3(&morph3(&opened, w, h, true), w, h, false);
    BinaryMask::new(w, h, closed).expect("morphology preserves extents")
}

/// Otsu mask of the (optionally presmoothed) image, without morphology.
pub fn otsu_mask(img: &ImageGrid, presmooth_sigma: f64) -> Result<BinaryMask> {
    otsu_mask_with(
        img,
        MaskParams {
            presmooth_sigma,
            morph: false,
        },
    )
}

pub fn otsu_mask_with(img: &ImageGrid, params: MaskParams) -> Result<BinaryMask> {
    let values = smooth(img, params.presmooth_sigma);
    let th = otsu_threshold(&values)?;
    let bits = values.iter().map(|&v| u8::from(v >= th)).collect();
    let mask = BinaryMask::new(img.width(), img.height(), bits)?;
    Ok(if params.morph { open_close(&mask) } else { mask })
}

fn check_mask(mask: &BinaryMask, img: &ImageGrid, op: &'static str) -> Result<()> {
    if !mask.matches_image(img) {
        return Err(Error::shape(
            op,
            format!("{}x{}", img.width(), img.height()),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    Ok(())
}

/// Pixel-wise OR.
pub fn common_mask(m_l: &BinaryMask, m_n: &BinaryMask) -> Result<BinaryMask> {
    if m_l.width() != m_n.width() || m_l.height() != m_n.height() {
        return Err(Error::shape(
            "common_mask",
            format!("{}x{}", m_l.width(), m_l.height()),
            format!("{}x{}", m_n.width(), m_n.height()),
        ));
    }
    let bits = m_l.bits().iter().zip(m_n.bits()).map(|(a, b)| a | b).collect();
    BinaryMask::new(m_l.width(), m_l.height(), bits)
}

/// `v = uLDCT - NDCT` split into its off-mask (`v1`) and on-mask (`v2`) parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualDecomposition {
    pub width: usize,
    pub height: usize,
    pub v: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

pub fn decompose_residual(
    ndct: &ImageGrid,
    uldct: &ImageGrid,
    cm: &BinaryMask,
) -> Result<ResidualDecomposition> {
    ndct.check_extent(uldct, "decompose_residual")?;
    check_mask(cm, ndct, "decompose_residual")?;
    let v: Vec<f64> = uldct.values().iter().zip(ndct.values()).map(|(u, n)| u - n).collect();
    let v1 = v.iter().zip(cm.bits()).map(|(x, &c)| (1.0 - f64::from(c)) * x).collect();
    let v2 = v.iter().zip(cm.bits()).map(|(x, &c)| f64::from(c) * x).collect();
    Ok(ResidualDecomposition {
        width: ndct.width(),
        height: ndct.height(),
        v,
        v1,
        v2,
    })
}

/// `(J - CM) * [(1 - T) uLDCT + T NDCT] + CM * NDCT`.
pub fn ip_uldct(ndct: &ImageGrid, uldct: &ImageGrid, cm: &BinaryMask, t: f64) -> Result<ImageGrid> {
    check_t(t)?;
    ndct.check_extent(uldct, "ip_uldct")?;
    check_mask(cm, ndct, "ip_uldct")?;
    let data = ndct
        .values()
        .iter()
        .zip(uldct.values())
        .zip(cm.bits())
        .map(|((&n, &u), &c)| {
            let c = f64::from(c);
            (1.0 - c) * blend(u, n, t) + c * n
        })
        .collect();
    ImageGrid::from_clamped(ndct.width(), ndct.height(), data)
}

/// `(1 - t) u + t n`, exact at both endpoints and when `u == n`.
fn blend(u: f64, n: f64, t: f64) -> f64 {
    if t < 0.5 {
        u + t * (n - u)
    } else {
        n + (1.0 - t) * (u - n)
    }
}

/// `(J - CM) * NDCT + CM * uLDCT`.
pub fn ip_ndct(ndct: &ImageGrid, uldct: &ImageGrid, cm: &BinaryMask) -> Result<ImageGrid> {
    ndct.check_extent(uldct, "ip_ndct")?;
    check_mask(cm, ndct, "ip_ndct")?;
    let data = ndct
        .values()
        .iter()
        .zip(uldct.values())
        .zip(cm.bits())
        .map(|((&n, &u), &c)| {
            let c = f64::from(c);
            (1.0 - c) * n + c * u
        })
        .collect();
    ImageGrid::from_clamped(ndct.width(), ndct.height(), data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PurifiedPair {
    pub ndct: ImageGrid,
    pub uldct: ImageGrid,
    pub ip_uldct: ImageGrid,
    pub ip_ndct: ImageGrid,
    pub cm: BinaryMask,
    pub t_param: f64,
}

/// Runs the whole purification for one pair.
pub fn purify_pair(ndct: &ImageGrid, uldct: &ImageGrid, cfg: &PurifyConfig) -> Result<PurifiedPair> {
    cfg.validate()?;
    ndct.check_extent(uldct, "purify_pair")?;
    let m_l = otsu_mask_with(uldct, cfg.uldct_mask)?;
    let m_n = otsu_mask_with(ndct, cfg.ndct_mask)?;
    let cm = common_mask(&m_l, &m_n)?;
    Ok(PurifiedPair {
        ip_uldct: ip_uldct(ndct, uldct, &cm, cfg.t)?,
        ip_ndct: ip_ndct(ndct, uldct, &cm)?,
        ndct: ndct.clone(),
        uldct: uldct.clone(),
        cm,
        t_param: cfg.t,
    })
}

/// A supervised pair: the network maps `input` (noisy side) to `label`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub input: ImageGrid,
    pub label: ImageGrid,
}

pub fn make_training_pairs(samples: &[PurifiedPair], combination: Combination) -> Vec<TrainingPair> {
    let first = |p: &PurifiedPair| TrainingPair {
        input: p.ip_uldct.clone(),
        label: p.ndct.clone(),
    };
    let second = |p: &PurifiedPair| TrainingPair {
        input: p.uldct.clone(),
        label: p.ip_ndct.clone(),
    };
    match combination {
        Combination::I => samples.iter().map(first).collect(),
        Combination::II => samples.iter().map(second).collect(),
        Combination::III => samples.iter().map(first).chain(samples.iter().map(second)).collect(),
    }
}

/// IP(NDCT): the reference denoised outputs are scored against.
pub fn evaluation_label(sample: &PurifiedPair) -> &ImageGrid {
    &sample.ip_ndct
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PspResult {
    pub patch: usize,
    /// Top-left corners of kept patches.
    pub kept: Vec<(usize, usize)>,
    pub total: usize,
    pub keep_ratio: f64,
}

/// Default PSP patch side: one eighth of the image side (64 on 512).
pub fn default_psp_patch(size: usize) -> usize {
    (size / 8).max(1)
}

/// Keeps the patches whose SSIM between the two images reaches `threshold`.
pub fn psp_filter(ndct: &ImageGrid, uldct: &ImageGrid, patch: usize, threshold: f64) -> Result<PspResult> {
    ndct.check_extent(uldct, "psp_filter")?;
    let (w, h) = (ndct.width(), ndct.height());
    if patch == 0 || w % patch != 0 || h % patch != 0 {
        return Err(Error::InvalidArgument(format!(
            "{w}x{h} image is not divisible into {patch}x{patch} patches"
        )));
    }
    let extract = |img: &ImageGrid, x0: usize, y0: usize| {
        let mut p = Vec::with_capacity(patch * patch);
        for y in y0..y0 + patch {
            p.extend_from_slice(&img.values()[y * w + x0..y * w + x0 + patch]);
        }
        p
    };
    let mut kept = Vec::new();
    let mut total = 0;
    for y0 in (0..h).step_by(patch) {
        for x0 in (0..w).step_by(patch) {
            total += 1;
            let s = ssim_planes(&extract(ndct, x0, y0), &extract(uldct, x0, y0), patch, patch, 1.0);
            if s >= threshold {
                kept.push((x0, y0));
            }
        }
    }
    Ok(PspResult {
        patch,
        keep_ratio: kept.len() as f64 / total as f64,
        kept,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_tags() {
        assert_eq!("ii".parse::<Combination>().unwrap(), Combination::II);
        assert!("IV".parse::<Combination>().is_err());
        assert_eq!(Combination::default(), Combination::I);
    }

    #[test]
    fn morphology_removes_speckle_and_fills_holes() {
        let mut bits = vec![0u8; 144];
        bits[13] = 1; // isolated speck
        for y in 3..10 {
            for x in 3..10 {
                bits[y * 12 + x] = 1;
            }
        }
        bits[6 * 12 + 6] = 0; // pinhole
        let m = open_close(&BinaryMask::new(12, 12, bits).unwrap());
        assert_eq!(m.get(1, 1), 0);
        assert_eq!(m.get(6, 6), 1);
        assert_eq!(m.get(3, 3), 1);
        assert_eq!(m.count_ones(), 49);
    }

    #[test]
    fn config_validation() {
        let bad = PurifyConfig {
            t: 1.5,
            ..PurifyConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(PurifyConfig::default().validate().is_ok());
    }
}
