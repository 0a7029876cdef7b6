//! Noise quality measure (approximate).
//!
//! A contrast-pyramid SNR in the spirit of Damera-Venkata et al.: both
//! images are split into octave bands with raised-cosine log filters
//! (`G_k(r) = (1 + cos(pi * (log2 r - k))) / 2` on `|log2 r - k| <= 1`, `r` in
//! cycles per image), each band is divided by the low-pass luminance below
//! it to give local contrast, and contrasts below the detection threshold of
//! the contrast sensitivity function are discarded independently in each
//! image. The kept band signals are summed into "perceived" images and
//! compared as `10 log10(sum O^2 / sum (O - I)^2)`.
//!
//! Declared viewing parameters (not taken from any measurement):
//! * 32 pixels per degree of visual angle,
//! * CSF threshold `1 / (200 * 2.6 * (0.0192 + 0.114 f) * exp(-(0.114 f)^1.1))`
//!   with `f` the band centre in cycles per degree,
//! * luminance floor of 1 grey level (0..255 scale) in the contrast division.
//!
//! Scores are clamped to `[-NQM_CAP_DB, NQM_CAP_DB]`; identical inputs score
//! the cap.

use crate::error::{Error, Result};
use crate::fft::{check_pow2, fft2_inplace};
use crate::image::ImageGrid;

pub const NQM_CAP_DB: f64 = 99.0;
pub const NQM_PIXELS_PER_DEGREE: f64 = 32.0;
const LUMINANCE_FLOOR: f64 = 1.0;
const MIN_SIZE: usize = 8;

/// Contrast detection threshold at `f` cycles per degree.
pub fn csf_threshold(f: f64) -> f64 {
    1.0 / (200.0 * 2.6 * (0.0192 + 0.114 * f) * (-(0.114 * f).powf(1.1)).exp())
}

fn signed(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn raised_cosine(log_r: f64, centre: f64) -> f64 {
    let u = log_r - centre;
    if u.abs() <= 1.0 {
        0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    } else {
        0.0
    }
}

struct Bands {
    /// per band: filter for the band and for the luminance below it
    band: Vec<Vec<f64>>,
    low: Vec<Vec<f64>>,
    centres: Vec<f64>,
}

fn build_bands(w: usize, h: usize) -> Bands {
    let n = w * h;
    let top = (w.max(h) as f64).log2() as i32 - 1;
    let mut log_r = vec![f64::NEG_INFINITY; n];
    for ky in 0..h {
        for kx in 0..w {
            let fx = signed(kx, w);
            let fy = signed(ky, h) * w as f64 / h as f64;
            let r = fx.hypot(fy);
            if r > 0.0 {
                log_r[ky * w + kx] = r.log2();
            }
        }
    }
    let mut band = Vec::new();
    let mut low = Vec::new();
    let mut centres = Vec::new();
    for k in 1..=top.max(1) {
        let kf = f64::from(k);
        band.push(log_r.iter().map(|&lr| raised_cosine(lr, kf)).collect());
        low.push(
            log_r
                .iter()
                .map(|&lr| {
                    if lr <= kf - 1.0 {
                        1.0
                    } else if lr <= kf {
                        raised_cosine(lr, kf - 1.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        centres.push(2f64.powi(k));
    }
    Bands { band, low, centres }
}

fn filtered(spec_re: &[f64], spec_im: &[f64], filter: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut re: Vec<f64> = spec_re.iter().zip(filter).map(|(a, f)| a * f).collect();
    let mut im: Vec<f64> = spec_im.iter().zip(filter).map(|(a, f)| a * f).collect();
    fft2_inplace(&mut re, &mut im, h, w, true);
    let inv = 1.0 / (w * h) as f64;
    re.iter().map(|v| v * inv).collect()
}

fn perceived(img: &[f64], w: usize, h: usize, bands: &Bands) -> Vec<f64> {
    let mut re = img.to_vec();
    let mut im = vec![0.0; w * h];
    fft2_inplace(&mut re, &mut im, h, w, false);
    let mut out = vec![0.0; w * h];
    for ((band, low), &centre) in bands.band.iter().zip(&bands.low).zip(&bands.centres) {
        let a = filtered(&re, &im, band, w, h);
        let l = filtered(&re, &im, low, w, h);
        let cpd = centre * NQM_PIXELS_PER_DEGREE / w as f64;
        let th = csf_threshold(cpd);
        for i in 0..w * h {
            let contrast = a[i] / l[i].abs().max(LUMINANCE_FLOOR);
            if contrast.abs() >= th {
                out[i] += a[i];
            }
        }
    }
    out
}

pub fn nqm_planes(
    candidate: &[f64],
    reference: &[f64],
    width: usize,
    height: usize,
    data_range: f64,
) -> Result<f64> {
    if width < MIN_SIZE || height < MIN_SIZE {
        return Err(Error::TooSmall {
            what: "the NQM contrast pyramid",
            width,
            height,
        });
    }
    check_pow2("nqm", width)?;
    check_pow2("nqm", height)?;
    let s = 255.0 / data_range;
    let o: Vec<f64> = reference.iter().map(|v| v * s).collect();
    let i: Vec<f64> = candidate.iter().map(|v| v * s).collect();
    let bands = build_bands(width, height);
    let po = perceived(&o, width, height, &bands);
    let pi = perceived(&i, width, height, &bands);
    let signal: f64 = po.iter().map(|v| v * v).sum();
    let noise: f64 = po.iter().zip(&pi).map(|(a, b)| (a - b) * (a - b)).sum();
    if noise <= 0.0 {
        return Ok(NQM_CAP_DB);
    }
    if signal <= 0.0 {
        return Ok(-NQM_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).clamp(-NQM_CAP_DB, NQM_CAP_DB))
}

/// NQM in dB with data range 1.
pub fn nqm(candidate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    candidate.check_extent(reference, "nqm")?;
    nqm_planes(
        candidate.values(),
        reference.values(),
        candidate.width(),
        candidate.height(),
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_partition_unity_above_first_octave() {
        let b = build_bands(64, 64);
        assert_eq!(b.band.len(), 5);
        // at r = 3 (log2 r in (1, 2)) bands 1 and 2 overlap and sum to 1
        let idx = 3;
        let s: f64 = b.band.iter().map(|f| f[idx]).sum();
        assert!((s - 1.0).abs() < 1e-12);
        // luminance for band k plus bands >= k covers everything below the top
        let total = b.low[1][idx] + b.band[1][idx] + b.band[2][idx];
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csf_is_band_pass() {
        assert!(csf_threshold(4.0) < csf_threshold(0.5));
        assert!(csf_threshold(4.0) < csf_threshold(40.0));
    }

    #[test]
    fn identity_is_capped() {
        let img = ImageGrid::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0).unwrap();
        assert_eq!(nqm(&img, &img).unwrap(), NQM_CAP_DB);
    }
}
