//! Pixel-domain visual information fidelity over a four-level Gaussian
//! pyramid.
//!
//! Level `s = 1..=4` uses a Gaussian window of size `N = 2^(5-s) + 1`
//! (17, 9, 5, 3) with `sigma = N / 5`; levels after the first low-pass and
//! subsample the previous level by two. All filtering keeps only
//! fully-covered positions. The HVS noise variance is `sigma_n^2 = 2` on the
//! 0..255 scale, i.e. `2 * (data_range / 255)^2` in data units.
//!
//! The metric is ordered: `vif(candidate, reference)` measures how much of
//! the reference's information survives in the candidate.

use super::filter::{gaussian_taps, separable_valid};
use crate::error::{Error, Result};
use crate::image::ImageGrid;

pub const VIF_NOISE_VAR: f64 = 2.0;
const LEVELS: u32 = 4;
const TINY: f64 = 1e-10;

fn window_len(level: u32) -> usize {
    (1usize << (LEVELS - level + 1)) + 1
}

/// Extents reached at each level, or `None` if the pyramid does not fit.
fn pyramid_fits(width: usize, height: usize) -> bool {
    let (mut w, mut h) = (width, height);
    for level in 1..=LEVELS {
        let n = window_len(level);
        if level > 1 {
            if w < n || h < n {
                return false;
            }
            w = (w + 1 - n).div_ceil(2);
            h = (h + 1 - n).div_ceil(2);
        }
        if w < n || h < n {
            return false;
        }
    }
    true
}

fn subsample2(p: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(ow * oh);
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            out.push(p[y * w + x]);
        }
    }
    (out, ow, oh)
}

pub fn vif_planes(
    candidate: &[f64],
    reference: &[f64],
    width: usize,
    height: usize,
    data_range: f64,
) -> Result<f64> {
    if !pyramid_fits(width, height) {
        return Err(Error::TooSmall {
            what: "the VIF pyramid",
            width,
            height,
        });
    }
    let s = 255.0 / data_range;
    let mut r: Vec<f64> = reference.iter().map(|v| v * s).collect();
    let mut d: Vec<f64> = candidate.iter().map(|v| v * s).collect();
    let (mut w, mut h) = (width, height);
    let mut num = 0.0;
    let mut den = 0.0;

    for level in 1..=LEVELS {
        let n = window_len(level);
        let taps = gaussian_taps(n, n as f64 / 5.0);
        if level > 1 {
            let (rf, fw, fh) = separable_valid(&r, w, h, &taps);
            let (df, _, _) = separable_valid(&d, w, h, &taps);
            let (rs, sw, sh) = subsample2(&rf, fw, fh);
            let (ds, _, _) = subsample2(&df, fw, fh);
            r = rs;
            d = ds;
            w = sw;
            h = sh;
        }
        let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
        let (mu1, _, _) = separable_valid(&r, w, h, &taps);
        let (mu2, _, _) = separable_valid(&d, w, h, &taps);
        let (e11, _, _) = separable_valid(&prod(&r, &r), w, h, &taps);
        let (e22, _, _) = separable_valid(&prod(&d, &d), w, h, &taps);
        let (e12, _, _) = separable_valid(&prod(&r, &d), w, h, &taps);

        for i in 0..mu1.len() {
            let mut s1 = (e11[i] - mu1[i] * mu1[i]).max(0.0);
            let s2 = (e22[i] - mu2[i] * mu2[i]).max(0.0);
            let s12 = e12[i] - mu1[i] * mu2[i];

            let mut g = s12 / (s1 + TINY);
            let mut sv = s2 - g * s12;
            if s1 < TINY {
                g = 0.0;
                sv = s2;
                s1 = 0.0;
            }
            if s2 < TINY {
                g = 0.0;
                sv = 0.0;
            }
            if g < 0.0 {
                sv = s2;
                g = 0.0;
            }
            if sv <= TINY {
                sv = TINY;
            }
            num += (1.0 + g * g * s1 / (sv + VIF_NOISE_VAR)).log10();
            den += (1.0 + s1 / VIF_NOISE_VAR).log10();
        }
    }

    if den > 0.0 {
        Ok(num / den)
    } else {
        // reference carries no information at any level
        Ok(if num == 0.0 { 1.0 } else { 0.0 })
    }
}

/// VIF with data range 1.
pub fn vif(candidate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    candidate.check_extent(reference, "vif")?;
    vif_planes(
        candidate.values(),
        reference.values(),
        candidate.width(),
        candidate.height(),
        1.0,
    )
}
