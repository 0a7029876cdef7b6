//! Feature similarity (FSIM), grayscale variant.
//!
//! Phase congruency is computed with a log-Gabor filter bank in the
//! frequency domain and Kovesi's noise compensation:
//!
//! | constant            | value |
//! |---------------------|-------|
//! | scales              | 4     |
//! | orientations        | 4     |
//! | min wavelength      | 6     |
//! | scale multiplier    | 2     |
//! | sigma on f          | 0.55  |
//! | dTheta on sigma     | 1.2   |
//! | noise k             | 2.0   |
//! | epsilon             | 1e-4  |
//! | lowpass cutoff / n  | 0.45 / 15 |
//!
//! Gradient magnitude uses the Scharr operator. Similarities use
//! `T1 = 0.85` (phase congruency) and `T2 = 160` (gradient, 0..255 scale),
//! and are pooled with `max(PC_a, PC_b)` as weight. Images are first reduced
//! by block averaging with factor `round(min(w, h) / 256)` when that is
//! above one.

use std::f64::consts::PI;

use super::filter::{block_mean, correlate3x3};
use crate::error::{Error, Result};
use crate::fft::{check_pow2, fft2_inplace};
use crate::image::ImageGrid;

pub const FSIM_MIN_SIZE: usize = 32;

const N_SCALE: usize = 4;
const N_ORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const EPSILON: f64 = 1e-4;
const LOWPASS_CUTOFF: f64 = 0.45;
const LOWPASS_ORDER: i32 = 15;
const T1: f64 = 0.85;
const T2: f64 = 160.0;

const SCHARR_X: [[f64; 3]; 3] = [
    [3.0 / 16.0, 0.0, -3.0 / 16.0],
    [10.0 / 16.0, 0.0, -10.0 / 16.0],
    [3.0 / 16.0, 0.0, -3.0 / 16.0],
];
const SCHARR_Y: [[f64; 3]; 3] = [
    [3.0 / 16.0, 10.0 / 16.0, 3.0 / 16.0],
    [0.0, 0.0, 0.0],
    [-3.0 / 16.0, -10.0 / 16.0, -3.0 / 16.0],
];

/// Normalized frequency of FFT bin `k` out of `n`, in cycles per sample.
fn freq(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency map of a plane whose extents are powers of two.
pub(crate) fn phase_congruency(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let n = w * h;
    let mut img_re = img.to_vec();
    let mut img_im = vec![0.0; n];
    fft2_inplace(&mut img_re, &mut img_im, h, w, false);

    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for ky in 0..h {
        let fy = freq(ky, h);
        for kx in 0..w {
            let fx = freq(kx, w);
            let i = ky * w + kx;
            let r = fx.hypot(fy);
            lowpass[i] = 1.0 / (1.0 + (r / LOWPASS_CUTOFF).powi(2 * LOWPASS_ORDER));
            radius[i] = if i == 0 { 1.0 } else { r };
            let theta = (-fy).atan2(fx);
            sin_t[i] = theta.sin();
            cos_t[i] = theta.cos();
        }
    }

    let log_gabor: Vec<Vec<f64>> = (0..N_SCALE)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / denom).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let theta_sigma = PI / N_ORIENT as f64 / D_THETA_ON_SIGMA;
    let inv_n = 1.0 / n as f64;
    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];

    for o in 0..N_ORIENT {
        let angle = o as f64 * PI / N_ORIENT as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut eo: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(N_SCALE);
        let mut spatial_filters: Vec<Vec<f64>> = Vec::with_capacity(N_SCALE);
        let mut em_n = 0.0;

        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            if s == 0 {
                em_n = filter.iter().map(|v| v * v).sum();
            }
            // real(ifft2(filter)) * sqrt(n)
            let mut fr = filter.clone();
            let mut fi = vec![0.0; n];
            fft2_inplace(&mut fr, &mut fi, h, w, true);
            let scale = inv_n * (n as f64).sqrt();
            spatial_filters.push(fr.iter().map(|v| v * scale).collect());

            let mut re: Vec<f64> = img_re.iter().zip(&filter).map(|(a, b)| a * b).collect();
            let mut im: Vec<f64> = img_im.iter().zip(&filter).map(|(a, b)| a * b).collect();
            fft2_inplace(&mut re, &mut im, h, w, true);
            for v in re.iter_mut().chain(im.iter_mut()) {
                *v *= inv_n;
            }
            for i in 0..n {
                sum_an[i] += re[i].hypot(im[i]);
                sum_e[i] += re[i];
                sum_o[i] += im[i];
            }
            eo.push((re, im));
        }

        let mut energy = vec![0.0; n];
        for i in 0..n {
            let x_energy = sum_e[i].hypot(sum_o[i]) + EPSILON;
            let mean_e = sum_e[i] / x_energy;
            let mean_o = sum_o[i] / x_energy;
            for (e, od) in &eo {
                let (ev, ov) = (e[i], od[i]);
                energy[i] += ev * mean_e + ov * mean_o - (ev * mean_o - ov * mean_e).abs();
            }
        }

        let median_e2n = median((0..n).map(|i| eo[0].0[i].powi(2) + eo[0].1[i].powi(2)).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = if em_n > 0.0 { mean_e2n / em_n } else { 0.0 };

        let mut sum_an2 = 0.0;
        for f in &spatial_filters {
            sum_an2 += f.iter().map(|v| v * v).sum::<f64>();
        }
        let mut sum_ai_aj = 0.0;
        for si in 0..N_SCALE {
            for sj in si + 1..N_SCALE {
                sum_ai_aj += spatial_filters[si]
                    .iter()
                    .zip(&spatial_filters[sj])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        let est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_ai_aj;
        let tau = (est_noise_energy2 / 2.0).max(0.0).sqrt();
        let est_noise_energy = tau * (PI / 2.0).sqrt();
        let est_noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (est_noise_energy + NOISE_K * est_noise_sigma) / 1.7;

        for i in 0..n {
            energy_all[i] += (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }

    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
        .collect()
}

pub fn fsim_planes(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    data_range: f64,
) -> Result<f64> {
    if width < FSIM_MIN_SIZE || height < FSIM_MIN_SIZE {
        return Err(Error::TooSmall {
            what: "the FSIM filter bank",
            width,
            height,
        });
    }
    let s = 255.0 / data_range;
    let mut pa: Vec<f64> = a.iter().map(|v| v * s).collect();
    let mut pb: Vec<f64> = b.iter().map(|v| v * s).collect();
    let (mut w, mut h) = (width, height);
    let factor = ((width.min(height) as f64) / 256.0).round() as usize;
    if factor > 1 {
        let (ra, nw, nh) = block_mean(&pa, w, h, factor);
        let (rb, _, _) = block_mean(&pb, w, h, factor);
        pa = ra;
        pb = rb;
        w = nw;
        h = nh;
    }
    check_pow2("fsim", w)?;
    check_pow2("fsim", h)?;

    let pc_a = phase_congruency(&pa, w, h);
    let pc_b = phase_congruency(&pb, w, h);
    let grad = |p: &[f64]| {
        let gx = correlate3x3(p, w, h, &SCHARR_X);
        let gy = correlate3x3(p, w, h, &SCHARR_Y);
        gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect::<Vec<_>>()
    };
    let ga = grad(&pa);
    let gb = grad(&pb);

    let mut num = 0.0;
    let mut den = 0.0;
    let mut grad_only = 0.0;
    for i in 0..w * h {
        let pc_sim = (2.0 * pc_a[i] * pc_b[i] + T1) / (pc_a[i].powi(2) + pc_b[i].powi(2) + T1);
        let g_sim = (2.0 * ga[i] * gb[i] + T2) / (ga[i].powi(2) + gb[i].powi(2) + T2);
        let pcm = pc_a[i].max(pc_b[i]);
        num += g_sim * pc_sim * pcm;
        den += pcm;
        grad_only += g_sim;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        // no phase-congruent features anywhere: fall back to the gradient term
        Ok(grad_only / (w * h) as f64)
    }
}

/// FSIM with data range 1. Requires at least 32x32 power-of-two extents.
pub fn fsim(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.check_extent(b, "fsim")?;
    fsim_planes(a.values(), b.values(), a.width(), a.height(), 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phantom_like(w: usize, h: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, |x, y| {
            let dx = x as f64 - w as f64 / 2.0;
            let dy = y as f64 - h as f64 / 2.0;
            let r = (dx * dx + dy * dy).sqrt();
            if r < w as f64 / 4.0 {
                0.7
            } else if r < w as f64 / 3.0 {
                0.4
            } else {
                0.1 + 0.05 * ((x as f64) * 0.3).sin().abs()
            }
        })
        .unwrap()
    }

    #[test]
    fn identity_is_one() {
        let img = phantom_like(64, 64);
        assert!((fsim(&img, &img).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_images_fall_back() {
        let a = ImageGrid::filled(32, 32, 0.5).unwrap();
        assert!((fsim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_small() {
        let a = ImageGrid::filled(16, 16, 0.5).unwrap();
        assert!(matches!(fsim(&a, &a), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn phase_congruency_peaks_at_step_edge() {
        let (w, h) = (64, 64);
        let img: Vec<f64> = (0..w * h).map(|i| if i % w < 32 { 50.0 } else { 200.0 }).collect();
        let pc = phase_congruency(&img, w, h);
        let row = 32 * w;
        let at_edge = pc[row + 31].max(pc[row + 32]);
        assert!(at_edge > 0.5, "edge pc {at_edge}");
        let row_max = pc[row..row + w].iter().cloned().fold(0.0, f64::max);
        assert_eq!(at_edge, row_max);
        assert!(pc[row + 8] < at_edge);
        assert!(pc.iter().all(|v| (0.0..=1.0 + 1e-9).contains(v)));
    }
}
