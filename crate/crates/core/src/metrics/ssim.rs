//! Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

use super::filter::{gaussian_taps, separable_same};
use crate::error::Result;
use crate::image::ImageGrid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Gaussian-window local mean of a plane, symmetric boundary.
pub fn local_mean(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    separable_same(plane, width, height, &gaussian_taps(SSIM_WINDOW, SSIM_SIGMA))
}

/// Mean of the SSIM map given windowed first and second moments
/// (`e_aa = E[a^2]`, etc.).
pub fn ssim_from_moments(
    mu_a: &[f64],
    mu_b: &[f64],
    e_aa: &[f64],
    e_bb: &[f64],
    e_ab: &[f64],
    data_range: f64,
) -> f64 {
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let n = mu_a.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    acc / n as f64
}

/// SSIM of two planes of equal extents.
pub fn ssim_planes(a: &[f64], b: &[f64], width: usize, height: usize, data_range: f64) -> f64 {
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = local_mean(a, width, height);
    let mu_b = local_mean(b, width, height);
    let e_aa = local_mean(&prod(a, a), width, height);
    let e_bb = local_mean(&prod(b, b), width, height);
    let e_ab = local_mean(&prod(a, b), width, height);
    ssim_from_moments(&mu_a, &mu_b, &e_aa, &e_bb, &e_ab, data_range)
}

/// SSIM with data range 1.
pub fn ssim(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.check_extent(b, "ssim")?;
    Ok(ssim_planes(a.values(), b.values(), a.width(), a.height(), 1.0))
}
