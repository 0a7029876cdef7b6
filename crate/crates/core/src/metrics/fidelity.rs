//! Pixel-wise fidelity: RMSE and PSNR.

use crate::error::Result;
use crate::image::ImageGrid;

/// PSNR reported for a zero-error pair.
pub const PSNR_CAP_DB: f64 = 99.0;

pub(crate) fn mse_planes(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub(crate) fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (data_range * data_range / mse).log10()).min(PSNR_CAP_DB)
}

pub fn rmse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.check_extent(b, "rmse")?;
    Ok(mse_planes(a.values(), b.values()).sqrt())
}

/// PSNR in dB with data range 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.check_extent(b, "psnr")?;
    Ok(psnr_from_mse(mse_planes(a.values(), b.values()), 1.0))
}
