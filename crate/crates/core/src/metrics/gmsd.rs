//! Gradient magnitude similarity deviation.
//!
//! Images are taken to the 0..255 scale, averaged over 2x2 blocks and
//! subsampled by two, then compared through Prewitt gradient magnitudes with
//! stabilizer `c = 170`. The score is the sample standard deviation of the
//! similarity map; 0 means identical gradient structure.

use super::filter::{block_mean, correlate3x3};
use crate::error::Result;
use crate::image::ImageGrid;

pub const GMSD_C: f64 = 170.0;

const PREWITT_X: [[f64; 3]; 3] = [
    [1.0 / 3.0, 0.0, -1.0 / 3.0],
    [1.0 / 3.0, 0.0, -1.0 / 3.0],
    [1.0 / 3.0, 0.0, -1.0 / 3.0],
];
const PREWITT_Y: [[f64; 3]; 3] = [
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [0.0, 0.0, 0.0],
    [-1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0],
];

fn gradient_magnitude(p: &[f64], w: usize, h: usize) -> Vec<f64> {
    let gx = correlate3x3(p, w, h, &PREWITT_X);
    let gy = correlate3x3(p, w, h, &PREWITT_Y);
    gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect()
}

pub fn gmsd_planes(a: &[f64], b: &[f64], width: usize, height: usize, data_range: f64) -> f64 {
    let s = 255.0 / data_range;
    let scaled = |p: &[f64]| p.iter().map(|v| v * s).collect::<Vec<_>>();
    let (pa, w, h) = if width >= 2 && height >= 2 {
        block_mean(&scaled(a), width, height, 2)
    } else {
        (scaled(a), width, height)
    };
    let (pb, _, _) = if width >= 2 && height >= 2 {
        block_mean(&scaled(b), width, height, 2)
    } else {
        (scaled(b), width, height)
    };
    let ga = gradient_magnitude(&pa, w, h);
    let gb = gradient_magnitude(&pb, w, h);
    let map: Vec<f64> = ga
        .iter()
        .zip(&gb)
        .map(|(x, y)| (2.0 * x * y + GMSD_C) / (x * x + y * y + GMSD_C))
        .collect();
    let n = map.len() as f64;
    if map.len() < 2 {
        return 0.0;
    }
    let mean = map.iter().sum::<f64>() / n;
    (map.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn gmsd(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.check_extent(b, "gmsd")?;
    Ok(gmsd_planes(a.values(), b.values(), a.width(), a.height(), 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_zero_and_edges_raise_it() {
        let smooth = ImageGrid::from_fn(32, 32, |x, y| 0.3 + 0.2 * ((x + y) as f64 / 64.0)).unwrap();
        assert_eq!(gmsd(&smooth, &smooth).unwrap(), 0.0);
        let edged = ImageGrid::from_fn(32, 32, |x, y| {
            smooth.get(x, y) + if (x / 4 + y / 4) % 2 == 0 { 0.4 } else { 0.0 }
        })
        .unwrap();
        assert!(gmsd(&smooth, &edged).unwrap() > 0.0);
    }
}
