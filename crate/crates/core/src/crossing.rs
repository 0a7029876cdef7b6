//! Path-crossing analysis of paired samples.
//!
//! Each sample is a pair `(x, y)`: `x` the clean target and `y` the noisy
//! source. Along the straight path `z_t = t x + (1 - t) y`, two samples `a`
//! and `b` cross when, for some grid time `t`, `SSIM(z_a, z_b)` reaches the
//! floor `p` and exceeds both `SSIM(y_a, y_b)` and `SSIM(x_a, x_b)`.
//!
//! SSIM is bilinear in its windowed moments, so the dataset pass works on
//! per-sample moment maps plus four cross-moment maps per pair instead of
//! re-filtering every blended image.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::metrics::{local_mean, ssim, SSIM_K1, SSIM_K2};
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingConfig {
    /// Headline similarity floor.
    pub p: f64,
    /// Floors reported in the breakdown.
    pub sweep: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Pairs examined when the dataset is larger than `exhaustive_limit`.
    pub pair_budget: usize,
    pub exhaustive_limit: usize,
    pub seed: u64,
}

impl Default for CrossingConfig {
    fn default() -> Self {
        Self {
            p: 0.90,
            sweep: vec![0.95, 0.90, 0.85],
            t_grid: (1..=9).map(|k| f64::from(k) / 10.0).collect(),
            pair_budget: 20_000,
            exhaustive_limit: 200,
            seed: 0,
        }
    }
}

impl CrossingConfig {
    pub fn validate(&self) -> Result<()> {
        for &p in std::iter::once(&self.p).chain(&self.sweep) {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArgument(format!("threshold {p} outside (0, 1)")));
            }
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::InvalidArgument(
                "t_grid must be non-empty with values inside (0, 1)".into(),
            ));
        }
        if self.pair_budget == 0 {
            return Err(Error::InvalidArgument("pair_budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRate {
    pub p: f64,
    pub crossings: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub p: f64,
    pub crossing_rate: f64,
    pub breakdown: Vec<ThresholdRate>,
    pub examined: usize,
    /// Pairs skipped because both samples are identical.
    pub excluded: usize,
}

impl CrossingReport {
    pub fn rate_at(&self, p: f64) -> Option<f64> {
        self.breakdown.iter().find(|r| r.p == p).map(|r| r.rate)
    }
}

/// `t x + (1 - t) y`.
pub fn interpolate(x: &ImageGrid, y: &ImageGrid, t: f64) -> Result<ImageGrid> {
    x.check_extent(y, "interpolate")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    let data = x
        .values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| t * a + (1.0 - t) * b)
        .collect();
    ImageGrid::from_clamped(x.width(), x.height(), data)
}

/// Best path similarity of a pair: the largest `SSIM(z_a, z_b)` over grid
/// times where it beats both endpoint similarities, if any.
pub fn crossing_peak(
    a: (&ImageGrid, &ImageGrid),
    b: (&ImageGrid, &ImageGrid),
    t_grid: &[f64],
) -> Result<Option<f64>> {
    let (xa, ya) = a;
    let (xb, yb) = b;
    for img in [ya, xb, yb] {
        xa.check_extent(img, "crossing_peak")?;
    }
    let sx = ssim(xa, xb)?;
    let sy = ssim(ya, yb)?;
    let mut best: Option<f64> = None;
    for &t in t_grid {
        let s = ssim(&interpolate(xa, ya, t)?, &interpolate(xb, yb, t)?)?;
        if s > sx && s > sy && best.is_none_or(|b| s > b) {
            best = Some(s);
        }
    }
    Ok(best)
}

/// Whether the two samples' paths cross at floor `cfg.p`.
pub fn pair_crosses(
    a: (&ImageGrid, &ImageGrid),
    b: (&ImageGrid, &ImageGrid),
    cfg: &CrossingConfig,
) -> Result<bool> {
    cfg.validate()?;
    Ok(crossing_peak(a, b, &cfg.t_grid)?.is_some_and(|s| s >= cfg.p))
}

struct Moments {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    e_xx: Vec<f64>,
    e_yy: Vec<f64>,
    e_xy: Vec<f64>,
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p * q).collect()
}

impl Moments {
    fn of(x: &ImageGrid, y: &ImageGrid) -> Self {
        let (w, h) = (x.width(), x.height());
        let (xv, yv) = (x.values(), y.values());
        Self {
            mu_x: local_mean(xv, w, h),
            mu_y: local_mean(yv, w, h),
            e_xx: local_mean(&product(xv, xv), w, h),
            e_yy: local_mean(&product(yv, yv), w, h),
            e_xy: local_mean(&product(xv, yv), w, h),
        }
    }
}

/// Windowed cross moments `E[x_a x_b]`, `E[x_a y_b]`, `E[y_a x_b]`, `E[y_a y_b]`.
struct Cross {
    xx: Vec<f64>,
    xy: Vec<f64>,
    yx: Vec<f64>,
    yy: Vec<f64>,
}

fn blended_ssim(t: f64, a: &Moments, b: &Moments, c: &Cross) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (s, r) = (t, 1.0 - t);
    let n = a.mu_x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let ma = s * a.mu_x[i] + r * a.mu_y[i];
        let mb = s * b.mu_x[i] + r * b.mu_y[i];
        let eaa = s * s * a.e_xx[i] + 2.0 * s * r * a.e_xy[i] + r * r * a.e_yy[i];
        let ebb = s * s * b.e_xx[i] + 2.0 * s * r * b.e_xy[i] + r * r * b.e_yy[i];
        let eab = s * s * c.xx[i] + s * r * (c.xy[i] + c.yx[i]) + r * r * c.yy[i];
        let va = eaa - ma * ma;
        let vb = ebb - mb * mb;
        let cov = eab - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    acc / n as f64
}

fn moment_peak(a: &Moments, b: &Moments, c: &Cross, t_grid: &[f64]) -> Option<f64> {
    let sx = blended_ssim(1.0, a, b, c);
    let sy = blended_ssim(0.0, a, b, c);
    let mut best: Option<f64> = None;
    for &t in t_grid {
        let s = blended_ssim(t, a, b, c);
        if s > sx && s > sy && best.is_none_or(|b| s > b) {
            best = Some(s);
        }
    }
    best
}

/// Unordered index pairs to examine, sorted.
fn pair_plan(n: usize, cfg: &CrossingConfig) -> Vec<(usize, usize)> {
    let all = n * (n - 1) / 2;
    if n <= cfg.exhaustive_limit || all <= cfg.pair_budget {
        return (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    }
    let mut rng = stream_rng(cfg.seed, "crossing-pairs", n as u64);
    let mut seen = HashSet::with_capacity(cfg.pair_budget);
    while seen.len() < cfg.pair_budget {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            seen.insert((i.min(j), i.max(j)));
        }
    }
    let mut pairs: Vec<_> = seen.into_iter().collect();
    pairs.sort_unstable();
    pairs
}

/// Crossing rates of a dataset of `(x, y)` samples.
pub fn crossing_rate(samples: &[(ImageGrid, ImageGrid)], cfg: &CrossingConfig) -> Result<CrossingReport> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "crossing analysis needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let (x0, _) = &samples[0];
    for (x, y) in samples {
        x0.check_extent(x, "crossing_rate")?;
        x0.check_extent(y, "crossing_rate")?;
    }
    let (w, h) = (x0.width(), x0.height());
    let moments: Vec<Moments> = samples.iter().map(|(x, y)| Moments::of(x, y)).collect();

    let mut floors: Vec<f64> = cfg.sweep.clone();
    if !floors.contains(&cfg.p) {
        floors.push(cfg.p);
    }
    let mut counts = vec![0usize; floors.len()];
    let (mut examined, mut excluded) = (0, 0);
    for (i, j) in pair_plan(samples.len(), cfg) {
        let ((xa, ya), (xb, yb)) = (&samples[i], &samples[j]);
        if xa == xb && ya == yb {
            excluded += 1;
            continue;
        }
        examined += 1;
        let (xav, yav, xbv, ybv) = (xa.values(), ya.values(), xb.values(), yb.values());
        let cross = Cross {
            xx: local_mean(&product(xav, xbv), w, h),
            xy: local_mean(&product(xav, ybv), w, h),
            yx: local_mean(&product(yav, xbv), w, h),
            yy: local_mean(&product(yav, ybv), w, h),
        };
        if let Some(peak) = moment_peak(&moments[i], &moments[j], &cross, &cfg.t_grid) {
            for (count, &p) in counts.iter_mut().zip(&floors) {
                if peak >= p {
                    *count += 1;
                }
            }
        }
    }
    let rate = |c: usize| if examined == 0 { 0.0 } else { c as f64 / examined as f64 };
    let breakdown: Vec<ThresholdRate> = floors
        .iter()
        .zip(&counts)
        .map(|(&p, &c)| ThresholdRate {
            p,
            crossings: c,
            rate: rate(c),
        })
        .collect();
    let headline = breakdown.iter().find(|r| r.p == cfg.p).map_or(0.0, |r| r.rate);
    Ok(CrossingReport {
        p: cfg.p,
        crossing_rate: headline,
        breakdown: breakdown.into_iter().filter(|r| cfg.sweep.contains(&r.p) || r.p == cfg.p).collect(),
        examined,
        excluded,
    })
}

/// [`crossing_peak`] computed from windowed moments, as the dataset pass does.
pub fn crossing_peak_fast(
    a: (&ImageGrid, &ImageGrid),
    b: (&ImageGrid, &ImageGrid),
    t_grid: &[f64],
) -> Result<Option<f64>> {
    let (xa, ya) = a;
    let (xb, yb) = b;
    for img in [ya, xb, yb] {
        xa.check_extent(img, "crossing_peak_fast")?;
    }
    let (w, h) = (xa.width(), xa.height());
    let ma = Moments::of(xa, ya);
    let mb = Moments::of(xb, yb);
    let cross = Cross {
        xx: local_mean(&product(xa.values(), xb.values()), w, h),
        xy: local_mean(&product(xa.values(), yb.values()), w, h),
        yx: local_mean(&product(ya.values(), xb.values()), w, h),
        yy: local_mean(&product(ya.values(), yb.values()), w, h),
    };
    Ok(moment_peak(&ma, &mb, &cross, t_grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let c = CrossingConfig::default();
        assert_eq!(c.t_grid.len(), 9);
        assert_eq!(c.t_grid[0], 0.1);
        assert_eq!(c.t_grid[8], 0.9);
        c.validate().unwrap();
    }

    #[test]
    fn sampled_plan_is_unique_and_bounded() {
        let cfg = CrossingConfig {
            pair_budget: 50,
            exhaustive_limit: 5,
            ..CrossingConfig::default()
        };
        let plan = pair_plan(40, &cfg);
        assert_eq!(plan.len(), 50);
        let set: HashSet<_> = plan.iter().collect();
        assert_eq!(set.len(), 50);
        assert!(plan.iter().all(|&(i, j)| i < j && j < 40));
        assert_eq!(plan, pair_plan(40, &cfg));
        assert_eq!(pair_plan(5, &cfg).len(), 10);
    }
}
