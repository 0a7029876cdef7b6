//! Full-reference image quality metrics.
//!
//! Seven metrics in two groups: contour metrics (FSIM, GMSD, SSIM) and
//! texture metrics (VIF, NQM, PSNR, RMSE). All take `(candidate, reference)`
//! images normalized to data range 1. SSIM, FSIM, GMSD and RMSE are
//! symmetric; VIF and NQM are not. Windowed filters use symmetric boundary
//! padding.

mod fidelity;
pub(crate) mod filter;
mod fsim;
mod gmsd;
mod nqm;
mod ssim;
mod vif;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use fidelity::{psnr, rmse, PSNR_CAP_DB};
pub use fsim::{fsim, fsim_planes, FSIM_MIN_SIZE};
pub use gmsd::{gmsd, gmsd_planes, GMSD_C};
pub use nqm::{csf_threshold, nqm, nqm_planes, NQM_CAP_DB, NQM_PIXELS_PER_DEGREE};
pub use ssim::{local_mean, ssim, ssim_from_moments, ssim_planes, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use vif::{vif, vif_planes, VIF_NOISE_VAR};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Column order of every metric table.
pub const METRIC_NAMES: [&str; 7] = ["FSIM", "GMSD", "SSIM", "VIF", "NQM", "PSNR", "RMSE"];

/// Slack allowed above 1 for the bounded similarity metrics.
pub const RANGE_EPS: f64 = 1e-6;

/// All seven metrics for one `(candidate, reference)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fsim: f64,
    pub gmsd: f64,
    pub ssim: f64,
    pub vif: f64,
    /// Approximate: the viewing model is declared, not measured.
    pub nqm: f64,
    pub psnr: f64,
    pub rmse: f64,
    pub data_range: f64,
}

impl MetricReport {
    pub fn values(&self) -> [f64; 7] {
        [
            self.fsim, self.gmsd, self.ssim, self.vif, self.nqm, self.psnr, self.rmse,
        ]
    }

    /// Checks the documented value ranges; returns the first violation.
    pub fn check_ranges(&self) -> Result<(), String> {
        check_value_ranges(&self.values())
    }
}

/// Range checks shared by per-image reports and aggregated means.
pub fn check_value_ranges(v: &[f64; 7]) -> Result<(), String> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(format!("{} is not finite", METRIC_NAMES[i]));
    }
    let [fsim, gmsd, ssim, vif, nqm, psnr, rmse] = *v;
    for (name, x) in [("FSIM", fsim), ("SSIM", ssim), ("VIF", vif)] {
        if !(0.0..=1.0 + RANGE_EPS).contains(&x) {
            return Err(format!("{name} = {x} outside [0, 1]"));
        }
    }
    if gmsd < 0.0 || rmse < 0.0 {
        return Err(format!("negative distance: GMSD {gmsd}, RMSE {rmse}"));
    }
    if psnr > PSNR_CAP_DB || nqm.abs() > NQM_CAP_DB {
        return Err(format!("dB value above cap: PSNR {psnr}, NQM {nqm}"));
    }
    Ok(())
}

/// Computes all seven metrics.
pub fn evaluate_pair(candidate: &ImageGrid, reference: &ImageGrid) -> Result<MetricReport> {
    candidate.check_extent(reference, "evaluate_pair")?;
    let (a, b) = (candidate.values(), reference.values());
    let (w, h) = (candidate.width(), candidate.height());
    let mse = fidelity::mse_planes(a, b);
    Ok(MetricReport {
        fsim: fsim_planes(a, b, w, h, 1.0)?,
        gmsd: gmsd_planes(a, b, w, h, 1.0),
        ssim: ssim_planes(a, b, w, h, 1.0),
        vif: vif_planes(a, b, w, h, 1.0)?,
        nqm: nqm_planes(a, b, w, h, 1.0)?,
        psnr: fidelity::psnr_from_mse(mse, 1.0),
        rmse: mse.sqrt(),
        data_range: 1.0,
    })
}

/// Mean and population standard deviation per metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub count: usize,
    pub mean: [f64; 7],
    pub std: [f64; 7],
    pub per_image: Vec<(String, MetricReport)>,
}

impl AggregateReport {
    pub fn from_reports(per_image: Vec<(String, MetricReport)>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::InvalidArgument("cannot aggregate an empty set".into()));
        }
        let n = per_image.len() as f64;
        let mut mean = [0.0; 7];
        for (_, r) in &per_image {
            for (m, v) in mean.iter_mut().zip(r.values()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = [0.0; 7];
        for (_, r) in &per_image {
            for (k, v) in r.values().iter().enumerate() {
                std[k] += (v - mean[k]).powi(2);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
        }
        Ok(Self {
            count: per_image.len(),
            mean,
            std,
            per_image,
        })
    }

    pub fn ssim_mean(&self) -> f64 {
        self.mean[2]
    }

    /// One table row: `label,mean±std,...` with four decimals.
    pub fn csv_row(&self, label: &str) -> String {
        let mut row = label.to_string();
        for k in 0..7 {
            let _ = write!(row, ",{:.4}±{:.4}", self.mean[k], self.std[k]);
        }
        row
    }
}

/// CSV header whose first column is named `first`.
pub fn csv_header(first: &str) -> String {
    let mut h = first.to_string();
    for name in METRIC_NAMES {
        h.push(',');
        h.push_str(name);
    }
    h
}

/// Scores `denoised` against `labels`, both keyed by sample id in the same
/// order.
pub fn evaluate_split(
    denoised: &[(String, ImageGrid)],
    labels: &[(String, ImageGrid)],
) -> Result<AggregateReport> {
    if denoised.is_empty() {
        return Err(Error::InvalidArgument("evaluate_split: empty set".into()));
    }
    if denoised.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "evaluate_split: {} images vs {} labels",
            denoised.len(),
            labels.len()
        )));
    }
    let mut per_image = Vec::with_capacity(denoised.len());
    for ((id, img), (label_id, label)) in denoised.iter().zip(labels) {
        if id != label_id {
            return Err(Error::InvalidArgument(format!(
                "evaluate_split: id mismatch {id} vs {label_id}"
            )));
        }
        per_image.push((id.clone(), evaluate_pair(img, label)?));
    }
    AggregateReport::from_reports(per_image)
}
