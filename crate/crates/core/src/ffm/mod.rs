//! Frequency-domain flow matching.
//!
//! A network `R(x_t, t)` regresses the constant velocity `x1 - x0` of the
//! straight path `x_t = t x1 + (1 - t) x0` between a clean image `x0` and
//! its noisy counterpart `x1`. Denoising integrates the learned field from
//! `t = 1` to `t = 0` with explicit Euler steps.
//!
//! The frequency module (FFT, 1x1 convolutions on magnitude and phase,
//! inverse FFT, real part) is added residually after the residual block of
//! every U-Net level. Its magnitude mix starts at zero and its phase mix
//! at the identity, so an untrained module is a no-op.

mod checkpoint;
mod net;
mod sampler;
mod train;

pub use checkpoint::{Checkpoint, MAGIC};
pub use net::{frequency_module, time_embedding, FrequencyOutput, Forward, ParamSpec, VelocityNet, VelocityNetConfig};
pub use sampler::{batch_to_images, euler, images_to_batch, sample_images, SamplerConfig, VelocityField};
pub use train::{interpolate_batch, resume, train, StepRecord, TrainConfig, TrainLog};

use crate::error::Result;
use crate::image::ImageGrid;
use crate::metrics::{csv_header, evaluate_split, AggregateReport};
use crate::purify::TrainingPair;

/// Denoises `inputs` with a trained network and scores them against
/// `labels`; both are `(id, image)` lists in the same order.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    inputs: &[(String, ImageGrid)],
    labels: &[(String, ImageGrid)],
    sampler: &SamplerConfig,
) -> Result<AggregateReport> {
    let images: Vec<ImageGrid> = inputs.iter().map(|(_, img)| img.clone()).collect();
    let denoised = sample_images(&ckpt.net, &images, sampler)?;
    let named: Vec<(String, ImageGrid)> = inputs.iter().map(|(id, _)| id.clone()).zip(denoised).collect();
    evaluate_split(&named, labels)
}

/// Frequency-enabled and image-domain twins trained on identical data.
#[derive(Clone, Debug)]
pub struct DomainAblation {
    pub frequency: AggregateReport,
    pub image: AggregateReport,
    pub frequency_log: TrainLog,
    pub image_log: TrainLog,
}

impl DomainAblation {
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{}\n{}\n",
            csv_header("Domain"),
            self.frequency.csv_row("Frequency"),
            self.image.csv_row("Image")
        )
    }
}

/// Trains and evaluates the network with and without frequency modules.
/// Seeds, data order and every other setting are shared.
pub fn ablation_domain(
    pairs: &[TrainingPair],
    test_inputs: &[(String, ImageGrid)],
    test_labels: &[(String, ImageGrid)],
    train_cfg: &TrainConfig,
    net_cfg: &VelocityNetConfig,
    sampler: &SamplerConfig,
) -> Result<DomainAblation> {
    let run = |frequency_module: bool| -> Result<(AggregateReport, TrainLog)> {
        let cfg = VelocityNetConfig {
            frequency_module,
            ..net_cfg.clone()
        };
        let (ckpt, log) = train(pairs, train_cfg, &cfg)?;
        Ok((evaluate_checkpoint(&ckpt, test_inputs, test_labels, sampler)?, log))
    };
    let (frequency, frequency_log) = run(true)?;
    let (image, image_log) = run(false)?;
    Ok(DomainAblation {
        frequency,
        image,
        frequency_log,
        image_log,
    })
}
