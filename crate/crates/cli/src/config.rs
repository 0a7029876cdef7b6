//! Experiment configuration: one TOML document with a section per stage.
//!
//! ```toml
//! seed = 0
//!
//! [dataset]
//! count = 300
//! size = 64
//!
//! [purify]
//! t = 0.0
//! combination = "I"
//!
//! [model]
//! base_channels = 8
//!
//! [train]
//! epochs = 8
//! steps_per_epoch = 100
//!
//! [sample]
//! num_steps = 10
//!
//! [evaluate]
//! split = "test"
//! method = "FFM"
//! ```
//!
//! Every section and key is optional; unknown keys are rejected. Stage
//! seeds are not set individually: each stage derives its own from the
//! global `seed`.

use std::fs;
use std::path::Path;

use ffm_core::crossing::CrossingConfig;
use ffm_core::ffm::{SamplerConfig, TrainConfig, VelocityNetConfig};
use ffm_core::phantom::{DatasetConfig, Split};
use ffm_core::purify::PurifyConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub purify: PurifyConfig,
    pub crossing: CrossingConfig,
    pub model: VelocityNetConfig,
    pub train: TrainConfig,
    pub sample: SamplerConfig,
    pub evaluate: EvaluateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub split: Split,
    /// Row label of the denoiser in the report.
    pub method: String,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            method: "FFM".into(),
        }
    }
}

/// A 64-bit seed for `stage`, derived from the global seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(b"ffm-stage\0")
        .chain_update(stage.as_bytes())
        .chain_update(seed.to_le_bytes())
        .finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let stage_seeds = [
            ("dataset.seed", self.dataset.seed),
            ("crossing.seed", self.crossing.seed),
            ("model.seed", self.model.seed),
            ("train.seed", self.train.seed),
        ];
        if let Some((key, _)) = stage_seeds.iter().find(|(_, s)| *s != 0) {
            return Err(CliError::Validation(format!(
                "{key} is derived from the global seed; set `seed` instead"
            )));
        }
        self.dataset.validate()?;
        self.purify.validate()?;
        self.crossing.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.sample.validate()?;
        if self.evaluate.method.is_empty() || self.evaluate.method.contains([',', '\n']) {
            return Err(CliError::Validation(format!(
                "evaluate.method {:?} must be a non-empty CSV-safe label",
                self.evaluate.method
            )));
        }
        Ok(())
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            seed: stage_seed(self.seed, "dataset"),
            ..self.dataset.clone()
        }
    }

    pub fn crossing(&self) -> CrossingConfig {
        CrossingConfig {
            seed: stage_seed(self.seed, "crossing"),
            ..self.crossing.clone()
        }
    }

    pub fn model(&self) -> VelocityNetConfig {
        VelocityNetConfig {
            seed: stage_seed(self.seed, "model"),
            ..self.model.clone()
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            seed: stage_seed(self.seed, "train"),
            ..self.train.clone()
        }
    }
}
