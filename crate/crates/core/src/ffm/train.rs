use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::net::{sample_times, VelocityNet, VelocityNetConfig};
use super::sampler::images_to_batch;
use crate::error::{Error, Result};
use crate::purify::TrainingPair;
use crate::rng::stream_rng;
use crate::tensor::{adam_step, AdamState, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            steps_per_epoch: 100,
            lr: 1e-3,
            batch_size: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs, steps_per_epoch and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Imaginary residue of the frequency modules relative to their output.
    pub residue: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,epoch,loss,residue\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{:e},{:e}\n", r.step, r.epoch, r.loss, r.residue));
        }
        s
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// Mean loss over the last `n` steps.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let k = n.min(self.records.len());
        (k > 0).then(|| self.records[self.records.len() - k..].iter().map(|r| r.loss).sum::<f64>() / k as f64)
    }
}

/// One batch: `x_t = t x1 + (1 - t) x0` and the target `v = x1 - x0`.
pub fn interpolate_batch(x0: &Tensor, x1: &Tensor, t: &[f64]) -> Result<(Tensor, Tensor)> {
    if x0.shape() != x1.shape() || x0.shape().first() != Some(&t.len()) {
        return Err(Error::shape("interpolate_batch", format!("{:?}", x0.shape()), format!("{:?}", x1.shape())));
    }
    let per = x0.numel() / t.len().max(1);
    let mut xt = Vec::with_capacity(x0.numel());
    let mut v = Vec::with_capacity(x0.numel());
    for (i, (a, b)) in x0.data().chunks(per).zip(x1.data().chunks(per)).enumerate() {
        let ti = t[i];
        xt.extend(a.iter().zip(b).map(|(p, q)| ti * q + (1.0 - ti) * p));
        v.extend(a.iter().zip(b).map(|(p, q)| q - p));
    }
    Ok((Tensor::new(x0.shape().to_vec(), xt)?, Tensor::new(x0.shape().to_vec(), v)?))
}

/// Flow-matching training: pairs map `input` (`x1`, noisy) to `label`
/// (`x0`, clean). Fails with [`Error::Diverged`] on a non-finite loss.
pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig, net_cfg: &VelocityNetConfig) -> Result<(Checkpoint, TrainLog)> {
    let net = VelocityNet::new(net_cfg.clone())?;
    let adam = AdamState::new(net.params(), cfg.lr);
    let start = Checkpoint {
        net,
        adam,
        step: 0,
    };
    resume(start, pairs, cfg)
}

/// Continues training from `ckpt` until `cfg.total_steps()` is reached.
pub fn resume(mut ckpt: Checkpoint, pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<(Checkpoint, TrainLog)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one pair".into()));
    }
    for p in pairs {
        pairs[0].input.check_extent(&p.input, "train")?;
        pairs[0].input.check_extent(&p.label, "train")?;
    }
    let mut log = TrainLog::default();
    let total = cfg.total_steps() as u64;
    while ckpt.step < total {
        let step = ckpt.step as usize;
        let mut rng = stream_rng(cfg.seed, "train", ckpt.step);
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..pairs.len())).collect();
        let t = sample_times(&mut rng, cfg.batch_size);
        let x0 = images_to_batch(&idx.iter().map(|&i| &pairs[i].label).collect::<Vec<_>>())?;
        let x1 = images_to_batch(&idx.iter().map(|&i| &pairs[i].input).collect::<Vec<_>>())?;
        let (xt, v) = interpolate_batch(&x0, &x1, &t)?;

        let mut tape = Tape::new();
        let xv = tape.constant(xt);
        let target = tape.constant(v);
        let fwd = ckpt.net.forward(&mut tape, xv, &t, true).map_err(|e| diverged(e, step))?;
        let loss = tape.mse(fwd.output, target).map_err(|e| diverged(e, step))?;
        let loss_value = tape.tensor(loss).data()[0];
        if !loss_value.is_finite() {
            return Err(Error::Diverged { step, loss: loss_value });
        }
        tape.backward(loss).map_err(|e| diverged(e, step))?;
        let grads: Vec<Tensor> = fwd
            .params
            .iter()
            .zip(ckpt.net.params())
            .map(|(&p, w)| tape.grad(p).cloned().unwrap_or_else(|| Tensor::zeros(w.shape().to_vec())))
            .collect();
        drop(tape);
        adam_step(ckpt.net.params_mut(), &grads, &mut ckpt.adam)?;
        if ckpt.net.params().iter().any(|p| p.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { step, loss: loss_value });
        }
        log.records.push(StepRecord {
            step,
            epoch: step / cfg.steps_per_epoch,
            loss: loss_value,
            residue: fwd.residue_ratio,
        });
        ckpt.step += 1;
    }
    Ok((ckpt, log))
}

fn diverged(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { step, loss: f64::NAN },
        other => other,
    }
}
