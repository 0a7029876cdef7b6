use serde::{Deserialize, Serialize};

use super::net::VelocityNet;
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub num_steps: usize,
    /// Images per network call.
    pub batch_size: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_steps: 10,
            batch_size: 8,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("num_steps and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anything that predicts a velocity for a batch `[B, 1, H, W]` at times `t`.
pub trait VelocityField {
    fn velocity(&self, x: &Tensor, t: &[f64]) -> Result<Tensor>;
}

impl VelocityField for VelocityNet {
    fn velocity(&self, x: &Tensor, t: &[f64]) -> Result<Tensor> {
        self.predict(x, t)
    }
}

/// Euler integration from `t = 1` down to `t = 0`: `x <- x - dt * v(x, t)`.
/// No clipping is applied.
pub fn euler(field: &dyn VelocityField, x1: &Tensor, num_steps: usize) -> Result<Tensor> {
    if num_steps == 0 {
        return Err(Error::InvalidArgument("num_steps must be >= 1".into()));
    }
    let batch = x1.shape().first().copied().unwrap_or(0);
    let dt = 1.0 / num_steps as f64;
    let mut x = x1.clone();
    for k in 0..num_steps {
        let t = 1.0 - k as f64 * dt;
        let v = field.velocity(&x, &vec![t; batch])?;
        if v.shape() != x.shape() {
            return Err(Error::shape("euler", format!("{:?}", x.shape()), format!("{:?}", v.shape())));
        }
        for (xi, vi) in x.data_mut().iter_mut().zip(v.data()) {
            *xi -= dt * vi;
        }
    }
    Ok(x)
}

/// Stacks same-sized images into `[B, 1, H, W]`.
pub fn images_to_batch(images: &[&ImageGrid]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty image batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * w * h);
    for img in images {
        first.check_extent(img, "images_to_batch")?;
        data.extend_from_slice(img.values());
    }
    Tensor::new(vec![images.len(), 1, h, w], data)
}

/// Splits `[B, 1, H, W]` into images, clipping to `[0, 1]`.
pub fn batch_to_images(t: &Tensor) -> Result<Vec<ImageGrid>> {
    let (h, w) = match t.shape() {
        &[_, 1, h, w] => (h, w),
        s => return Err(Error::shape("batch_to_images", "[B, 1, H, W]", format!("{s:?}"))),
    };
    t.data()
        .chunks(h * w)
        .map(|plane| ImageGrid::from_clamped(w, h, plane.to_vec()))
        .collect()
}

/// Denoises every image, `cfg.batch_size` at a time; outputs are clipped.
pub fn sample_images(field: &dyn VelocityField, inputs: &[ImageGrid], cfg: &SamplerConfig) -> Result<Vec<ImageGrid>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(cfg.batch_size) {
        let refs: Vec<&ImageGrid> = chunk.iter().collect();
        let x0 = euler(field, &images_to_batch(&refs)?, cfg.num_steps)?;
        out.extend(batch_to_images(&x0)?);
    }
    Ok(out)
}
