//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! b"FFMCKPT1"
//! u64 descriptor length, descriptor JSON (network config + parameter specs)
//! u64 parameter count, then per parameter: u64 length, f64 values
//! Adam: u64 step count, f64 lr, beta1, beta2, epsilon,
//!       then per parameter: u64 length, f64 m values, u64 length, f64 v values
//! u64 training step
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{ParamSpec, VelocityNet, VelocityNetConfig};
use crate::error::{Error, Result};
use crate::tensor::{AdamState, Tensor};

pub const MAGIC: &[u8; 8] = b"FFMCKPT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: VelocityNet,
    pub adam: AdamState,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    net: VelocityNetConfig,
    params: Vec<ParamSpec>,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    put_u64(out, values.len() as u64);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, expected: usize) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::Checkpoint(format!("buffer of {n} values, expected {expected}")));
        }
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("buffer too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let descriptor = Descriptor {
            net: self.net.config().clone(),
            params: VelocityNet::param_specs(self.net.config()),
        };
        let json = serde_json::to_vec(&descriptor).expect("descriptor serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u64(&mut out, json.len() as u64);
        out.extend_from_slice(&json);
        put_u64(&mut out, self.net.params().len() as u64);
        for p in self.net.params() {
            put_f64s(&mut out, p.data());
        }
        let a = &self.adam;
        put_u64(&mut out, a.step_count);
        for v in [a.lr, a.beta1, a.beta2, a.epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (m, v) in a.m.iter().zip(&a.v) {
            put_f64s(&mut out, m);
            put_f64s(&mut out, v);
        }
        put_u64(&mut out, self.step);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let len = r.u64()? as usize;
        let descriptor: Descriptor = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("descriptor: {e}")))?;
        let specs = VelocityNet::param_specs(&descriptor.net);
        if specs != descriptor.params {
            return Err(Error::Checkpoint(
                "parameter list does not match the stored network configuration".into(),
            ));
        }
        let count = r.u64()? as usize;
        if count != specs.len() {
            return Err(Error::Checkpoint(format!("{count} parameters, expected {}", specs.len())));
        }
        let mut params = Vec::with_capacity(count);
        for s in &specs {
            let n = s.shape.iter().product();
            params.push(Tensor::new(s.shape.clone(), r.f64s(n)?)?);
        }
        let step_count = r.u64()?;
        let (lr, beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let (mut m, mut v) = (Vec::with_capacity(count), Vec::with_capacity(count));
        for p in &params {
            m.push(r.f64s(p.numel())?);
            v.push(r.f64s(p.numel())?);
        }
        let step = r.u64()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            net: VelocityNet::from_params(descriptor.net, params)?,
            adam: AdamState {
                step_count,
                m,
                v,
                lr,
                beta1,
                beta2,
                epsilon,
            },
            step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
