//! The velocity network: a small U-Net with time-conditioned residual blocks
//! and optional frequency modules at every resolution level.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocityNetConfig {
    pub base_channels: usize,
    /// Number of down/up levels.
    pub depth: usize,
    pub time_embed_dim: usize,
    pub frequency_module: bool,
    pub seed: u64,
}

impl Default for VelocityNetConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            depth: 2,
            time_embed_dim: 32,
            frequency_module: true,
            seed: 0,
        }
    }
}

impl VelocityNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.depth == 0 {
            return Err(Error::InvalidArgument("base_channels and depth must be >= 1".into()));
        }
        if self.time_embed_dim < 2 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument("time_embed_dim must be even and >= 2".into()));
        }
        Ok(())
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

#[derive(Clone, Copy, Debug)]
enum Init {
    /// He-normal scaled by a gain.
    Normal(f64),
    Zeros,
    /// Identity over the channel axes of a `[C, C, 1, 1]` weight.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct ResBlock {
    conv1: Conv,
    time: Conv,
    conv2: Conv,
    skip: Option<Conv>,
}

#[derive(Clone, Copy, Debug)]
struct Freq {
    mag: usize,
    phase: usize,
}

#[derive(Clone, Debug)]
struct Level {
    res: ResBlock,
    freq: Option<Freq>,
}

#[derive(Clone, Debug)]
struct Layout {
    specs: Vec<(ParamSpec, Init)>,
    time: [Conv; 2],
    input: Conv,
    down: Vec<(Level, Conv)>,
    mid: Level,
    up: Vec<(Conv, Level)>,
    output: Conv,
}

struct Builder {
    specs: Vec<(ParamSpec, Init)>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((ParamSpec { name, shape }, init));
        self.specs.len() - 1
    }

    fn conv(&mut self, name: &str, cout: usize, cin: usize, k: usize, gain: f64) -> Conv {
        Conv {
            w: self.add(format!("{name}.w"), vec![cout, cin, k, k], Init::Normal(gain)),
            b: self.add(format!("{name}.b"), vec![cout], Init::Zeros),
        }
    }

    fn linear(&mut self, name: &str, fout: usize, fin: usize, gain: f64) -> Conv {
        Conv {
            w: self.add(format!("{name}.w"), vec![fout, fin], Init::Normal(gain)),
            b: self.add(format!("{name}.b"), vec![fout], Init::Zeros),
        }
    }

    fn res(&mut self, name: &str, cin: usize, cout: usize, embed: usize) -> ResBlock {
        ResBlock {
            conv1: self.conv(&format!("{name}.conv1"), cout, cin, 3, 1.0),
            time: self.linear(&format!("{name}.time"), cout, embed, 1.0),
            // small second conv keeps the block close to its skip path at init
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3, 0.1),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cout, cin, 1, 1.0)),
        }
    }

    fn freq(&mut self, name: &str, c: usize) -> Freq {
        Freq {
            mag: self.add(format!("{name}.mag"), vec![c, c, 1, 1], Init::Zeros),
            phase: self.add(format!("{name}.phase"), vec![c, c, 1, 1], Init::Identity),
        }
    }

    fn level(&mut self, name: &str, cin: usize, cout: usize, embed: usize, freq: bool) -> Level {
        Level {
            res: self.res(&format!("{name}.res"), cin, cout, embed),
            freq: freq.then(|| self.freq(&format!("{name}.freq"), cout)),
        }
    }
}

impl Layout {
    fn of(cfg: &VelocityNetConfig) -> Self {
        let e = cfg.time_embed_dim;
        let mut b = Builder { specs: Vec::new() };
        let time = [b.linear("time.0", e, e, 1.0), b.linear("time.1", e, e, 1.0)];
        let input = b.conv("input", cfg.channels(0), 1, 3, 1.0);
        let mut down = Vec::new();
        for l in 0..cfg.depth {
            let c = cfg.channels(l);
            let level = b.level(&format!("down{l}"), c, c, e, cfg.frequency_module);
            let pool = b.conv(&format!("down{l}.pool"), cfg.channels(l + 1), c, 3, 1.0);
            down.push((level, pool));
        }
        let cd = cfg.channels(cfg.depth);
        let mid = b.level("mid", cd, cd, e, cfg.frequency_module);
        let mut up = Vec::new();
        for l in (0..cfg.depth).rev() {
            let c = cfg.channels(l);
            let lift = b.conv(&format!("up{l}.lift"), c, cfg.channels(l + 1), 3, 1.0);
            let level = b.level(&format!("up{l}"), 2 * c, c, e, cfg.frequency_module);
            up.push((lift, level));
        }
        let output = b.conv("output", 1, cfg.channels(0), 3, 0.1);
        Layout {
            specs: b.specs,
            time,
            input,
            down,
            mid,
            up,
            output,
        }
    }
}

fn init_tensor(spec: &ParamSpec, init: Init, rng: &mut ChaCha8Rng) -> Tensor {
    let shape = spec.shape.clone();
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::Identity => {
            let c = shape[0];
            let mut t = Tensor::zeros(shape);
            for i in 0..c {
                t.data_mut()[i * c + i] = 1.0;
            }
            t
        }
        Init::Normal(gain) => {
            let fan_in: usize = shape[1..].iter().product();
            let std = gain * (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let n = shape.iter().product();
            let data = (0..n).map(|_| normal.sample(rng)).collect();
            Tensor::new(shape, data).expect("finite init")
        }
    }
}

/// Sinusoidal embedding of `t in [0, 1]`, rows `[sin | cos]`.
pub fn time_embedding(t: &[f64], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = Vec::with_capacity(t.len() * dim);
    for &ti in t {
        let arg = |k: usize| 1000.0 * ti * (-(10_000f64).ln() * k as f64 / half as f64).exp();
        data.extend((0..half).map(|k| arg(k).sin()));
        data.extend((0..half).map(|k| arg(k).cos()));
    }
    Tensor::new(vec![t.len(), dim], data).expect("finite embedding")
}

/// Output of [`frequency_module`]: the real part, plus the norm of the
/// discarded imaginary residue.
pub struct FrequencyOutput {
    pub out: Var,
    pub residue: f64,
}

/// `real(ifft2(unpolar(mag_w * |F x|, phase_w * arg F x)))` with the two
/// channel mixes done as 1x1 convolutions.
pub fn frequency_module(tape: &mut Tape, x: Var, mag_w: Var, phase_w: Var) -> Result<FrequencyOutput> {
    let f = tape.fft2(x)?;
    let (mag, phase) = tape.polar(f)?;
    let mag = tape.conv1x1(mag, mag_w)?;
    let phase = tape.conv1x1(phase, phase_w)?;
    let g = tape.unpolar(mag, phase)?;
    let back = tape.ifft2(g)?;
    let residue = tape.complex(back).imag_norm();
    let out = tape.real_part(back)?;
    Ok(FrequencyOutput { out, residue })
}

/// Parameters plus the configuration that fixes their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityNet {
    config: VelocityNetConfig,
    params: Vec<Tensor>,
}

/// A forward pass recorded on a tape.
pub struct Forward {
    pub output: Var,
    pub params: Vec<Var>,
    /// Largest imaginary-residue norm relative to the real output norm over
    /// all frequency modules.
    pub residue_ratio: f64,
}

impl VelocityNet {
    /// Freshly initialized network, deterministic in `config.seed`.
    pub fn new(config: VelocityNetConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::of(&config);
        // one stream per parameter name, so networks that differ only in
        // the frequency modules share every other weight
        let params = layout
            .specs
            .iter()
            .map(|(s, i)| init_tensor(s, *i, &mut stream_rng(config.seed, &s.name, 0)))
            .collect();
        Ok(Self { config, params })
    }

    /// Rebuilds a network from stored parameters; shapes must match the
    /// layout implied by `config`.
    pub fn from_params(config: VelocityNetConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = Self::param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "configuration expects {} parameters, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if s.shape != p.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, configuration expects {:?}",
                    s.name,
                    p.shape(),
                    s.shape
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn param_specs(config: &VelocityNetConfig) -> Vec<ParamSpec> {
        Layout::of(config).specs.into_iter().map(|(s, _)| s).collect()
    }

    pub fn config(&self) -> &VelocityNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records `R(x_t, t)` on `tape`. `x` is `[B, 1, H, W]` with `H`, `W`
    /// powers of two divisible by `2^depth`; `t` has one entry per batch
    /// element.
    pub fn forward(&self, tape: &mut Tape, x: Var, t: &[f64], trainable: bool) -> Result<Forward> {
        let shape = tape.shape(x).to_vec();
        let (b, h, w) = match shape.as_slice() {
            &[b, 1, h, w] => (b, h, w),
            s => return Err(Error::shape("velocity net", "[B, 1, H, W]", format!("{s:?}"))),
        };
        if t.len() != b {
            return Err(Error::shape("velocity net", format!("{b} time values"), t.len()));
        }
        let unit = 1usize << self.config.depth;
        for extent in [h, w] {
            if !extent.is_power_of_two() || extent < unit {
                return Err(Error::NotPowerOfTwo {
                    op: "velocity net",
                    extent,
                });
            }
        }
        let layout = Layout::of(&self.config);
        let p: Vec<Var> = self.params.iter().map(|t| tape.leaf(t.clone(), trainable)).collect();
        let mut ctx = Ctx {
            tape,
            p: &p,
            residue: 0.0,
        };

        let emb = ctx.tape.constant(time_embedding(t, self.config.time_embed_dim));
        let e = ctx.linear(emb, layout.time[0])?;
        let e = ctx.tape.silu(e)?;
        let e = ctx.linear(e, layout.time[1])?;
        let temb = ctx.tape.silu(e)?;

        let mut hcur = ctx.conv(x, layout.input, 1)?;
        let mut skips = Vec::new();
        for (level, pool) in &layout.down {
            hcur = ctx.level(hcur, temb, level)?;
            skips.push(hcur);
            hcur = ctx.conv_strided(hcur, *pool)?;
        }
        hcur = ctx.level(hcur, temb, &layout.mid)?;
        for (lift, level) in &layout.up {
            let up = ctx.tape.upsample2x(hcur)?;
            let up = ctx.conv(up, *lift, 1)?;
            let skip = skips.pop().expect("one skip per level");
            let cat = ctx.tape.concat_channels(up, skip)?;
            hcur = ctx.level(cat, temb, level)?;
        }
        let hcur = ctx.tape.silu(hcur)?;
        let output = ctx.conv(hcur, layout.output, 1)?;
        let residue_ratio = ctx.residue;
        Ok(Forward {
            output,
            params: p,
            residue_ratio,
        })
    }

    /// Predicted velocity for a batch, without recording gradients.
    pub fn predict(&self, x: &Tensor, t: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let f = self.forward(&mut tape, xv, t, false)?;
        Ok(tape.tensor(f.output).clone())
    }
}

struct Ctx<'a> {
    tape: &'a mut Tape,
    p: &'a [Var],
    residue: f64,
}

impl Ctx<'_> {
    fn conv(&mut self, x: Var, c: Conv, pad: usize) -> Result<Var> {
        self.tape.conv2d(x, self.p[c.w], Some(self.p[c.b]), 1, pad)
    }

    fn conv_strided(&mut self, x: Var, c: Conv) -> Result<Var> {
        self.tape.conv2d(x, self.p[c.w], Some(self.p[c.b]), 2, 1)
    }

    fn linear(&mut self, x: Var, c: Conv) -> Result<Var> {
        self.tape.linear(x, self.p[c.w], self.p[c.b])
    }

    fn res(&mut self, x: Var, temb: Var, r: ResBlock) -> Result<Var> {
        let a = self.tape.silu(x)?;
        let h = self.conv(a, r.conv1, 1)?;
        let shift = self.linear(temb, r.time)?;
        let h = self.tape.add_channel_bias(h, shift)?;
        let h = self.tape.silu(h)?;
        let h = self.conv(h, r.conv2, 1)?;
        let skip = match r.skip {
            Some(c) => self.conv(x, c, 0)?,
            None => x,
        };
        self.tape.add(skip, h)
    }

    fn level(&mut self, x: Var, temb: Var, level: &Level) -> Result<Var> {
        let h = self.res(x, temb, level.res)?;
        match level.freq {
            None => Ok(h),
            Some(f) => {
                let fo = frequency_module(self.tape, h, self.p[f.mag], self.p[f.phase])?;
                let norm = self.tape.tensor(fo.out).data().iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    self.residue = self.residue.max(fo.residue / norm);
                }
                self.tape.add(h, fo.out)
            }
        }
    }
}

/// Uniform `t` values for a batch.
pub(crate) fn sample_times(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}
