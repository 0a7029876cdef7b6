//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list is a valid reverse topological order. Gradients are first order
//! only.

use super::conv::{conv2d_backward, conv2d_forward, gemm, ConvGeom};
use super::spectral::{self, phase_of, transform, MAGNITUDE_FLOOR};
use super::{check_finite, ComplexField, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Value {
    Real(Tensor),
    Complex(ComplexField),
}

impl Value {
    fn shape(&self) -> &[usize] {
        match self {
            Value::Real(t) => t.shape(),
            Value::Complex(c) => c.shape(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Add(Var, Var),
    Scale(Var, f64),
    AddChannelBias {
        x: Var,
        bias: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Silu(Var),
    Concat(Var, Var),
    Upsample2x(Var),
    Fft2(Var),
    Ifft2(Var),
    RealPart(Var),
    Magnitude(Var),
    Phase(Var),
    Unpolar {
        mag: Var,
        phase: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
    grad: Option<Value>,
}

/// Records differentiable operations and runs the reverse pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_real(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, rg: bool, name: &'static str) -> Result<Var> {
        check_finite(&data, name)?;
        Ok(self.push(Value::Real(Tensor::from_parts(shape, data)), op, rg))
    }

    fn push_complex(
        &mut self,
        shape: Vec<usize>,
        re: Vec<f64>,
        im: Vec<f64>,
        op: Op,
        rg: bool,
        name: &'static str,
    ) -> Result<Var> {
        check_finite(&re, name)?;
        check_finite(&im, name)?;
        Ok(self.push(Value::Complex(ComplexField { shape, re, im }), op, rg))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf; `requires_grad` leaves receive gradients in [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(Value::Real(t), Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    /// Value of a real node. Panics if `v` holds a complex field.
    pub fn tensor(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Real(t) => t,
            Value::Complex(_) => panic!("node {} is complex", v.0),
        }
    }

    /// Value of a complex node. Panics if `v` holds a real tensor.
    pub fn complex(&self, v: Var) -> &ComplexField {
        match &self.nodes[v.0].value {
            Value::Complex(c) => c,
            Value::Real(_) => panic!("node {} is real", v.0),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of a real node after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        match &self.nodes[v.0].grad {
            Some(Value::Real(t)) => Some(t),
            _ => None,
        }
    }

    pub fn complex_grad(&self, v: Var) -> Option<&ComplexField> {
        match &self.nodes[v.0].grad {
            Some(Value::Complex(c)) => Some(c),
            _ => None,
        }
    }

    // ------------------------------------------------------------------
    // forward ops
    // ------------------------------------------------------------------

    /// Cross-correlation of `x [B,Cin,H,W]` with `w [Cout,Cin,kh,kw]`,
    /// zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let [batch, cin, h, wd] = self.tensor(x).dims4("conv2d")?;
        let [cout, wcin, kh, kw] = self.tensor(w).dims4("conv2d weight")?;
        if wcin != cin {
            return Err(Error::shape("conv2d", format!("{cin} input channels"), wcin));
        }
        if kh % 2 == 0 || kw % 2 == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv2d: kernel {kh}x{kw} must be odd, stride {stride} must be positive"
            )));
        }
        if h + 2 * padding < kh || wd + 2 * padding < kw {
            return Err(Error::shape("conv2d", format!("input >= kernel {kh}x{kw}"), format!("{h}x{wd}")));
        }
        if let Some(b) = b {
            if self.tensor(b).shape() != [cout] {
                return Err(Error::shape("conv2d bias", format!("[{cout}]"), format!("{:?}", self.tensor(b).shape())));
            }
        }
        let geom = ConvGeom {
            batch,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            pad: padding,
        };
        let y = conv2d_forward(
            self.tensor(x).data(),
            self.tensor(w).data(),
            b.map(|b| self.tensor(b).data()),
            &geom,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push_real(
            vec![batch, cout, geom.out_h(), geom.out_w()],
            y,
            Op::Conv2d { x, w, b, geom },
            rg,
            "conv2d",
        )
    }

    /// Per-pixel channel mix: `w [C',C,1,1]`, no bias.
    pub fn conv1x1(&mut self, x: Var, w: Var) -> Result<Var> {
        let [_, cin, _, _] = self.tensor(x).dims4("conv1x1")?;
        let ws = self.tensor(w).shape();
        if ws.len() != 4 || ws[1] != cin || ws[2] != 1 || ws[3] != 1 {
            return Err(Error::shape("conv1x1", format!("[C', {cin}, 1, 1]"), format!("{ws:?}")));
        }
        self.conv2d(x, w, None, 1, 0)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", format!("{:?}", ta.shape()), format!("{:?}", tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push_real(shape, data, Op::Add(a, b), rg, "add")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let t = self.tensor(x);
        let data = t.data().iter().map(|v| v * c).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(x);
        self.push_real(shape, data, Op::Scale(x, c), rg, "scale")
    }

    /// `x [B,C,H,W] + bias [B,C]` broadcast over the spatial axes.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let [b, c, h, w] = self.tensor(x).dims4("add_channel_bias")?;
        if self.tensor(bias).shape() != [b, c] {
            return Err(Error::shape(
                "add_channel_bias",
                format!("[{b}, {c}]"),
                format!("{:?}", self.tensor(bias).shape()),
            ));
        }
        let hw = h * w;
        let bd = self.tensor(bias).data();
        let data = self
            .tensor(x)
            .data()
            .chunks(hw)
            .zip(bd)
            .flat_map(|(plane, &s)| plane.iter().map(move |v| v + s))
            .collect();
        let rg = self.rg(x) || self.rg(bias);
        self.push_real(vec![b, c, h, w], data, Op::AddChannelBias { x, bias }, rg, "add_channel_bias")
    }

    /// `x [B,in] * w[out,in]^T + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let [batch, fin] = self.tensor(x).dims2("linear")?;
        let [fout, win] = self.tensor(w).dims2("linear weight")?;
        if win != fin || self.tensor(b).shape() != [fout] {
            return Err(Error::shape(
                "linear",
                format!("w [{fout}, {fin}], b [{fout}]"),
                format!("w {:?}, b {:?}", self.tensor(w).shape(), self.tensor(b).shape()),
            ));
        }
        let mut y: Vec<f64> = (0..batch).flat_map(|_| self.tensor(b).data().iter().copied()).collect();
        gemm(batch, fin, fout, self.tensor(x).data(), false, self.tensor(w).data(), true, 1.0, &mut y);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push_real(vec![batch, fout], y, Op::Linear { x, w, b }, rg, "linear")
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let t = self.tensor(x);
        let data = t.data().iter().map(|&v| v * sigmoid(v)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(x);
        self.push_real(shape, data, Op::Silu(x), rg, "silu")
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [ba, ca, ha, wa] = self.tensor(a).dims4("concat")?;
        let [bb, cb, hb, wb] = self.tensor(b).dims4("concat")?;
        if (ba, ha, wa) != (bb, hb, wb) {
            return Err(Error::shape("concat", format!("[{ba}, _, {ha}, {wa}]"), format!("[{bb}, _, {hb}, {wb}]")));
        }
        let (la, lb) = (ca * ha * wa, cb * hb * wb);
        let (da, db) = (self.tensor(a).data(), self.tensor(b).data());
        let mut data = Vec::with_capacity(da.len() + db.len());
        for i in 0..ba {
            data.extend_from_slice(&da[i * la..(i + 1) * la]);
            data.extend_from_slice(&db[i * lb..(i + 1) * lb]);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push_real(vec![ba, ca + cb, ha, wa], data, Op::Concat(a, b), rg, "concat")
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.tensor(x).dims4("upsample2x")?;
        let src = self.tensor(x).data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut data = vec![0.0; b * c * oh * ow];
        for (plane, out) in src.chunks(h * w).zip(data.chunks_mut(oh * ow)) {
            for y in 0..oh {
                for xx in 0..ow {
                    out[y * ow + xx] = plane[(y / 2) * w + xx / 2];
                }
            }
        }
        let rg = self.rg(x);
        self.push_real(vec![b, c, oh, ow], data, Op::Upsample2x(x), rg, "upsample2x")
    }

    /// Unitary 2D FFT of a real node.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let f = spectral::fft2(self.tensor(x))?;
        let rg = self.rg(x);
        self.push_complex(f.shape, f.re, f.im, Op::Fft2(x), rg, "fft2")
    }

    /// Unitary inverse 2D FFT of a complex node.
    pub fn ifft2(&mut self, f: Var) -> Result<Var> {
        let out = spectral::ifft2(self.complex(f))?;
        let rg = self.rg(f);
        self.push_complex(out.shape, out.re, out.im, Op::Ifft2(f), rg, "ifft2")
    }

    pub fn real_part(&mut self, f: Var) -> Result<Var> {
        let c = self.complex(f);
        let (shape, data) = (c.shape.clone(), c.re.clone());
        let rg = self.rg(f);
        self.push_real(shape, data, Op::RealPart(f), rg, "real_part")
    }

    pub fn magnitude(&mut self, f: Var) -> Result<Var> {
        let c = self.complex(f);
        let data = c.re.iter().zip(&c.im).map(|(r, i)| (r * r + i * i).sqrt()).collect();
        let shape = c.shape.clone();
        let rg = self.rg(f);
        self.push_real(shape, data, Op::Magnitude(f), rg, "magnitude")
    }

    pub fn phase(&mut self, f: Var) -> Result<Var> {
        let c = self.complex(f);
        let data = c.re.iter().zip(&c.im).map(|(&r, &i)| phase_of(r, i)).collect();
        let shape = c.shape.clone();
        let rg = self.rg(f);
        self.push_real(shape, data, Op::Phase(f), rg, "phase")
    }

    /// `(magnitude, phase)` of a complex node.
    pub fn polar(&mut self, f: Var) -> Result<(Var, Var)> {
        Ok((self.magnitude(f)?, self.phase(f)?))
    }

    pub fn unpolar(&mut self, mag: Var, phase: Var) -> Result<Var> {
        let c = spectral::unpolar(self.tensor(mag), self.tensor(phase))?;
        let rg = self.rg(mag) || self.rg(phase);
        self.push_complex(c.shape, c.re, c.im, Op::Unpolar { mag, phase }, rg, "unpolar")
    }

    /// Mean of squared differences, as a one-element tensor.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.tensor(pred), self.tensor(target));
        if p.shape() != t.shape() {
            return Err(Error::shape("mse", format!("{:?}", p.shape()), format!("{:?}", t.shape())));
        }
        let n = p.numel() as f64;
        let loss = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let rg = self.rg(pred) || self.rg(target);
        self.push_real(vec![1], vec![loss], Op::Mse { pred, target }, rg, "mse")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.tensor(x).data().iter().sum();
        let rg = self.rg(x);
        self.push_real(vec![1], vec![s], Op::Sum(x), rg, "sum")
    }

    // ------------------------------------------------------------------
    // reverse pass
    // ------------------------------------------------------------------

    /// Fills gradients of every `requires_grad` node reachable from `loss`.
    /// Earlier gradients on this tape are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.tensor(loss).is_scalar() {
            return Err(Error::shape("backward", "scalar loss", format!("{:?}", self.shape(loss))));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Value::Real(Tensor::scalar(1.0)));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Value, grads: &mut [Option<Value>]) -> Result<()> {
        let real = |g: &Value| -> Vec<f64> {
            match g {
                Value::Real(t) => t.data().to_vec(),
                Value::Complex(_) => unreachable!("real node with complex gradient"),
            }
        };
        let cplx = |g: &Value| -> (Vec<f64>, Vec<f64>) {
            match g {
                Value::Complex(c) => (c.re.clone(), c.im.clone()),
                Value::Real(_) => unreachable!("complex node with real gradient"),
            }
        };

        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let dy = real(g);
                let (dx, dw, db) = conv2d_backward(
                    self.tensor(x).data(),
                    self.tensor(w).data(),
                    &dy,
                    &geom,
                    self.rg(x),
                );
                if let Some(dx) = dx {
                    self.accum_real(grads, x, dx);
                }
                self.accum_real(grads, w, dw);
                if let Some(b) = b {
                    self.accum_real(grads, b, db);
                }
            }
            Op::Add(a, b) => {
                let d = real(g);
                self.accum_real(grads, a, d.clone());
                self.accum_real(grads, b, d);
            }
            Op::Scale(x, c) => {
                let d = real(g).into_iter().map(|v| v * c).collect();
                self.accum_real(grads, x, d);
            }
            Op::AddChannelBias { x, bias } => {
                let d = real(g);
                let [_, _, h, w] = self.tensor(x).dims4("add_channel_bias")?;
                let db = d.chunks(h * w).map(|p| p.iter().sum()).collect();
                self.accum_real(grads, x, d);
                self.accum_real(grads, bias, db);
            }
            Op::Linear { x, w, b } => {
                let dy = real(g);
                let [batch, fin] = self.tensor(x).dims2("linear")?;
                let fout = self.tensor(b).numel();
                if self.rg(x) {
                    let mut dx = vec![0.0; batch * fin];
                    gemm(batch, fout, fin, &dy, false, self.tensor(w).data(), false, 0.0, &mut dx);
                    self.accum_real(grads, x, dx);
                }
                let mut dw = vec![0.0; fout * fin];
                gemm(fout, batch, fin, &dy, true, self.tensor(x).data(), false, 0.0, &mut dw);
                self.accum_real(grads, w, dw);
                let mut db = vec![0.0; fout];
                for row in dy.chunks(fout) {
                    for (a, v) in db.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                self.accum_real(grads, b, db);
            }
            Op::Silu(x) => {
                let d = real(g)
                    .into_iter()
                    .zip(self.tensor(x).data())
                    .map(|(gv, &v)| {
                        let s = sigmoid(v);
                        gv * s * (1.0 + v * (1.0 - s))
                    })
                    .collect();
                self.accum_real(grads, x, d);
            }
            Op::Concat(a, b) => {
                let d = real(g);
                let [batch, ca, h, w] = self.tensor(a).dims4("concat")?;
                let cb = self.tensor(b).shape()[1];
                let (la, lb) = (ca * h * w, cb * h * w);
                let mut da = Vec::with_capacity(batch * la);
                let mut db = Vec::with_capacity(batch * lb);
                for chunk in d.chunks(la + lb) {
                    da.extend_from_slice(&chunk[..la]);
                    db.extend_from_slice(&chunk[la..]);
                }
                self.accum_real(grads, a, da);
                self.accum_real(grads, b, db);
            }
            Op::Upsample2x(x) => {
                let d = real(g);
                let [_, _, h, w] = self.tensor(x).dims4("upsample2x")?;
                let ow = 2 * w;
                let mut dx = vec![0.0; self.tensor(x).numel()];
                for (plane, out) in d.chunks(4 * h * w).zip(dx.chunks_mut(h * w)) {
                    for y in 0..2 * h {
                        for xx in 0..ow {
                            out[(y / 2) * w + xx / 2] += plane[y * ow + xx];
                        }
                    }
                }
                self.accum_real(grads, x, dx);
            }
            Op::Fft2(x) => {
                // adjoint of the unitary forward transform is the inverse
                let (gr, gi) = cplx(g);
                let (dr, _) = transform(self.tensor(x).shape(), &gr, &gi, true);
                self.accum_real(grads, x, dr);
            }
            Op::Ifft2(f) => {
                let (gr, gi) = cplx(g);
                let (dr, di) = transform(self.complex(f).shape(), &gr, &gi, false);
                self.accum_complex(grads, f, dr, di);
            }
            Op::RealPart(f) => {
                let d = real(g);
                let zeros = vec![0.0; d.len()];
                self.accum_complex(grads, f, d, zeros);
            }
            Op::Magnitude(f) => {
                let d = real(g);
                let c = self.complex(f);
                let mut dr = Vec::with_capacity(d.len());
                let mut di = Vec::with_capacity(d.len());
                for ((gv, &r), &im) in d.iter().zip(&c.re).zip(&c.im) {
                    let m = r.hypot(im).max(MAGNITUDE_FLOOR);
                    dr.push(gv * r / m);
                    di.push(gv * im / m);
                }
                self.accum_complex(grads, f, dr, di);
            }
            Op::Phase(f) => {
                let d = real(g);
                let c = self.complex(f);
                let mut dr = Vec::with_capacity(d.len());
                let mut di = Vec::with_capacity(d.len());
                for ((gv, &r), &im) in d.iter().zip(&c.re).zip(&c.im) {
                    let m = r.hypot(im).max(MAGNITUDE_FLOOR);
                    let m2 = m * m;
                    dr.push(-gv * im / m2);
                    di.push(gv * r / m2);
                }
                self.accum_complex(grads, f, dr, di);
            }
            Op::Unpolar { mag, phase } => {
                let (gr, gi) = cplx(g);
                let (m, p) = (self.tensor(mag).data(), self.tensor(phase).data());
                let mut dm = Vec::with_capacity(m.len());
                let mut dp = Vec::with_capacity(m.len());
                for k in 0..m.len() {
                    let (s, c) = p[k].sin_cos();
                    dm.push(gr[k] * c + gi[k] * s);
                    dp.push(m[k] * (-gr[k] * s + gi[k] * c));
                }
                self.accum_real(grads, mag, dm);
                self.accum_real(grads, phase, dp);
            }
            Op::Mse { pred, target } => {
                let gs = real(g)[0];
                let (p, t) = (self.tensor(pred).data(), self.tensor(target).data());
                let n = p.len() as f64;
                let dp: Vec<f64> = p.iter().zip(t).map(|(a, b)| gs * 2.0 * (a - b) / n).collect();
                if self.rg(target) {
                    self.accum_real(grads, target, dp.iter().map(|v| -v).collect());
                }
                self.accum_real(grads, pred, dp);
            }
            Op::Sum(x) => {
                let gs = real(g)[0];
                self.accum_real(grads, x, vec![gs; self.tensor(x).numel()]);
            }
        }
        Ok(())
    }

    fn accum_real(&self, grads: &mut [Option<Value>], v: Var, d: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(Value::Real(t)) => {
                for (a, b) in t.data_mut().iter_mut().zip(&d) {
                    *a += b;
                }
            }
            slot @ None => {
                *slot = Some(Value::Real(Tensor::from_parts(self.shape(v).to_vec(), d)));
            }
            Some(Value::Complex(_)) => unreachable!("real gradient into complex node"),
        }
    }

    fn accum_complex(&self, grads: &mut [Option<Value>], v: Var, dr: Vec<f64>, di: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(Value::Complex(c)) => {
                for (a, b) in c.re.iter_mut().zip(&dr) {
                    *a += b;
                }
                for (a, b) in c.im.iter_mut().zip(&di) {
                    *a += b;
                }
            }
            slot @ None => {
                *slot = Some(Value::Complex(ComplexField {
                    shape: self.shape(v).to_vec(),
                    re: dr,
                    im: di,
                }));
            }
            Some(Value::Real(_)) => unreachable!("complex gradient into real node"),
        }
    }
}
