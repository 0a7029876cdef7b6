//! Tensor-engine checks against independent oracles: nested-loop
//! convolution, explicit matrix products, scalar loss loops and central
//! finite differences.

// oracles index explicitly
#![allow(clippy::needless_range_loop)]

use ffm_core::tensor::{Tape, Var};
use ffm_core::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn naive_conv(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
    let (bs, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; bs * cout * oh * ow];
    for n in 0..bs {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((n * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((co * cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((n * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn conv2d_ones_center_is_nine() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::filled(vec![1, 1, 3, 3], 1.0));
    let w = tape.constant(Tensor::filled(vec![1, 1, 3, 3], 1.0));
    let y = tape.conv2d(x, w, None, 1, 1).unwrap();
    assert_eq!(tape.tensor(y).shape(), &[1, 1, 3, 3]);
    assert_eq!(tape.tensor(y).data()[4], 9.0);
}

#[test]
fn conv2d_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xt = random(&[2, 1, 6, 4], &mut rng);
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let mut tape = Tape::new();
    let x = tape.constant(xt.clone());
    let w = tape.constant(Tensor::new(vec![1, 1, 3, 3], k).unwrap());
    let y = tape.conv2d(x, w, None, 1, 1).unwrap();
    assert_eq!(tape.tensor(y), &xt);
}

#[test]
fn conv2d_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 3), (1, 2, 5), (2, 0, 1)] {
        let xt = random(&[1, 2, 5, 5], &mut rng);
        let wt = random(&[3, 2, k, k], &mut rng);
        let bt = random(&[3], &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(xt.clone());
        let w = tape.constant(wt.clone());
        let b = tape.constant(bt.clone());
        let y = tape.conv2d(x, w, Some(b), stride, pad).unwrap();
        let expected = naive_conv(&xt, &wt, bt.data(), stride, pad);
        assert!(max_diff(tape.tensor(y).data(), &expected) < 1e-12, "stride {stride} pad {pad}");
    }
}

#[test]
fn conv2d_rejects_channel_mismatch() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 2, 4, 4]));
    let w = tape.constant(Tensor::zeros(vec![1, 3, 3, 3]));
    assert!(matches!(tape.conv2d(x, w, None, 1, 1), Err(Error::Shape { .. })));
    let w2 = tape.constant(Tensor::zeros(vec![1, 2, 2, 2]));
    assert!(tape.conv2d(x, w2, None, 1, 0).is_err());
}

#[test]
fn conv1x1_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xt = random(&[2, 3, 4, 4], &mut rng);

    let mut eye = vec![0.0; 9];
    for c in 0..3 {
        eye[c * 3 + c] = 1.0;
    }
    let mut tape = Tape::new();
    let x = tape.constant(xt.clone());
    let w = tape.constant(Tensor::new(vec![3, 3, 1, 1], eye).unwrap());
    let y = tape.conv1x1(x, w).unwrap();
    assert_eq!(tape.tensor(y), &xt);

    let two = random(&[1, 2, 4, 4], &mut rng);
    let x2 = tape.constant(two.clone());
    let half = tape.constant(Tensor::new(vec![1, 2, 1, 1], vec![0.5, 0.5]).unwrap());
    let m = tape.conv1x1(x2, half).unwrap();
    for p in 0..16 {
        let mean = 0.5 * (two.data()[p] + two.data()[16 + p]);
        assert!((tape.tensor(m).data()[p] - mean).abs() < 1e-15);
    }

    // reshape-to-matmul oracle: Y[b] (C' x HW) = W (C' x C) * X[b] (C x HW)
    let wt = random(&[4, 3, 1, 1], &mut rng);
    let wv = tape.constant(wt.clone());
    let y = tape.conv1x1(x, wv).unwrap();
    let hw = 16;
    let mut expected = vec![0.0; 2 * 4 * hw];
    for b in 0..2 {
        for co in 0..4 {
            for p in 0..hw {
                let mut acc = 0.0;
                for ci in 0..3 {
                    acc += wt.data()[co * 3 + ci] * xt.data()[(b * 3 + ci) * hw + p];
                }
                expected[(b * 4 + co) * hw + p] = acc;
            }
        }
    }
    assert!(max_diff(tape.tensor(y).data(), &expected) < 1e-12);

    let bad = tape.constant(Tensor::zeros(vec![1, 2, 1, 1]));
    assert!(tape.conv1x1(x, bad).is_err());
}

#[test]
fn mse_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random(&[1, 1, 4, 4], &mut rng);
    let mut tape = Tape::new();
    let p = tape.constant(a.clone());
    let l0 = tape.mse(p, p).unwrap();
    assert_eq!(tape.tensor(l0).data(), &[0.0]);

    let shifted = Tensor::new(a.shape().to_vec(), a.data().iter().map(|v| v + 0.1).collect()).unwrap();
    let q = tape.constant(shifted);
    let l1 = tape.mse(q, p).unwrap();
    assert!((tape.tensor(l1).data()[0] - 0.01).abs() < 1e-15);

    let b = random(&[1, 1, 4, 4], &mut rng);
    let r = tape.constant(b.clone());
    let l2 = tape.mse(p, r).unwrap();
    let mut acc = 0.0;
    for i in 0..16 {
        let d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    assert!((tape.tensor(l2).data()[0] - acc / 16.0).abs() < 1e-12);

    let other = tape.constant(Tensor::zeros(vec![1, 1, 2, 2]));
    assert!(tape.mse(p, other).is_err());
}

#[test]
fn backward_of_sum_is_ones() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 6]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(vec![2, 2]));
    let y = tape.silu(x).unwrap();
    assert!(tape.backward(y).is_err());
}

#[test]
fn non_finite_values_are_rejected() {
    assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::filled(vec![1, 1], 1e200));
    assert!(matches!(tape.scale(x, 1e200), Err(Error::NonFinite(_))));
}

// ---------------------------------------------------------------------------
// finite-difference oracle
// ---------------------------------------------------------------------------

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-3;

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

fn eval(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.tensor(loss).data()[0]
}

/// Norm-wise relative error between the tape gradient and central
/// differences, for every input.
fn grad_errors(build: &Build, inputs: &[Tensor]) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();

    let mut errs = Vec::new();
    for (k, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(|g| g.data().to_vec()).unwrap_or(vec![0.0; inputs[k].numel()]);
        let mut numeric = vec![0.0; inputs[k].numel()];
        for j in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= H;
            numeric[j] = (eval(build, &plus) - eval(build, &minus)) / (2.0 * H);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt())
            .max(1e-12);
        errs.push(diff / scale);
    }
    errs
}

fn assert_grads(name: &str, build: &Build, inputs: &[Tensor]) {
    for (k, e) in grad_errors(build, inputs).into_iter().enumerate() {
        assert!(e < REL_TOL, "{name}: input {k} rel err {e:e}");
    }
}

#[test]
fn gradcheck_conv2d_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inputs = vec![
        random(&[2, 2, 8, 8], &mut rng),
        random(&[3, 2, 3, 3], &mut rng),
        random(&[3], &mut rng),
        random(&[2, 3, 8, 8], &mut rng),
    ];
    let build = |t: &mut Tape, v: &[Var]| {
        let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1).unwrap();
        t.mse(y, v[3]).unwrap()
    };
    assert_grads("conv2d", &build, &inputs);
}

#[test]
fn gradcheck_strided_conv_and_upsample() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let inputs = vec![
        random(&[1, 2, 8, 8], &mut rng),
        random(&[2, 2, 3, 3], &mut rng),
        random(&[1, 2, 8, 8], &mut rng),
    ];
    let build = |t: &mut Tape, v: &[Var]| {
        let d = t.conv2d(v[0], v[1], None, 2, 1).unwrap();
        let u = t.upsample2x(d).unwrap();
        t.mse(u, v[2]).unwrap()
    };
    assert_grads("strided conv + upsample", &build, &inputs);
}

#[test]
fn gradcheck_linear_silu_bias_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let inputs = vec![
        random(&[2, 5], &mut rng),
        random(&[3, 5], &mut rng),
        random(&[3], &mut rng),
        random(&[2, 3, 8, 8], &mut rng),
        random(&[2, 1, 8, 8], &mut rng),
        random(&[2, 4, 8, 8], &mut rng),
    ];
    let build = |t: &mut Tape, v: &[Var]| {
        let e = t.linear(v[0], v[1], v[2]).unwrap();
        let e = t.silu(e).unwrap();
        let h = t.add_channel_bias(v[3], e).unwrap();
        let h = t.silu(h).unwrap();
        let c = t.concat_channels(h, v[4]).unwrap();
        let s = t.scale(c, 0.7).unwrap();
        let s = t.add(s, c).unwrap();
        t.mse(s, v[5]).unwrap()
    };
    assert_grads("linear/silu/bias/concat", &build, &inputs);
}

#[test]
fn gradcheck_polar_unpolar() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let inputs = vec![random(&[1, 2, 8, 8], &mut rng), random(&[1, 2, 8, 8], &mut rng)];
    let build = |t: &mut Tape, v: &[Var]| {
        let f = t.fft2(v[0]).unwrap();
        let (m, p) = t.polar(f).unwrap();
        let m2 = t.scale(m, 1.3).unwrap();
        let p2 = t.scale(p, 0.8).unwrap();
        let g = t.unpolar(m2, p2).unwrap();
        let back = t.ifft2(g).unwrap();
        let r = t.real_part(back).unwrap();
        t.mse(r, v[1]).unwrap()
    };
    assert_grads("polar/unpolar", &build, &inputs);
}

#[test]
fn gradcheck_frequency_composite() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let inputs = vec![
        random(&[2, 3, 8, 8], &mut rng),
        random(&[3, 3, 1, 1], &mut rng),
        random(&[3, 3, 1, 1], &mut rng),
        random(&[2, 3, 8, 8], &mut rng),
    ];
    let build = |t: &mut Tape, v: &[Var]| {
        let f = t.fft2(v[0]).unwrap();
        let (m, p) = t.polar(f).unwrap();
        let m = t.conv1x1(m, v[1]).unwrap();
        let p = t.conv1x1(p, v[2]).unwrap();
        let g = t.unpolar(m, p).unwrap();
        let back = t.ifft2(g).unwrap();
        let r = t.real_part(back).unwrap();
        t.mse(r, v[3]).unwrap()
    };
    assert_grads("frequency composite", &build, &inputs);
}

#[test]
fn phase_gradient_is_finite_at_zero_bins() {
    // all-zero input: every spectral bin has zero magnitude
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(vec![1, 1, 4, 4]));
    let f = tape.fft2(x).unwrap();
    let (m, p) = tape.polar(f).unwrap();
    let g = tape.unpolar(m, p).unwrap();
    let r = tape.ifft2(g).unwrap();
    let r = tape.real_part(r).unwrap();
    let target = tape.constant(Tensor::filled(vec![1, 1, 4, 4], 0.5));
    let loss = tape.mse(r, target).unwrap();
    tape.backward(loss).unwrap();
    assert!(tape.grad(x).unwrap().data().iter().all(|v| v.is_finite()));
}
