//! Metric checks against straight-loop reference implementations and the
//! identity / symmetry / monotonicity properties.

// oracles index explicitly
#![allow(clippy::needless_range_loop)]

use ffm_core::metrics::{
    self, evaluate_pair, evaluate_split, fsim, gmsd, nqm, psnr, rmse, ssim, vif, vif_planes,
    AggregateReport, NQM_CAP_DB, PSNR_CAP_DB,
};
use ffm_core::ImageGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
    ImageGrid::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn structured(w: usize, h: usize) -> ImageGrid {
    ImageGrid::from_fn(w, h, |x, y| {
        let (cx, cy) = (x as f64 - w as f64 * 0.45, y as f64 - h as f64 * 0.55);
        let mut v = 0.15 + 0.05 * (x as f64 * 0.2).sin();
        if cx * cx / 300.0 + cy * cy / 150.0 < 1.0 {
            v = 0.75;
        }
        if (x as f64 - 12.0).powi(2) + (y as f64 - 14.0).powi(2) < 25.0 {
            v = 0.55;
        }
        v
    })
    .unwrap()
}

fn noisy(img: &ImageGrid, sigma: f64, seed: u64) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    ImageGrid::from_clamped(
        img.width(),
        img.height(),
        img.values().iter().map(|v| v + n.sample(&mut rng)).collect(),
    )
    .unwrap()
}

fn reflect(i: isize, n: usize) -> usize {
    // edge-inclusive mirror, written independently of the library helper
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn ssim_oracle(a: &ImageGrid, b: &ImageGrid) -> f64 {
    let (w, h) = (a.width(), a.height());
    let mut weights = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (dy, row) in weights.iter_mut().enumerate() {
        for (dx, wt) in row.iter_mut().enumerate() {
            let (u, v) = (dx as f64 - 5.0, dy as f64 - 5.0);
            *wt = (-(u * u + v * v) / (2.0 * 1.5 * 1.5)).exp();
            total += *wt;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..11 {
                for dx in 0..11 {
                    let wt = weights[dy][dx] / total;
                    let yy = reflect(y as isize + dy as isize - 5, h);
                    let xx = reflect(x as isize + dx as isize - 5, w);
                    let (p, q) = (a.get(xx, yy), b.get(xx, yy));
                    ma += wt * p;
                    mb += wt * q;
                    saa += wt * p * p;
                    sbb += wt * q * q;
                    sab += wt * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    acc / (w * h) as f64
}

fn gmsd_oracle(a: &ImageGrid, b: &ImageGrid) -> f64 {
    let (w, h) = (a.width() / 2, a.height() / 2);
    let down = |img: &ImageGrid| {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = 255.0
                    * (img.get(2 * x, 2 * y)
                        + img.get(2 * x + 1, 2 * y)
                        + img.get(2 * x, 2 * y + 1)
                        + img.get(2 * x + 1, 2 * y + 1))
                    / 4.0;
            }
        }
        out
    };
    let grad = |p: &[f64]| {
        let at = |x: isize, y: isize| p[reflect(y, h) * w + reflect(x, w)];
        let mut g = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut gx = 0.0;
                let mut gy = 0.0;
                for d in -1..=1 {
                    gx += (at(x - 1, y + d) - at(x + 1, y + d)) / 3.0;
                    gy += (at(x + d, y - 1) - at(x + d, y + 1)) / 3.0;
                }
                g[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
            }
        }
        g
    };
    let (ga, gb) = (grad(&down(a)), grad(&down(b)));
    let map: Vec<f64> = (0..w * h)
        .map(|i| (2.0 * ga[i] * gb[i] + 170.0) / (ga[i] * ga[i] + gb[i] * gb[i] + 170.0))
        .collect();
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    (map.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (map.len() - 1) as f64).sqrt()
}

#[test]
fn ssim_psnr_rmse_gmsd_match_loop_oracles_on_20_random_8x8_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let a = random_image(8, 8, &mut rng);
        let b = random_image(8, 8, &mut rng);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-10);
        assert!((gmsd(&a, &b).unwrap() - gmsd_oracle(&a, &b)).abs() < 1e-10);

        let mut se = 0.0;
        for i in 0..64 {
            se += (a.values()[i] - b.values()[i]).powi(2);
        }
        let mse = se / 64.0;
        assert!((rmse(&a, &b).unwrap() - mse.sqrt()).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-12);
    }
}

#[test]
fn symmetric_metrics_are_symmetric() {
    let a = structured(64, 64);
    let b = noisy(&a, 0.08, 1);
    for (name, f) in [
        ("ssim", ssim as fn(&ImageGrid, &ImageGrid) -> ffm_core::Result<f64>),
        ("fsim", fsim),
        ("gmsd", gmsd),
        ("rmse", rmse),
    ] {
        let (ab, ba) = (f(&a, &b).unwrap(), f(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-10, "{name}: {ab} vs {ba}");
    }
}

#[test]
fn identity_attains_best_values() {
    let a = structured(64, 64);
    let r = evaluate_pair(&a, &a).unwrap();
    assert!((r.ssim - 1.0).abs() < 1e-12);
    assert!((r.fsim - 1.0).abs() < 1e-6);
    assert!((r.vif - 1.0).abs() < 1e-6);
    assert_eq!(r.gmsd, 0.0);
    assert_eq!(r.rmse, 0.0);
    assert_eq!(r.psnr, PSNR_CAP_DB);
    assert_eq!(r.nqm, NQM_CAP_DB);
    r.check_ranges().unwrap();
}

#[test]
fn fsim_degrades_monotonically_with_noise() {
    let a = structured(64, 64);
    let mild = noisy(&a, 0.03, 7);
    let heavy = noisy(&a, 0.15, 7);
    let (fm, fh) = (fsim(&mild, &a).unwrap(), fsim(&heavy, &a).unwrap());
    assert!(fh < fm && fm < 1.0, "mild {fm} heavy {fh}");
}

#[test]
fn vif_and_nqm_decrease_with_noise() {
    let a = structured(64, 64);
    let mild = noisy(&a, 0.03, 9);
    let heavy = noisy(&a, 0.15, 9);
    let (vm, vh) = (vif(&mild, &a).unwrap(), vif(&heavy, &a).unwrap());
    assert!(vh < vm && vm < 1.0, "mild {vm} heavy {vh}");
    let (nm, nh) = (nqm(&mild, &a).unwrap(), nqm(&heavy, &a).unwrap());
    assert!(nh < nm, "mild {nm} heavy {nh}");
}

#[test]
fn vif_is_invariant_to_global_linear_rescale() {
    let a = structured(64, 64);
    let b = noisy(&a, 0.05, 3);
    let base = vif(&b, &a).unwrap();
    let (s, c) = (0.6, 0.2);
    let sa: Vec<f64> = a.values().iter().map(|v| s * v + c).collect();
    let sb: Vec<f64> = b.values().iter().map(|v| s * v + c).collect();
    let rescaled = vif_planes(&sb, &sa, 64, 64, s).unwrap();
    assert!((base - rescaled).abs() < 1e-6, "{base} vs {rescaled}");
}

#[test]
fn small_images_are_rejected_by_pyramid_metrics() {
    let a = ImageGrid::filled(16, 16, 0.5).unwrap();
    assert!(fsim(&a, &a).is_err());
    assert!(vif(&a, &a).is_err());
    assert!(evaluate_pair(&a, &a).is_err());
}

#[test]
fn evaluate_split_identity_and_reaggregation() {
    let imgs: Vec<(String, ImageGrid)> = (0..4)
        .map(|i| (format!("s{i}"), noisy(&structured(64, 64), 0.02 * (i + 1) as f64, i as u64)))
        .collect();
    let same = evaluate_split(&imgs, &imgs).unwrap();
    assert!((same.mean[0] - 1.0).abs() < 1e-6);
    assert!((same.mean[2] - 1.0).abs() < 1e-12);
    assert!((same.mean[3] - 1.0).abs() < 1e-6);
    assert_eq!(same.mean[1], 0.0);
    assert_eq!(same.mean[6], 0.0);

    let labels: Vec<(String, ImageGrid)> =
        imgs.iter().map(|(id, _)| (id.clone(), structured(64, 64))).collect();
    let rep = evaluate_split(&imgs, &labels).unwrap();
    // scalar re-aggregation oracle
    for k in 0..7 {
        let vals: Vec<f64> = rep.per_image.iter().map(|(_, r)| r.values()[k]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert!((rep.mean[k] - mean).abs() < 1e-12);
        assert!((rep.std[k] - var.sqrt()).abs() < 1e-12);
        assert!(rep.std[k] >= 0.0);
    }
    for (_, r) in &rep.per_image {
        r.check_ranges().unwrap();
    }
    let row = rep.csv_row("FFM");
    assert_eq!(row.split(',').count(), 8);
    assert_eq!(metrics::csv_header("Method"), "Method,FSIM,GMSD,SSIM,VIF,NQM,PSNR,RMSE");
}

#[test]
fn evaluate_split_errors() {
    let empty: Vec<(String, ImageGrid)> = Vec::new();
    assert!(evaluate_split(&empty, &empty).is_err());
    assert!(AggregateReport::from_reports(Vec::new()).is_err());
    let a = vec![("a".to_string(), structured(64, 64))];
    let b = vec![("b".to_string(), structured(64, 64))];
    assert!(evaluate_split(&a, &b).is_err());
}
