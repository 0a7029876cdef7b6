use ffm_core::metrics::ssim;
use ffm_core::phantom::{generate_samples, DatasetConfig};
use ffm_core::purify::{
    common_mask, decompose_residual, evaluation_label, ip_ndct, ip_uldct, make_training_pairs, otsu_mask,
    otsu_mask_with, otsu_threshold, psp_filter, purify_pair, Combination, MaskParams, PurifyConfig,
};
use ffm_core::{BinaryMask, Error, ImageGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
    ImageGrid::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn mask(w: usize, h: usize, rng: &mut ChaCha8Rng) -> BinaryMask {
    BinaryMask::new(w, h, (0..w * h).map(|_| u8::from(rng.random::<bool>())).collect()).unwrap()
}

/// Every candidate edge evaluated from scratch with two passes over the data.
fn otsu_brute(values: &[f64]) -> f64 {
    let bin = |v: f64| ((v * 256.0) as usize).min(255);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 1..256 {
        let (lo, hi): (Vec<f64>, Vec<f64>) = values
            .iter()
            .map(|&v| bin(v) as f64)
            .partition(|&b| (b as usize) < k);
        if lo.is_empty() || hi.is_empty() {
            continue;
        }
        let (m0, m1) = (
            lo.iter().sum::<f64>() / lo.len() as f64,
            hi.iter().sum::<f64>() / hi.len() as f64,
        );
        let between = lo.len() as f64 * hi.len() as f64 * (m0 - m1) * (m0 - m1);
        if between > best.0 * (1.0 + 1e-12) {
            best = (between, k as f64 / 256.0);
        }
    }
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn otsu_matches_exhaustive_search(values in prop::collection::vec(0.0f64..=1.0, 16..200)) {
        prop_assume!(values.iter().any(|&v| ((v * 256.0) as usize).min(255) != ((values[0] * 256.0) as usize).min(255)));
        prop_assert_eq!(otsu_threshold(&values).unwrap(), otsu_brute(&values));
    }

    #[test]
    fn residual_parts_recombine_exactly(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, u, cm) = (image(9, 7, &mut rng), image(9, 7, &mut rng), mask(9, 7, &mut rng));
        let r = decompose_residual(&n, &u, &cm).unwrap();
        for i in 0..63 {
            prop_assert_eq!(r.v[i], u.values()[i] - n.values()[i]);
            prop_assert_eq!(r.v1[i] + r.v2[i], r.v[i]);
            prop_assert_eq!(r.v1[i] * r.v2[i], 0.0);
        }
    }

    #[test]
    fn purified_images_match_the_per_pixel_formulas(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, u, cm) = (image(8, 8, &mut rng), image(8, 8, &mut rng), mask(8, 8, &mut rng));
        let a = ip_uldct(&n, &u, &cm, t).unwrap();
        let b = ip_ndct(&n, &u, &cm).unwrap();
        for i in 0..64 {
            let (nv, uv) = (n.values()[i], u.values()[i]);
            let c = f64::from(cm.bits()[i]);
            let expect = ((1.0 - c) * ((1.0 - t) * uv + t * nv) + c * nv).clamp(0.0, 1.0);
            prop_assert!((a.values()[i] - expect).abs() < 1e-15);
            prop_assert_eq!(b.values()[i], ((1.0 - c) * nv + c * uv).clamp(0.0, 1.0));
        }
        prop_assert_eq!(ip_uldct(&n, &u, &cm, 1.0).unwrap(), n.clone());
        let eq6: Vec<f64> = (0..64)
            .map(|i| {
                let c = f64::from(cm.bits()[i]);
                (1.0 - c) * u.values()[i] + c * n.values()[i]
            })
            .collect();
        let t0 = ip_uldct(&n, &u, &cm, 0.0).unwrap();
        prop_assert_eq!(t0.values(), &eq6[..]);
        prop_assert_eq!(ip_uldct(&n, &n, &cm, t).unwrap(), n.clone());
        prop_assert_eq!(ip_ndct(&n, &n, &cm).unwrap(), n);
    }

    #[test]
    fn off_mask_blend_is_monotone_in_t(u in 0.0f64..=1.0, n in 0.0f64..=1.0, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let gn = ImageGrid::filled(1, 1, n).unwrap();
        let gu = ImageGrid::filled(1, 1, u).unwrap();
        let cm = BinaryMask::zeros(1, 1);
        let a = ip_uldct(&gn, &gu, &cm, lo).unwrap().values()[0];
        let b = ip_uldct(&gn, &gu, &cm, hi).unwrap().values()[0];
        prop_assert!(a >= u.min(n) - 1e-15 && a <= u.max(n) + 1e-15);
        // moving T towards 1 moves the value towards NDCT
        prop_assert!((b - n).abs() <= (a - n).abs() + 1e-15);
    }
}

#[test]
fn bimodal_image_thresholds_between_modes() {
    let img = ImageGrid::from_fn(16, 16, |x, _| if x < 8 { 0.2 } else { 0.8 }).unwrap();
    let th = otsu_threshold(img.values()).unwrap();
    assert!(th > 0.2 && th < 0.8);
    let m = otsu_mask(&img, 0.0).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(m.get(x, y), u8::from(x >= 8));
        }
    }
}

#[test]
fn inverted_image_gives_complementary_mask() {
    let sample = &generate_samples(&DatasetConfig {
        count: 1,
        ..DatasetConfig::default()
    })
    .unwrap()[0];
    let img = &sample.ndct;
    let inv = ImageGrid::new(64, 64, img.values().iter().map(|v| 1.0 - v).collect()).unwrap();
    let (th, th_inv) = (otsu_threshold(img.values()).unwrap(), otsu_threshold(inv.values()).unwrap());
    let (m, mi) = (otsu_mask(img, 0.0).unwrap(), otsu_mask(&inv, 0.0).unwrap());
    let mut disagreements = 0;
    for (i, (&a, &b)) in m.bits().iter().zip(mi.bits()).enumerate() {
        if a == b {
            // only pixels whose bin sits between the two cuts may disagree
            let v = img.values()[i];
            assert!((v - th).abs() <= 2.0 / 256.0 || (v - (1.0 - th_inv)).abs() <= 2.0 / 256.0);
            disagreements += 1;
        }
    }
    assert!(disagreements < 64 * 64 / 20, "{disagreements}");
}

#[test]
fn constant_image_is_rejected() {
    let flat = ImageGrid::filled(8, 8, 0.4).unwrap();
    assert!(matches!(otsu_mask(&flat, 0.0), Err(Error::DegenerateHistogram)));
}

#[test]
fn common_mask_truth_table() {
    let a = BinaryMask::new(2, 1, vec![1, 0]).unwrap();
    let z = BinaryMask::zeros(2, 1);
    assert_eq!(common_mask(&a, &z).unwrap(), a);
    assert_eq!(common_mask(&a, &a).unwrap(), a);
    assert_eq!(common_mask(&z, &BinaryMask::ones(2, 1)).unwrap(), BinaryMask::ones(2, 1));
    let full = BinaryMask::new(2, 2, vec![0, 1, 1, 1]).unwrap();
    let other = BinaryMask::new(2, 2, vec![0, 0, 1, 0]).unwrap();
    assert_eq!(common_mask(&full, &other).unwrap().bits(), &[0, 1, 1, 1]);
    assert!(common_mask(&a, &full).is_err());
}

#[test]
fn hand_evaluated_pixels() {
    let n = ImageGrid::filled(1, 1, 0.1).unwrap();
    let u = ImageGrid::filled(1, 1, 0.9).unwrap();
    let r = decompose_residual(&n, &u, &BinaryMask::zeros(1, 1)).unwrap();
    assert!((r.v[0] - 0.8).abs() < 1e-15 && r.v1[0] == r.v[0] && r.v2[0] == 0.0);
    let r = decompose_residual(&n, &u, &BinaryMask::ones(1, 1)).unwrap();
    assert!(r.v1[0] == 0.0 && r.v2[0] == r.v[0]);

    let n = ImageGrid::filled(1, 1, 0.6).unwrap();
    let u = ImageGrid::filled(1, 1, 0.2).unwrap();
    let v = ip_uldct(&n, &u, &BinaryMask::zeros(1, 1), 0.5).unwrap().values()[0];
    assert!((v - 0.4).abs() < 1e-15);
    assert!(ip_uldct(&n, &u, &BinaryMask::zeros(1, 1), 1.5).is_err());
    assert_eq!(ip_ndct(&n, &u, &BinaryMask::zeros(1, 1)).unwrap(), n);
    assert_eq!(ip_ndct(&n, &u, &BinaryMask::ones(1, 1)).unwrap(), u);
}

#[test]
fn combinations_select_the_documented_pairs() {
    let samples = generate_samples(&DatasetConfig {
        count: 3,
        ..DatasetConfig::default()
    })
    .unwrap();
    let cfg = PurifyConfig::default();
    let purified: Vec<_> = samples.iter().map(|s| purify_pair(&s.ndct, &s.uldct, &cfg).unwrap()).collect();
    let one = make_training_pairs(&purified, Combination::I);
    let two = make_training_pairs(&purified, Combination::II);
    let three = make_training_pairs(&purified, Combination::III);
    assert_eq!((one.len(), two.len(), three.len()), (3, 3, 6));
    for (p, pair) in purified.iter().zip(&one) {
        assert_eq!(pair.input, ip_uldct(&p.ndct, &p.uldct, &p.cm, p.t_param).unwrap());
        assert_eq!(pair.label, p.ndct);
    }
    for (p, pair) in purified.iter().zip(&two) {
        assert_eq!(pair.input, p.uldct);
        assert_eq!(pair.label, p.ip_ndct);
        assert_eq!(evaluation_label(p), &p.ip_ndct);
    }
    assert_eq!(&three[..3], &one[..]);
    assert_eq!(&three[3..], &two[..]);
}

#[test]
fn purified_input_inherits_ndct_structure() {
    let samples = generate_samples(&DatasetConfig {
        count: 30,
        ..DatasetConfig::default()
    })
    .unwrap();
    let cfg = PurifyConfig::default();
    let (mut raw, mut ip) = (0.0, 0.0);
    for s in &samples {
        let p = purify_pair(&s.ndct, &s.uldct, &cfg).unwrap();
        let mn = otsu_mask_with(&s.ndct, MaskParams::NDCT).unwrap().to_image();
        raw += ssim(&otsu_mask_with(&s.uldct, MaskParams::ULDCT).unwrap().to_image(), &mn).unwrap();
        ip += ssim(&otsu_mask_with(&p.ip_uldct, MaskParams::ULDCT).unwrap().to_image(), &mn).unwrap();
    }
    assert!(ip >= raw, "ip {ip} raw {raw}");
}

#[test]
fn psp_keeps_identical_and_drops_unrelated_patches() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = image(64, 64, &mut rng);
    let b = image(64, 64, &mut rng);
    assert_eq!(psp_filter(&a, &a, 8, 0.9).unwrap().keep_ratio, 1.0);
    let r = psp_filter(&a, &b, 8, 0.9).unwrap();
    assert_eq!(r.total, 64);
    assert!(r.keep_ratio < 0.05, "{}", r.keep_ratio);
    assert!(psp_filter(&a, &b, 7, 0.9).is_err());
}
