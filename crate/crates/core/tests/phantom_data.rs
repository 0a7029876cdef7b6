use std::fs;

use ffm_core::metrics::ssim;
use ffm_core::phantom::{
    apply_noise, build_dataset, deform, generate_phantom, generate_samples, split_counts, DatasetConfig,
    DatasetManifest, DeformationField, NoiseModel, Split, MANIFEST_FILE,
};
use ffm_core::rng::stream_rng;

#[test]
fn phantoms_are_deterministic_bounded_and_seed_dependent() {
    let a = generate_phantom(1, 64).unwrap();
    assert_eq!(a, generate_phantom(1, 64).unwrap());
    assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
    let b = generate_phantom(2, 64).unwrap();
    assert!(a.mean_abs_diff(&b) > 0.01);
    assert!(generate_phantom(1, 48).is_err());
}

#[test]
fn integer_translation_shifts_the_image() {
    let img = generate_phantom(3, 32).unwrap();
    let out = deform(&img, &DeformationField::translation(32, 32, 1.0, 0.0)).unwrap();
    for y in 0..32 {
        for x in 0..31 {
            assert_eq!(out.get(x, y), img.get(x + 1, y));
        }
    }
    assert_eq!(deform(&img, &DeformationField::zero(32, 32)).unwrap(), img);
}

#[test]
fn random_warp_is_a_mild_structural_change() {
    for seed in 0..5 {
        let img = generate_phantom(seed, 64).unwrap();
        let field = DeformationField::random(&mut stream_rng(seed, "test-warp", 0), 64, 64, 3.0);
        assert!(field.peak() <= 3.0 + 1e-12);
        let s = ssim(&img, &deform(&img, &field).unwrap()).unwrap();
        assert!(s > 0.5 && s < 1.0, "seed {seed}: {s}");
    }
}

#[test]
fn noiseless_limit_recovers_the_input() {
    let img = generate_phantom(4, 64).unwrap();
    let model = NoiseModel {
        dose_fraction: 1.0,
        photon_scale: 1e14,
        electronic_sigma: 0.0,
        ..NoiseModel::default()
    };
    let out = apply_noise(&img, &model, 9).unwrap();
    let worst = img.values().iter().zip(out.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst}");
}

#[test]
fn default_low_dose_noise_is_severe_and_reproducible() {
    let model = NoiseModel::default();
    let mut total = 0.0;
    for seed in 0..50 {
        let clean = generate_phantom(seed, 64).unwrap();
        let noisy = apply_noise(&clean, &model, seed).unwrap();
        assert_eq!(noisy, apply_noise(&clean, &model, seed).unwrap());
        total += ssim(&noisy, &clean).unwrap();
    }
    assert!(total / 50.0 < 0.6, "mean ssim {}", total / 50.0);
}

#[test]
fn split_rounding() {
    let c = split_counts(10, [7.0, 1.5, 1.5]);
    assert_eq!((c.train, c.val, c.test), (7, 1, 2));
    let c = split_counts(300, [7.0, 1.5, 1.5]);
    assert_eq!((c.train, c.val, c.test), (210, 45, 45));
}

#[test]
fn noise_lowers_similarity_for_every_pair() {
    let cfg = DatasetConfig {
        count: 20,
        ..DatasetConfig::default()
    };
    for s in generate_samples(&cfg).unwrap() {
        let moved = ssim(&s.ndct, &s.deformed).unwrap();
        let noisy = ssim(&s.ndct, &s.uldct).unwrap();
        assert!(noisy < moved, "{}: {noisy} vs {moved}", s.id);
        assert!(moved < 0.99, "{}: misalignment too small ({moved})", s.id);
    }
}

#[test]
fn built_dataset_is_complete_and_byte_identical_on_rebuild() {
    let cfg = DatasetConfig {
        count: 10,
        ..DatasetConfig::default()
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = build_dataset(&cfg, d1.path()).unwrap();
    build_dataset(&cfg, d2.path()).unwrap();
    m1.verify_files(d1.path()).unwrap();
    assert_eq!(m1.split(Split::Train).count(), 7);
    assert_eq!(m1.split(Split::Val).count(), 1);
    assert_eq!(m1.split(Split::Test).count(), 2);

    let loaded = DatasetManifest::load(&d1.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.samples.len(), 10);

    let mut names: Vec<_> = walk(d1.path());
    names.sort();
    assert!(!names.is_empty());
    for rel in names {
        let a = fs::read(d1.path().join(&rel)).unwrap();
        let b = fs::read(d2.path().join(&rel)).unwrap();
        assert!(a == b, "{} differs", rel.display());
    }
}

fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}
