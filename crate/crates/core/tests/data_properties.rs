//! Statistical and determinism properties of the biased-data generators.

use debias_core::data::{estimate_p_y_given_b, generate, load_dataset, save_dataset, GenConfig};
use sha2::{Digest, Sha256};

fn digest(cfg: &GenConfig) -> String {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&generate::<f64>(cfg).unwrap(), dir.path()).unwrap();
    let mut h = Sha256::new();
    h.update(std::fs::read(dir.path().join("data.f64le")).unwrap());
    hex::encode(h.finalize())
}

#[test]
fn bias_marginal_is_uniform() {
    let cfg = GenConfig::two_factor(10, 100_000, 0.05, 11);
    let ds = generate::<f64>(&cfg).unwrap();
    let mut counts = [0usize; 10];
    for &b in ds.bias().unwrap() {
        counts[b] += 1;
    }
    // Binomial(n, 0.1): sd = sqrt(n · 0.1 · 0.9) ≈ 94.9.
    for (b, &c) in counts.iter().enumerate() {
        assert!((c as f64 - 10_000.0).abs() < 4.0 * 94.87, "b={b}: {c}");
    }
}

#[test]
fn empirical_conditional_matches_analytic() {
    let cfg = GenConfig::two_factor(10, 100_000, 0.01, 5);
    let ds = generate::<f64>(&cfg).unwrap();
    let est = estimate_p_y_given_b(&ds).unwrap();
    let truth = cfg.analytic_p_y_given_b();
    for (i, (&a, &b)) in est.table().iter().zip(&truth).enumerate() {
        assert!((a - b).abs() < 0.005, "cell {i}: {a} vs {b}");
    }
}

#[test]
fn conflicting_count_is_binomial() {
    for (seed, rho) in [(1u64, 0.005), (2, 0.01), (3, 0.05)] {
        let n = 20_000;
        let ds = generate::<f64>(&GenConfig::two_factor(10, n, rho, seed)).unwrap();
        let sd = (n as f64 * rho * (1.0 - rho)).sqrt();
        let bc = ds.bc_count() as f64;
        assert!((bc - n as f64 * rho).abs() < 4.0 * sd, "rho {rho}: {bc}");
    }
}

#[test]
fn unbiased_split_has_ninety_percent_conflicting() {
    let cfg = GenConfig::two_factor(10, 1000, 0.01, 0).unbiased(50_000, 9);
    let ds = generate::<f64>(&cfg).unwrap();
    let frac = ds.bc_count() as f64 / ds.len() as f64;
    assert!((frac - 0.9).abs() < 4.0 * (0.09f64 / 50_000.0).sqrt());
}

#[test]
fn generation_is_bit_reproducible() {
    let a = GenConfig::two_factor(4, 500, 0.02, 77);
    let g = GenConfig::colored_glyphs(10, 50, 0.1, 3);
    assert_eq!(digest(&a), digest(&a));
    assert_ne!(
        digest(&a),
        digest(&GenConfig {
            seed: 78,
            ..a.clone()
        })
    );
    assert_eq!(digest(&a), GOLDEN_TWO_FACTOR);
    assert_eq!(digest(&g), GOLDEN_GLYPHS);
}

#[test]
fn saved_dataset_round_trips() {
    let ds = generate::<f64>(&GenConfig::colored_glyphs(10, 40, 0.1, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.features(), ds.features());
    assert_eq!(back.labels(), ds.labels());
    assert_eq!(back.bias(), ds.bias());
}

// Frozen from the first run; any change to generation order breaks these.
const GOLDEN_TWO_FACTOR: &str = "9943eb4e7114a891977a3c7c0e7e72feb7887cd028126d4e8ea2dd66e4d35f6c";
const GOLDEN_GLYPHS: &str = "fdc7f5220db511683c4c545c164d58a20af1767c0ab56dc608a4f77d5c1050c7";
