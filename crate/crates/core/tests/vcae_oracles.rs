//! VCAE closed forms against Monte Carlo and direct evaluation.

use debias_core::autodiff::{Tape, Tensor};
use debias_core::classifier::TrainConfig;
use debias_core::data::{generate, GenConfig};
use debias_core::vcae::{
    kl_diag_gauss, latent_rows, train_vcae, vcae_loss, vcae_loss_on_tape, LatentGaussian,
    VcaeConfig, VcaeParams, VcaeVars,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn log_normal_density(x: &[f64], g: &LatentGaussian<f64>) -> f64 {
    x.iter()
        .zip(g.mu.iter().zip(&g.sigma))
        .map(|(&v, (&m, &s))| {
            -0.5 * ((v - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum()
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 1_000_000;
    for pair in 0..20 {
        let d = 1 + pair % 3;
        let mut g = || {
            let mu = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
            LatentGaussian::new(mu, s).unwrap()
        };
        let (q, p) = (g(), g());
        let exact = kl_diag_gauss(&q, &p);
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut z = vec![0.0; d];
        for _ in 0..draws {
            for i in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                z[i] = q.mu[i] + q.sigma[i] * e;
            }
            let v = log_normal_density(&z, &q) - log_normal_density(&z, &p);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / draws as f64;
        let se = ((s2 / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * se + 1e-12,
            "pair {pair}: {mean} vs {exact} (se {se})"
        );
    }
}

fn toy_params(seed: u64) -> (VcaeParams<f64>, VcaeConfig) {
    let cfg = VcaeConfig {
        dim_z: 2,
        hidden: vec![5],
        ..VcaeConfig::default()
    };
    let mut p = VcaeParams::init(4, 3, &cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
    for t in p.encoder.tensors_mut() {
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    p.class_log_std = Tensor::vector(vec![-0.3, 0.1, 0.4]);
    (p, cfg)
}

#[test]
fn posterior_is_normalized_at_extreme_latents() {
    let (p, cfg) = toy_params(0);
    let lp = cfg.log_prior::<f64>(3);
    for angle in [0.0, 1.0, 2.5, 4.0] {
        let z = [100.0 * f64::cos(angle), 100.0 * f64::sin(angle)];
        let q = p.p_y_given_z(&z, &lp).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn posterior_matches_direct_density_ratio() {
    let (p, cfg) = toy_params(1);
    let prior = [0.2, 0.5, 0.3];
    let cfg = VcaeConfig {
        prior: Some(prior.to_vec()),
        ..cfg
    };
    let lp = cfg.log_prior::<f64>(3);
    let z = [0.4, -0.7];
    let dens: Vec<f64> = (0..3)
        .map(|c| log_normal_density(&z, &p.class_gaussian(c)).exp() * prior[c])
        .collect();
    let total: f64 = dens.iter().sum();
    let q = p.p_y_given_z(&z, &lp).unwrap();
    for c in 0..3 {
        assert!((q[c] - dens[c] / total).abs() < 1e-12);
    }
    let mut equal = p.clone();
    equal.class_log_std = Tensor::vector(vec![0.0; 3]);
    let q2 = equal
        .p_y_given_z(p.class_means.row(2), &VcaeConfig::default().log_prior(3))
        .unwrap();
    assert_eq!(debias_core::metrics::argmax(&q2), 2);
}

#[test]
fn reparameterized_gradient_matches_finite_differences() {
    let (p, cfg) = toy_params(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::matrix(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y = [0, 2, 1];
    let eps = Tensor::matrix(
        3,
        2,
        (0..6).map(|_| StandardNormal.sample(&mut rng)).collect(),
    )
    .unwrap();
    let mut tape = Tape::new();
    let vars = VcaeVars::register(&mut tape, &p);
    let l = vcae_loss_on_tape(&mut tape, &vars, &x, &y, &eps, &cfg).unwrap();
    let g = tape.backward(l.total).unwrap();
    let ad: Vec<f64> = vars
        .grads(&g, &p)
        .into_iter()
        .flatten()
        .flat_map(|t| t.into_data())
        .collect();
    let mut leaves: Vec<Tensor<f64>> = p.encoder.tensors().to_vec();
    leaves.extend(p.decoder.tensors().iter().cloned());
    leaves.push(p.class_means.clone());
    leaves.push(p.class_log_std.clone());
    let rebuild = |flat: &[f64]| {
        let mut q = p.clone();
        let mut k = 0;
        let mut take = |t: &mut Tensor<f64>| {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[k..k + n]);
            k += n;
        };
        q.encoder.tensors_mut().iter_mut().for_each(&mut take);
        q.decoder.tensors_mut().iter_mut().for_each(&mut take);
        take(&mut q.class_means);
        take(&mut q.class_log_std);
        q
    };
    let flat: Vec<f64> = leaves.iter().flat_map(|t| t.data().to_vec()).collect();
    let h = 1e-5;
    let fd: Vec<f64> = (0..flat.len())
        .map(|i| {
            let mut a = flat.clone();
            a[i] += h;
            let mut b = flat.clone();
            b[i] -= h;
            (vcae_loss(&rebuild(&a), &x, &y, &eps, &cfg).unwrap()
                - vcae_loss(&rebuild(&b), &x, &y, &eps, &cfg).unwrap())
                / (2.0 * h)
        })
        .collect();
    let diff: f64 = ad
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(diff / scale < 1e-5, "relative error {}", diff / scale);
}

#[test]
fn loss_is_the_sum_of_independently_computed_terms() {
    let (p, cfg) = toy_params(4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::matrix(2, 4, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y = [1, 0];
    let eps = Tensor::matrix(2, 2, vec![0.3, -1.1, 0.8, 0.05]).unwrap();
    let total = vcae_loss(&p, &x, &y, &eps, &cfg).unwrap();
    let q = p.encode(&x).unwrap();
    let lp = cfg.log_prior::<f64>(3);
    let mut want = 0.0;
    for n in 0..2 {
        let z: Vec<f64> = (0..2)
            .map(|i| q[n].mu[i] + q[n].sigma[i] * eps.row(n)[i])
            .collect();
        let xhat = p.decode(&Tensor::matrix(1, 2, z.clone()).unwrap()).unwrap();
        let rec: f64 = 0.5
            * xhat
                .row(0)
                .iter()
                .zip(x.row(n))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        let kl = kl_diag_gauss(&q[n], &p.class_gaussian(y[n]));
        let cls = -p.p_y_given_z(&z, &lp).unwrap()[y[n]].ln();
        want += (rec + kl + cls) / 2.0;
    }
    assert!((total - want).abs() < 1e-12, "{total} vs {want}");
}

#[test]
fn kl_term_vanishes_when_posterior_equals_class_gaussian() {
    let cfg = VcaeConfig {
        lambda: [0.0, 1.0, 0.0],
        hidden: vec![3],
        ..VcaeConfig::default()
    };
    let mut p = VcaeParams::<f64>::init(2, 2, &cfg, 0).unwrap();
    for t in p.encoder.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    p.class_means = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
    let x = Tensor::matrix(2, 2, vec![0.3, 0.1, -2.0, 1.0]).unwrap();
    let eps = Tensor::matrix(2, 2, vec![0.5, -0.5, 1.0, 0.0]).unwrap();
    assert_eq!(vcae_loss(&p, &x, &[0, 1], &eps, &cfg).unwrap(), 0.0);
}

#[test]
fn classification_term_vanishes_for_certain_posteriors() {
    let cfg = VcaeConfig {
        lambda: [0.0, 0.0, 1.0],
        hidden: vec![3],
        ..VcaeConfig::default()
    };
    let mut p = VcaeParams::<f64>::init(2, 2, &cfg, 0).unwrap();
    for t in p.encoder.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    p.class_means = Tensor::matrix(2, 2, vec![0.0, 0.0, 1e3, 1e3]).unwrap();
    let x = Tensor::matrix(1, 2, vec![0.3, 0.1]).unwrap();
    let eps = Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap();
    assert!(vcae_loss(&p, &x, &[0], &eps, &cfg).unwrap().abs() < 1e-300);
}

#[test]
fn log_posterior_average_is_below_log_average_posterior() {
    // Jensen step: log E_q[p(y|z)] >= E_q[log p(y|z)] on matched samples.
    let (p, cfg) = toy_params(6);
    let lp = cfg.log_prior::<f64>(3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for cell in 0..4 {
        let x =
            Tensor::matrix(1, 4, vec![(cell & 1) as f64, (cell >> 1) as f64, 1.0, 0.0]).unwrap();
        let q = &p.encode(&x).unwrap()[0];
        for y in 0..3 {
            let (mut avg_p, mut avg_log) = (0.0, 0.0);
            let draws = 10_000;
            for _ in 0..draws {
                let z: Vec<f64> = (0..2)
                    .map(|i| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        q.mu[i] + q.sigma[i] * e
                    })
                    .collect();
                let py = p.p_y_given_z(&z, &lp).unwrap()[y];
                avg_p += py / draws as f64;
                avg_log += py.ln() / draws as f64;
            }
            assert!(avg_p.ln() >= avg_log);
        }
    }
}

#[test]
fn training_lowers_the_loss_and_repeats_exactly() {
    let ds = generate::<f64>(&GenConfig::two_factor(4, 600, 0.05, 1)).unwrap();
    let cfg = VcaeConfig {
        hidden: vec![16],
        ..VcaeConfig::default()
    };
    let tc = TrainConfig {
        epochs: 10,
        batch_size: 64,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train_vcae(&ds, &cfg, &tc).unwrap();
    assert!(a.history[9] < a.history[0], "{:?}", a.history);
    let b = train_vcae(&ds, &cfg, &tc).unwrap();
    assert_eq!(a.params, b.params);
    let rows = latent_rows(&a.params, &ds, &cfg).unwrap();
    assert!(rows.iter().all(|r| (1.0..=100.0).contains(&r.weight)));
    assert!(rows
        .iter()
        .all(|r| r.weight == (1.0 / r.p_y_given_z).min(100.0)));
}
