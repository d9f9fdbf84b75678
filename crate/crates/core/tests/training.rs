//! Training loop and pipeline behaviour on small synthetic problems.

use debias_core::autodiff::{OptimizerConfig, Tape, Tensor};
use debias_core::classifier::{
    mlp_forward, train, weighted_mean_on_tape, xent_on_tape, ConstantWeights, EpochBatches,
    MlpParams, Objective, TrainConfig, TrainSetup, WeightProvider,
};
use debias_core::data::{generate, GenConfig, LabeledDataset};
use debias_core::debias::{
    run_debias_pipeline, train_biased_classifier, validate_combination, AnnealConfig, Method,
    PipelineConfig, SampleWeights, Scheme,
};
use debias_core::metrics::evaluate;
use debias_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        seed,
        hidden: vec![16],
        ..TrainConfig::default()
    }
}

fn run(
    ds: &LabeledDataset<f64>,
    cfg: &TrainConfig,
    weights: &dyn WeightProvider<f64>,
) -> MlpParams<f64> {
    let init = MlpParams::init(&cfg.layer_sizes(ds.dim(), ds.classes()), cfg.seed).unwrap();
    let mut sampler = EpochBatches::new(ds.len(), cfg.batch_size, true, cfg.seed);
    train(
        init,
        TrainSetup {
            train: ds,
            objective: &Objective::CrossEntropy,
            weights,
            sampler: &mut sampler,
            cfg,
            eval: None,
        },
    )
    .unwrap()
    .params
}

#[test]
fn linearly_separable_data_is_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 200;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % 2;
        let sign = if c == 0 { -1.0 } else { 1.0 };
        x.push(sign * rng.random_range(0.5..2.0));
        x.push(rng.random_range(-1.0..1.0));
        y.push(c);
    }
    let ds = LabeledDataset::new(Tensor::matrix(n, 2, x).unwrap(), y, None, None, 2).unwrap();
    let cfg = TrainConfig {
        optimizer: OptimizerConfig::adam(1e-2),
        ..small_cfg(40, 1)
    };
    let p = run(&ds, &cfg, &ConstantWeights { value: 1.0, len: n });
    assert_eq!(evaluate(&p, &ds).unwrap().overall, 1.0);
}

#[test]
fn constant_weight_scales_the_gradient() {
    let p = MlpParams::<f64>::init(&[4, 6, 3], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::matrix(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y = [0, 2, 1, 1, 0];
    let grad = |c: f64| -> Vec<f64> {
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let xv = tape.constant(x.clone());
        let out = mlp_forward(&mut tape, &vars, xv).unwrap();
        let l = xent_on_tape(&mut tape, out.logits, &y).unwrap();
        let m = weighted_mean_on_tape(&mut tape, l, &[c; 5]).unwrap();
        let g = tape.backward(m).unwrap();
        vars.grads(&g, &p)
            .into_iter()
            .flat_map(|t| t.into_data())
            .collect()
    };
    let base = grad(1.0);
    for c in [0.05, 3.0, 10.0] {
        for (a, b) in grad(c).iter().zip(&base) {
            assert!((a - c * b).abs() < 1e-12 * (1.0 + (c * b).abs()));
        }
    }
}

#[test]
fn equal_loss_weights_reproduce_vanilla_exactly() {
    let ds = generate::<f64>(&GenConfig::two_factor(4, 300, 0.05, 1)).unwrap();
    let cfg = small_cfg(3, 9);
    let vanilla = run(
        &ds,
        &cfg,
        &ConstantWeights {
            value: 1.0,
            len: ds.len(),
        },
    );
    let lw = run(&ds, &cfg, &SampleWeights::<f64>::uniform(ds.len()));
    assert_eq!(vanilla, lw);
}

#[test]
fn training_is_deterministic() {
    let ds = generate::<f64>(&GenConfig::two_factor(4, 300, 0.05, 1)).unwrap();
    let cfg = small_cfg(2, 5);
    let ones = ConstantWeights {
        value: 1.0,
        len: ds.len(),
    };
    assert_eq!(run(&ds, &cfg, &ones), run(&ds, &cfg, &ones));
}

#[test]
fn vanilla_model_is_worse_on_conflicting_samples() {
    let g = GenConfig::two_factor(10, 4000, 0.01, 2);
    let tr = generate::<f64>(&g).unwrap();
    let te = generate::<f64>(&g.unbiased(2000, 3)).unwrap();
    let cfg = PipelineConfig::new(
        Scheme::Vanilla,
        Method::Lw,
        TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
    );
    let out = run_debias_pipeline(&tr, &te, &cfg).unwrap();
    let last = out.history.last().unwrap();
    assert!(last.test_acc_bc.unwrap() < last.test_acc_ba.unwrap());
    assert_eq!(last.debias_bc_ratio, Some(0.5));
}

#[test]
fn biased_classifier_is_less_confident_on_conflicting_samples() {
    let ds = generate::<f64>(&GenConfig::two_factor(10, 4000, 0.01, 4)).unwrap();
    let art =
        train_biased_classifier(&ds, Default::default(), 10, &TrainConfig::default()).unwrap();
    let mean = |a: bool| {
        let v: Vec<f64> = art
            .confidences
            .iter()
            .zip(ds.aligned())
            .filter(|(_, &f)| f == a)
            .map(|(&c, _)| c)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(
        mean(false) < mean(true),
        "BC {} vs BA {}",
        mean(false),
        mean(true)
    );
}

#[test]
fn annealing_with_zero_span_is_plain_loss_weighting() {
    let g = GenConfig::two_factor(4, 400, 0.05, 6);
    let tr = generate::<f64>(&g).unwrap();
    let te = generate::<f64>(&g.unbiased(200, 7)).unwrap();
    let lw = PipelineConfig::new(Scheme::OracleUb, Method::Lw, small_cfg(2, 1));
    let alw = PipelineConfig {
        method: Method::Alw,
        anneal: AnnealConfig {
            w_init: 1.0,
            t_anneal: 0,
        },
        ..lw.clone()
    };
    let a = run_debias_pipeline(&tr, &te, &lw).unwrap();
    let b = run_debias_pipeline(&tr, &te, &alw).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn every_valid_combination_runs() {
    let g = GenConfig::two_factor(3, 240, 0.1, 8);
    let tr = generate::<f64>(&g).unwrap();
    let te = generate::<f64>(&g.unbiased(120, 9)).unwrap();
    for scheme in Scheme::ALL {
        for method in [Method::Lw, Method::Alw, Method::Ws, Method::Tba] {
            let mut cfg = PipelineConfig::new(scheme, method, small_cfg(2, 3));
            cfg.t_bias = 1;
            cfg.gamma = 50.0;
            cfg.anneal.t_anneal = 10;
            cfg.vcae.hidden = vec![8];
            let r = run_debias_pipeline(&tr, &te, &cfg);
            if validate_combination(scheme, method).is_ok() {
                let out = r.unwrap_or_else(|e| panic!("{scheme:?}/{method:?}: {e}"));
                assert_eq!(out.history.len(), 2);
                assert_eq!(out.weights.len(), tr.len());
                assert!(out
                    .history
                    .iter()
                    .all(|h| h.debias_bc_ratio.is_some() && h.test_acc.is_some()));
            } else {
                assert!(
                    matches!(r, Err(Error::Incompatible(_))),
                    "{scheme:?}/{method:?}"
                );
            }
        }
    }
}

#[test]
fn oracle_needs_generator_metadata() {
    let g = GenConfig::two_factor(3, 60, 0.1, 8);
    let tr = generate::<f64>(&g).unwrap();
    let bare = LabeledDataset::new(
        tr.features().clone(),
        tr.labels().to_vec(),
        tr.bias().map(<[usize]>::to_vec),
        None,
        3,
    )
    .unwrap();
    let cfg = PipelineConfig::new(Scheme::OracleUb, Method::Lw, small_cfg(1, 0));
    assert!(run_debias_pipeline(&bare, &tr, &cfg).is_err());
}
