//! Variational clustering autoencoder: a Gaussian encoder, a linear-output
//! decoder and one isotropic Gaussian latent cluster per class.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Optimizer, Tape, Tensor, Var};
use crate::classifier::{mlp_forward, BatchSampler, EpochBatches, MlpParams, MlpVars, TrainConfig};
use crate::data::LabeledDataset;
use crate::debias::{Provenance, SampleWeights};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, pairwise_sum, Scalar};

/// Default ceiling on `1/p(y|z)`.
pub const DEFAULT_WEIGHT_CAP: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VcaeConfig {
    pub dim_z: usize,
    /// Reconstruction, KL and classification coefficients.
    pub lambda: [f64; 3],
    /// Class prior `p_D(y)`; uniform when absent.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    /// Hidden widths of the encoder; the decoder mirrors them.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_cap")]
    pub weight_cap: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

fn default_cap() -> f64 {
    DEFAULT_WEIGHT_CAP
}

impl Default for VcaeConfig {
    fn default() -> Self {
        Self {
            dim_z: 2,
            lambda: [1.0, 1.0, 1.0],
            prior: None,
            hidden: default_hidden(),
            weight_cap: DEFAULT_WEIGHT_CAP,
        }
    }
}

impl VcaeConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.dim_z == 0 {
            return Err(Error::InvalidConfig("dim_z must be >= 1".into()));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda {:?} must be finite and >= 0",
                self.lambda
            )));
        }
        if !(self.weight_cap >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "weight cap {} must be >= 1",
                self.weight_cap
            )));
        }
        if let Some(p) = &self.prior {
            if p.len() != classes {
                return Err(Error::InvalidConfig(format!(
                    "prior has {} entries for {classes} classes",
                    p.len()
                )));
            }
            if p.iter().any(|&v| !(v > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(
                    "class prior must be positive and sum to 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn log_prior<T: Scalar>(&self, classes: usize) -> Vec<T> {
        match &self.prior {
            Some(p) => p.iter().map(|&v| T::lit(v.ln())).collect(),
            None => vec![T::lit(-(classes as f64).ln()); classes],
        }
    }
}

/// Diagonal Gaussian `N(μ, diag σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGaussian<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Scalar> LatentGaussian<T> {
    pub fn new(mu: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::shape(
                "latent_gaussian",
                format!("{} means, {} scales", mu.len(), sigma.len()),
            ));
        }
        if sigma.iter().any(|&s| !(s > T::zero()) || !s.is_finite())
            || mu.iter().any(|m| !m.is_finite())
        {
            return Err(Error::NonFinite(
                "latent Gaussian needs finite means and positive scales".into(),
            ));
        }
        Ok(Self { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `KL(q ‖ p)` for diagonal Gaussians.
pub fn kl_diag_gauss<T: Scalar>(q: &LatentGaussian<T>, p: &LatentGaussian<T>) -> T {
    let half = T::lit(0.5);
    let mut terms = Vec::with_capacity(q.dim());
    for i in 0..q.dim() {
        let d = q.mu[i] - p.mu[i];
        let vp = p.sigma[i] * p.sigma[i];
        terms.push(
            (p.sigma[i] / q.sigma[i]).ln() + (q.sigma[i] * q.sigma[i] + d * d) / (vp + vp) - half,
        );
    }
    terms.into_iter().sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VcaeParams<T> {
    pub encoder: MlpParams<T>,
    pub decoder: MlpParams<T>,
    /// `[C, dim_z]`
    pub class_means: Tensor<T>,
    /// `[C]`, one isotropic scale per class.
    pub class_log_std: Tensor<T>,
}

impl<T: Scalar> VcaeParams<T> {
    pub fn init(input_dim: usize, classes: usize, cfg: &VcaeConfig, seed: u64) -> Result<Self> {
        cfg.validate(classes)?;
        let dz = cfg.dim_z;
        let mut enc_sizes = vec![input_dim];
        enc_sizes.extend(&cfg.hidden);
        enc_sizes.push(2 * dz);
        let mut dec_sizes = vec![dz];
        dec_sizes.extend(cfg.hidden.iter().rev());
        dec_sizes.push(input_dim);
        let mut encoder = MlpParams::init(&enc_sizes, seed)?;
        // Zero the log σ head so every posterior starts with unit scale.
        let layers = enc_sizes.len() - 1;
        let w = &mut encoder.tensors_mut()[2 * (layers - 1)];
        let cols = w.cols();
        for row in w.data_mut().chunks_mut(cols) {
            for v in &mut row[dz..] {
                *v = T::zero();
            }
        }
        let decoder = MlpParams::init(&dec_sizes, seed.wrapping_add(1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let means = (0..classes * dz)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z)
            })
            .collect();
        Ok(Self {
            encoder,
            decoder,
            class_means: Tensor::matrix(classes, dz, means)?,
            class_log_std: Tensor::zeros(vec![classes]),
        })
    }

    pub fn dim_z(&self) -> usize {
        self.class_means.cols()
    }

    pub fn classes(&self) -> usize {
        self.class_means.rows()
    }

    pub fn class_gaussian(&self, c: usize) -> LatentGaussian<T> {
        let s = self.class_log_std.data()[c].exp();
        LatentGaussian {
            mu: self.class_means.row(c).to_vec(),
            sigma: vec![s; self.dim_z()],
        }
    }

    /// Posterior means and log scales, each `[n, dim_z]`.
    pub fn encode_batch(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let out = self.encoder.logits(x)?;
        let dz = self.dim_z();
        let n = out.rows();
        let mut mu = Vec::with_capacity(n * dz);
        let mut ls = Vec::with_capacity(n * dz);
        for r in 0..n {
            mu.extend_from_slice(&out.row(r)[..dz]);
            ls.extend_from_slice(&out.row(r)[dz..]);
        }
        Ok((Tensor::matrix(n, dz, mu)?, Tensor::matrix(n, dz, ls)?))
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<Vec<LatentGaussian<T>>> {
        let (mu, ls) = self.encode_batch(x)?;
        (0..mu.rows())
            .map(|r| {
                LatentGaussian::new(
                    mu.row(r).to_vec(),
                    ls.row(r).iter().map(|v| v.exp()).collect(),
                )
            })
            .collect()
    }

    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        self.decoder.logits(z)
    }

    /// `log p(z | c)` for every class.
    pub fn log_p_z_given_y(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.dim_z() {
            return Err(Error::shape(
                "log_p_z_given_y",
                format!("z of {} for dim {}", z.len(), self.dim_z()),
            ));
        }
        let d = T::from_usize_lossy(z.len());
        let half = T::lit(0.5);
        let log_2pi = (T::lit(2.0) * T::PI()).ln();
        Ok((0..self.classes())
            .map(|c| {
                let ls = self.class_log_std.data()[c];
                let sq: T = z
                    .iter()
                    .zip(self.class_means.row(c))
                    .map(|(&a, &m)| (a - m) * (a - m))
                    .sum();
                -half * sq * (-(ls + ls)).exp() - d * ls - half * d * log_2pi
            })
            .collect())
    }

    /// `p(y | z) ∝ p(z | y) p(y)`, normalized in log space.
    pub fn p_y_given_z(&self, z: &[T], log_prior: &[T]) -> Result<Vec<T>> {
        if log_prior.len() != self.classes() {
            return Err(Error::shape(
                "p_y_given_z",
                format!(
                    "prior of {} for {} classes",
                    log_prior.len(),
                    self.classes()
                ),
            ));
        }
        let joint: Vec<T> = self
            .log_p_z_given_y(z)?
            .iter()
            .zip(log_prior)
            .map(|(&a, &b)| a + b)
            .collect();
        let lse = log_sum_exp(&joint);
        Ok(joint.iter().map(|&v| (v - lse).exp()).collect())
    }

    fn groups_mut(&mut self) -> [&mut [Tensor<T>]; 4] {
        [
            self.encoder.tensors_mut(),
            self.decoder.tensors_mut(),
            std::slice::from_mut(&mut self.class_means),
            std::slice::from_mut(&mut self.class_log_std),
        ]
    }
}

/// Tape handles of one registered parameter set.
pub struct VcaeVars {
    encoder: MlpVars,
    decoder: MlpVars,
    means: Var,
    log_std: Var,
}

impl VcaeVars {
    pub fn register<T: Scalar>(tape: &mut Tape<T>, p: &VcaeParams<T>) -> Self {
        Self {
            encoder: p.encoder.register(tape),
            decoder: p.decoder.register(tape),
            means: tape.param(p.class_means.clone()),
            log_std: tape.param(p.class_log_std.clone()),
        }
    }

    /// Gradients grouped as encoder, decoder, class means, class log-scales.
    pub fn grads<T: Scalar>(&self, g: &Gradients<T>, p: &VcaeParams<T>) -> [Vec<Tensor<T>>; 4] {
        [
            self.encoder.grads(g, &p.encoder),
            self.decoder.grads(g, &p.decoder),
            vec![g.get_or_zeros(self.means, &p.class_means)],
            vec![g.get_or_zeros(self.log_std, &p.class_log_std)],
        ]
    }
}

/// Batch means of the three loss terms and their weighted total.
#[derive(Clone, Copy, Debug)]
pub struct VcaeLossVars {
    pub total: Var,
    pub reconstruction: Var,
    pub kl: Var,
    pub classification: Var,
}

/// Records the loss for a batch with frozen noise `eps` (`[n, dim_z]`).
pub fn vcae_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &VcaeVars,
    x: &Tensor<T>,
    y: &[usize],
    eps: &Tensor<T>,
    cfg: &VcaeConfig,
) -> Result<VcaeLossVars> {
    let dz = cfg.dim_z;
    let classes = tape.value(vars.log_std).len();
    let xv = tape.constant(x.clone());
    let enc = mlp_forward(tape, &vars.encoder, xv)?.logits;
    let mu = tape.slice_cols(enc, 0, dz)?;
    let ls = tape.slice_cols(enc, dz, 2 * dz)?;
    let sigma = tape.exp(ls);
    let e = tape.constant(eps.clone());
    let noise = tape.mul(sigma, e)?;
    let z = tape.add(mu, noise)?;

    let xhat = mlp_forward(tape, &vars.decoder, z)?.logits;
    let diff = tape.sub(xhat, xv)?;
    let sq = tape.square(diff);
    let rs = tape.sum_cols(sq)?;
    let rec = tape.scale(rs, T::lit(0.5));

    // KL(N(μ, diag σ²) ‖ N(μ_y, σ_y² I)), per sample.
    let dzt = T::from_usize_lossy(dz);
    let mu_y = tape.gather_rows(vars.means, y)?;
    let ls_y = tape.gather_rows(vars.log_std, y)?;
    let dm = tape.sub(mu, mu_y)?;
    let dm2 = tape.square(dm);
    let dist = tape.sum_cols(dm2)?;
    let two_ls = tape.scale(ls, T::lit(2.0));
    let var_q = tape.exp(two_ls);
    let tr = tape.sum_cols(var_q)?;
    let num = tape.add(dist, tr)?;
    let neg_two_ls_y = tape.scale(ls_y, T::lit(-2.0));
    let inv_var_p = tape.exp(neg_two_ls_y);
    let ratio = tape.mul(num, inv_var_p)?;
    let half_ratio = tape.scale(ratio, T::lit(0.5));
    let log_p = tape.scale(ls_y, dzt);
    let log_q = tape.sum_cols(ls)?;
    let log_term = tape.sub(log_p, log_q)?;
    let kl0 = tape.add(log_term, half_ratio)?;
    let kl = tape.add_scalar(kl0, -T::lit(0.5) * dzt);

    let dens = tape.gaussian_log_density(z, vars.means, vars.log_std)?;
    let prior = tape.constant(Tensor::vector(cfg.log_prior(classes)));
    let joint = tape.add_row(dens, prior)?;
    let post = tape.log_softmax(joint)?;
    let picked = tape.pick(post, y)?;
    let cls = tape.scale(picked, -T::one());

    let [l0, l1, l2] = cfg.lambda.map(T::lit);
    let a = tape.scale(rec, l0);
    let b = tape.scale(kl, l1);
    let c = tape.scale(cls, l2);
    let ab = tape.add(a, b)?;
    let abc = tape.add(ab, c)?;
    Ok(VcaeLossVars {
        total: tape.mean(abc),
        reconstruction: tape.mean(rec),
        kl: tape.mean(kl),
        classification: tape.mean(cls),
    })
}

/// Loss value of a batch under frozen noise, without gradients.
pub fn vcae_loss<T: Scalar>(
    params: &VcaeParams<T>,
    x: &Tensor<T>,
    y: &[usize],
    eps: &Tensor<T>,
    cfg: &VcaeConfig,
) -> Result<T> {
    let mut tape = Tape::new();
    let vars = VcaeVars::register(&mut tape, params);
    let l = vcae_loss_on_tape(&mut tape, &vars, x, y, eps, cfg)?;
    let v = tape.value(l.total).item();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("VCAE loss {v}")));
    }
    Ok(v)
}

fn standard_normal<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Tensor<T>> {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::lit(v)
        })
        .collect();
    Tensor::matrix(rows, cols, data)
}

#[derive(Clone, Debug)]
pub struct VcaeOutcome<T> {
    pub params: VcaeParams<T>,
    /// Mean training loss of each epoch.
    pub history: Vec<f64>,
}

/// Mini-batch training; noise comes from a stream seeded by `train_cfg.seed`.
/// `train_cfg.hidden` is ignored in favour of `cfg.hidden`.
pub fn train_vcae<T: Scalar>(
    ds: &LabeledDataset<T>,
    cfg: &VcaeConfig,
    train_cfg: &TrainConfig,
) -> Result<VcaeOutcome<T>> {
    train_cfg.validate()?;
    let mut params = VcaeParams::init(ds.dim(), ds.classes(), cfg, train_cfg.seed)?;
    let mut opts: Vec<Optimizer<T>> = (0..4).map(|_| train_cfg.optimizer.build()).collect();
    let mut sampler = EpochBatches::new(
        ds.len(),
        train_cfg.batch_size,
        train_cfg.shuffle,
        train_cfg.seed ^ 0x7cae,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_mul(31).wrapping_add(7));
    let mut history = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let mut losses = Vec::new();
        for idx in sampler.next_epoch() {
            let x = ds.features().select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
            let eps = standard_normal(&mut rng, idx.len(), cfg.dim_z)?;
            let mut tape = Tape::new();
            let vars = VcaeVars::register(&mut tape, &params);
            let l = vcae_loss_on_tape(&mut tape, &vars, &x, &y, &eps, cfg)?;
            let v = tape.value(l.total).item();
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("VCAE loss {v} at epoch {epoch}")));
            }
            let g = tape.backward(l.total)?;
            let grads = vars.grads(&g, &params);
            for ((group, gr), opt) in params
                .groups_mut()
                .into_iter()
                .zip(&grads)
                .zip(opts.iter_mut())
            {
                opt.step(group, gr)?;
            }
            losses.push(v.as_f64());
        }
        history.push(pairwise_sum(&losses) / losses.len().max(1) as f64);
    }
    Ok(VcaeOutcome { params, history })
}

/// Latent coordinates and derived weight of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentRow {
    pub index: usize,
    pub z: Vec<f64>,
    pub label: usize,
    pub aligned: bool,
    pub p_y_given_z: f64,
    pub weight: f64,
}

/// Evaluates `p(y_n | μ_{x_n})` for every sample.
pub fn latent_rows<T: Scalar>(
    params: &VcaeParams<T>,
    ds: &LabeledDataset<T>,
    cfg: &VcaeConfig,
) -> Result<Vec<LatentRow>> {
    let log_prior = cfg.log_prior::<T>(ds.classes());
    let cap = T::lit(cfg.weight_cap);
    let mut rows = Vec::with_capacity(ds.len());
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(1024) {
        let (mu, _) = params.encode_batch(&ds.features().select_rows(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let z = mu.row(r);
            let y = ds.labels()[i];
            let p = params.p_y_given_z(z, &log_prior)?[y];
            let w = if p > T::zero() {
                (T::one() / p).min(cap)
            } else {
                cap
            };
            rows.push(LatentRow {
                index: i,
                z: z.iter().map(|v| v.as_f64()).collect(),
                label: y,
                aligned: ds.aligned()[i],
                p_y_given_z: p.as_f64(),
                weight: w.as_f64(),
            });
        }
    }
    Ok(rows)
}

/// `w_n = min(1/p(y_n | μ_{x_n}), cap)`.
pub fn vcae_weights<T: Scalar>(
    params: &VcaeParams<T>,
    ds: &LabeledDataset<T>,
    cfg: &VcaeConfig,
) -> Result<SampleWeights<T>> {
    let w = latent_rows(params, ds, cfg)?
        .into_iter()
        .map(|r| T::lit(r.weight))
        .collect();
    SampleWeights::new(
        w,
        Provenance::Vcae,
        Some(T::lit(cfg.weight_cap.max(1.0 + 1e-12))),
    )
}

/// Per-class probabilities `p(y | μ_{x_n})` as an `N×C` matrix.
pub fn vcae_class_probs<T: Scalar>(
    params: &VcaeParams<T>,
    ds: &LabeledDataset<T>,
    cfg: &VcaeConfig,
) -> Result<Tensor<T>> {
    let log_prior = cfg.log_prior::<T>(ds.classes());
    let (mu, _) = params.encode_batch(ds.features())?;
    let mut out = Vec::with_capacity(ds.len() * ds.classes());
    for r in 0..mu.rows() {
        out.extend(params.p_y_given_z(mu.row(r), &log_prior)?);
    }
    Tensor::matrix(ds.len(), ds.classes(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(mu: &[f64], sigma: &[f64]) -> LatentGaussian<f64> {
        LatentGaussian::new(mu.to_vec(), sigma.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = gauss(&[0.3, -1.0], &[0.5, 2.0]);
        assert!(kl_diag_gauss(&p, &p).abs() < 1e-15);
        assert!(
            (kl_diag_gauss(&gauss(&[1.0], &[1.0]), &gauss(&[0.0], &[1.0])) - 0.5).abs() < 1e-15
        );
    }

    #[test]
    fn zero_encoder_gives_standard_posterior() {
        let cfg = VcaeConfig::default();
        let mut p = VcaeParams::<f64>::init(4, 3, &cfg, 0).unwrap();
        for t in p.encoder.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let q = p
            .encode(&Tensor::matrix(2, 4, vec![1.0; 8]).unwrap())
            .unwrap();
        assert_eq!(q[0].mu, vec![0.0, 0.0]);
        assert_eq!(q[1].sigma, vec![1.0, 1.0]);
    }

    #[test]
    fn symmetric_classes_split_evenly_at_origin() {
        let cfg = VcaeConfig::default();
        let mut p = VcaeParams::<f64>::init(4, 2, &cfg, 0).unwrap();
        p.class_means = Tensor::matrix(2, 2, vec![1.0, 2.0, -1.0, -2.0]).unwrap();
        let lp = cfg.log_prior::<f64>(2);
        let q = p.p_y_given_z(&[0.0, 0.0], &lp).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15);
        let at = p.p_y_given_z(&[-1.0, -2.0], &lp).unwrap();
        assert!(at[1] > at[0]);
    }

    #[test]
    fn config_validation() {
        assert!(VcaeConfig::default().validate(3).is_ok());
        let bad = VcaeConfig {
            lambda: [1.0, -1.0, 1.0],
            ..VcaeConfig::default()
        };
        assert!(bad.validate(3).is_err());
        let prior = VcaeConfig {
            prior: Some(vec![0.5, 0.6]),
            ..VcaeConfig::default()
        };
        assert!(prior.validate(2).is_err());
    }
}
