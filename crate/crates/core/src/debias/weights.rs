use serde::{Deserialize, Serialize};

use crate::classifier::WeightProvider;
use crate::data::{EmpiricalConditional, LabeledDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest loss weight after [`rescale_weights`].
pub const RESCALED_MAX: f64 = 10.0;

/// Where a set of sample weights came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Every sample weighs 1 (vanilla training).
    Uniform,
    /// `1/p(y|b)` from the generator's analytic conditional.
    OracleUb,
    /// `1/p̂(y|b)` from bias-label counts.
    OracleYb,
    /// `min(1/p_ψ(y|x), γ)` from a GCE-trained biased classifier.
    BiasedConfidence,
    Lff,
    Pgd,
    Vcae,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Uniform => "uniform",
            Provenance::OracleUb => "oracle-ub",
            Provenance::OracleYb => "oracle-yb",
            Provenance::BiasedConfidence => "biased-confidence",
            Provenance::Lff => "lff",
            Provenance::Pgd => "pgd",
            Provenance::Vcae => "vcae",
        }
    }

    /// Resampling-only and loss-ratio weights may be exactly zero.
    fn allows_zero(self) -> bool {
        matches!(self, Provenance::Pgd | Provenance::Lff)
    }
}

/// Per-sample weights with their provenance and clamp ceiling `γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWeights<T> {
    weights: Vec<T>,
    provenance: Provenance,
    gamma: Option<T>,
    rescaled: bool,
}

impl<T: Scalar> SampleWeights<T> {
    pub fn new(weights: Vec<T>, provenance: Provenance, gamma: Option<T>) -> Result<Self> {
        for (i, &w) in weights.iter().enumerate() {
            let ok =
                w.is_finite() && (w > T::zero() || (provenance.allows_zero() && w == T::zero()));
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "{} weight {w} at index {i} is not positive",
                    provenance.as_str()
                )));
            }
        }
        Ok(Self {
            weights,
            provenance,
            gamma,
            rescaled: false,
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![T::one(); n],
            provenance: Provenance::Uniform,
            gamma: None,
            rescaled: false,
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn gamma(&self) -> Option<T> {
        self.gamma
    }

    pub fn is_rescaled(&self) -> bool {
        self.rescaled
    }
}

impl<T: Scalar> WeightProvider<T> for SampleWeights<T> {
    fn batch_weights(&self, idx: &[usize], _step: u64) -> Vec<T> {
        idx.iter().map(|&i| self.weights[i]).collect()
    }

    fn all_weights(&self, _step: u64) -> Option<Vec<T>> {
        Some(self.weights.clone())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "clamp gamma {gamma} must be a finite value > 1"
        )));
    }
    Ok(())
}

/// `w_n = min(1/p_n, γ)`, so `w_n ∈ [1, γ]`.
pub fn compute_weights_clamped<T: Scalar>(confidences: &[T], gamma: T) -> Result<SampleWeights<T>> {
    check_gamma(gamma.as_f64())?;
    let mut w = Vec::with_capacity(confidences.len());
    for (i, &p) in confidences.iter().enumerate() {
        if !(p > T::zero() && p <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "confidence {p} at index {i} not in (0,1]"
            )));
        }
        w.push((T::one() / p).min(gamma));
    }
    SampleWeights::new(w, Provenance::BiasedConfidence, Some(gamma))
}

/// Multiplies every weight by `10/γ`, mapping `[1, γ]` onto `[10/γ, 10]`.
pub fn rescale_weights<T: Scalar>(w: &SampleWeights<T>) -> Result<SampleWeights<T>> {
    if w.rescaled {
        return Err(Error::AlreadyRescaled);
    }
    let gamma = w.gamma.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "{} weights carry no clamp ceiling",
            w.provenance.as_str()
        ))
    })?;
    let k = T::lit(RESCALED_MAX) / gamma;
    Ok(SampleWeights {
        weights: w.weights.iter().map(|&x| x * k).collect(),
        provenance: w.provenance,
        gamma: w.gamma,
        rescaled: true,
    })
}

/// Exact inverse-conditional weights `1/p(y_n | b_n)` from a row-major
/// `C×C` table indexed `(y, b)`. The ceiling is set to the largest weight so
/// that rescaling maps it to 10.
pub fn inverse_conditional_weights<T: Scalar>(
    ds: &LabeledDataset<T>,
    table: &[T],
    provenance: Provenance,
) -> Result<SampleWeights<T>> {
    let bias = ds.bias().ok_or(Error::MissingBiasLabels)?;
    let c = ds.classes();
    if table.len() != c * c {
        return Err(Error::shape(
            "inverse_conditional_weights",
            format!("table of {} for {c} classes", table.len()),
        ));
    }
    let mut w = Vec::with_capacity(ds.len());
    for (&y, &b) in ds.labels().iter().zip(bias) {
        let p = table[y * c + b];
        if !(p > T::zero()) {
            return Err(Error::Positivity(format!("p(y={y} | b={b}) = {p}")));
        }
        w.push(T::one() / p);
    }
    let max = w.iter().copied().fold(T::one(), T::max);
    // Oracle weights are exactly 1 everywhere only for unbiased data; keep a
    // ceiling above 1 so the rescale rule still applies.
    let gamma = if max > T::one() {
        max
    } else {
        T::lit(1.0 + 1e-12)
    };
    SampleWeights::new(w, provenance, Some(gamma))
}

/// Oracle weights from the generator's analytic `p(y|b)`.
pub fn oracle_ub_weights<T: Scalar>(ds: &LabeledDataset<T>) -> Result<SampleWeights<T>> {
    let origin = ds.origin().ok_or_else(|| {
        Error::InvalidConfig("oracle-ub needs a generated dataset with known conditional".into())
    })?;
    let table: Vec<T> = origin
        .analytic_p_y_given_b()
        .into_iter()
        .map(T::lit)
        .collect();
    inverse_conditional_weights(ds, &table, Provenance::OracleUb)
}

/// Oracle weights from the empirical `p̂(y|b)`.
pub fn oracle_yb_weights<T: Scalar>(
    ds: &LabeledDataset<T>,
    est: &EmpiricalConditional<T>,
) -> Result<SampleWeights<T>> {
    inverse_conditional_weights(ds, est.table(), Provenance::OracleYb)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealConfig {
    /// Common starting weight of every sample.
    pub w_init: f64,
    /// Optimizer steps over which weights move linearly to their targets.
    pub t_anneal: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            w_init: 1.0,
            t_anneal: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_init > 0.0) || !self.w_init.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "anneal w_init {} must be > 0",
                self.w_init
            )));
        }
        Ok(())
    }
}

/// `β + t·(w − β)/T` for `t < T`, `w` afterwards (and always when `T = 0`).
pub fn anneal_weight<T: Scalar>(w: T, t: u64, ac: &AnnealConfig) -> T {
    if ac.t_anneal == 0 || t >= ac.t_anneal {
        return w;
    }
    let beta = T::lit(ac.w_init);
    beta + T::lit(t as f64) * (w - beta) / T::lit(ac.t_anneal as f64)
}

/// Weights that start at `w_init` and reach their targets after `t_anneal`
/// optimizer steps.
#[derive(Clone, Debug)]
pub struct AnnealedWeights<T> {
    pub target: SampleWeights<T>,
    pub config: AnnealConfig,
}

impl<T: Scalar> WeightProvider<T> for AnnealedWeights<T> {
    fn batch_weights(&self, idx: &[usize], step: u64) -> Vec<T> {
        idx.iter()
            .map(|&i| anneal_weight(self.target.weights()[i], step, &self.config))
            .collect()
    }

    fn all_weights(&self, step: u64) -> Option<Vec<T>> {
        Some(
            self.target
                .weights()
                .iter()
                .map(|&w| anneal_weight(w, step, &self.config))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_examples() {
        let w = compute_weights_clamped(&[1.0_f64, 0.001, 0.02], 200.0).unwrap();
        assert_eq!(w.weights(), &[1.0, 200.0, 50.0]);
        assert!(!w.is_rescaled());
        assert!(compute_weights_clamped(&[0.5_f64], 1.0).is_err());
        assert!(compute_weights_clamped(&[0.0_f64], 10.0).is_err());
    }

    #[test]
    fn rescale_examples() {
        let w = compute_weights_clamped(&[1.0 / 200.0, 1.0, 1.0 / 50.0], 200.0_f64).unwrap();
        let r = rescale_weights(&w).unwrap();
        assert!((r.weights()[0] - 10.0).abs() < 1e-12);
        assert!((r.weights()[1] - 0.05).abs() < 1e-15);
        assert!((r.weights()[2] - 2.5).abs() < 1e-12);
        assert!(r.is_rescaled());
        assert!(matches!(rescale_weights(&r), Err(Error::AlreadyRescaled)));
    }

    #[test]
    fn anneal_endpoints() {
        let ac = AnnealConfig {
            w_init: 1.0,
            t_anneal: 40,
        };
        assert_eq!(anneal_weight(9.0_f64, 0, &ac), 1.0);
        assert_eq!(anneal_weight(9.0_f64, 40, &ac), 9.0);
        assert_eq!(anneal_weight(9.0_f64, 20, &ac), 5.0);
        assert_eq!(anneal_weight(9.0_f64, 1000, &ac), 9.0);
        let off = AnnealConfig {
            w_init: 3.0,
            t_anneal: 0,
        };
        assert_eq!(anneal_weight(9.0_f64, 0, &off), 9.0);
    }

    #[test]
    fn zero_weights_only_for_resampling_sources() {
        assert!(SampleWeights::new(vec![0.0_f64, 1.0], Provenance::Pgd, None).is_ok());
        assert!(
            SampleWeights::new(vec![0.0_f64, 1.0], Provenance::BiasedConfidence, None).is_err()
        );
        assert!(SampleWeights::new(vec![f64::NAN], Provenance::Pgd, None).is_err());
    }
}
