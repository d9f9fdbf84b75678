//! Per-sample losses, as plain functions and as tape builders.
//!
//! Probabilities of the true class are clamped to at least [`P_MIN`], so
//! cross-entropy never exceeds `−ln P_MIN` and the GCE gradient stays bounded.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};

pub const P_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GceConfig {
    pub tau: f64,
}

impl Default for GceConfig {
    fn default() -> Self {
        Self { tau: 0.7 }
    }
}

impl GceConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let c = Self { tau };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "GCE tau {} not in (0,1]",
                self.tau
            )));
        }
        Ok(())
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&l| (l - lse).exp()).collect()
}

/// `−log softmax(logits)[y]`.
pub fn softmax_xent<T: Scalar>(logits: &[T], y: usize) -> Result<T> {
    if y >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: logits.len(),
        });
    }
    let lp = logits[y] - log_sum_exp(logits);
    Ok(-lp.max(T::lit(P_MIN.ln())))
}

fn check_gce(p: f64, tau: f64) -> Result<()> {
    GceConfig { tau }.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "probability {p} not in [0,1]"
        )));
    }
    Ok(())
}

/// Generalized cross-entropy `(1 − p^τ)/τ` of the true-class probability.
pub fn gce_loss<T: Scalar>(p: T, tau: T) -> Result<T> {
    check_gce(p.as_f64(), tau.as_f64())?;
    let p = p.max(T::lit(P_MIN));
    Ok((T::one() - p.powf(tau)) / tau)
}

/// `d gce / d p = −p^(τ−1)`.
pub fn gce_grad<T: Scalar>(p: T, tau: T) -> Result<T> {
    check_gce(p.as_f64(), tau.as_f64())?;
    let p = p.max(T::lit(P_MIN));
    Ok(-p.powf(tau - T::one()))
}

/// `(1/n) Σ w_n · loss_n`; divides by the batch size, not by `Σ w`.
pub fn weighted_mean_loss<T: Scalar>(losses: &[T], weights: &[T]) -> Result<T> {
    if losses.len() != weights.len() {
        return Err(Error::shape(
            "weighted_mean_loss",
            format!("{} losses vs {} weights", losses.len(), weights.len()),
        ));
    }
    if losses.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w >= T::zero())) {
        return Err(Error::InvalidConfig(format!("negative weight {w}")));
    }
    let s: T = losses.iter().zip(weights).map(|(&l, &w)| l * w).sum();
    Ok(s / T::from_usize_lossy(losses.len()))
}

/// Per-sample loss recorded on a tape.
#[derive(Clone, Debug, PartialEq)]
pub enum LossKind<T> {
    CrossEntropy,
    Gce {
        tau: T,
    },
    /// Cross-entropy of `softmax(logits + offsets)`; `offsets` has one row
    /// per batch sample.
    OffsetCrossEntropy {
        offsets: Tensor<T>,
    },
}

fn clamped_log_p<T: Scalar>(tape: &mut Tape<T>, logits: Var, y: &[usize]) -> Result<Var> {
    let ls = tape.log_softmax(logits)?;
    let lp = tape.pick(ls, y)?;
    Ok(tape.clamp_min(lp, T::lit(P_MIN.ln())))
}

/// Per-sample cross-entropy, shape `[n]`.
pub fn xent_on_tape<T: Scalar>(tape: &mut Tape<T>, logits: Var, y: &[usize]) -> Result<Var> {
    let lp = clamped_log_p(tape, logits, y)?;
    Ok(tape.scale(lp, -T::one()))
}

/// Per-sample GCE via `p^τ = exp(τ · log p)`, shape `[n]`.
pub fn gce_on_tape<T: Scalar>(tape: &mut Tape<T>, logits: Var, y: &[usize], tau: T) -> Result<Var> {
    let lp = clamped_log_p(tape, logits, y)?;
    let scaled = tape.scale(lp, tau);
    let p_tau = tape.exp(scaled);
    let neg = tape.scale(p_tau, -T::one() / tau);
    Ok(tape.add_scalar(neg, T::one() / tau))
}

pub fn per_sample_loss<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    y: &[usize],
    kind: &LossKind<T>,
) -> Result<Var> {
    match kind {
        LossKind::CrossEntropy => xent_on_tape(tape, logits, y),
        LossKind::Gce { tau } => gce_on_tape(tape, logits, y, *tau),
        LossKind::OffsetCrossEntropy { offsets } => {
            let off = tape.constant(offsets.clone());
            let adj = tape.add(logits, off)?;
            xent_on_tape(tape, adj, y)
        }
    }
}

/// `(1/n) Σ w_n · loss_n` on the tape.
pub fn weighted_mean_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    losses: Var,
    weights: &[T],
) -> Result<Var> {
    let n = tape.value(losses).len();
    if weights.len() != n {
        return Err(Error::shape(
            "weighted_mean",
            format!("{} weights for {n} losses", weights.len()),
        ));
    }
    let w = tape.constant(Tensor::vector(weights.to_vec()));
    let prod = tape.mul(losses, w)?;
    let s = tape.sum(prod);
    Ok(tape.scale(s, T::one() / T::from_usize_lossy(n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xent_uniform_logits() {
        let l = softmax_xent(&[0.0_f64; 10], 3).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn xent_confident_correct() {
        let mut logits = [0.0_f64; 5];
        logits[2] = 50.0;
        assert!(softmax_xent(&logits, 2).unwrap() < 1e-9);
    }

    #[test]
    fn xent_reference_value() {
        // ln(e + e² + e³) − 3, evaluated at high precision offline.
        let l = softmax_xent(&[1.0_f64, 2.0, 3.0], 2).unwrap();
        assert!((l - 0.407_605_964_444_380_1).abs() < 1e-12);
    }

    #[test]
    fn xent_rejects_bad_label() {
        assert!(matches!(
            softmax_xent(&[0.0_f64, 1.0], 2),
            Err(Error::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn xent_is_clamped() {
        let l = softmax_xent(&[0.0_f64, 1000.0], 0).unwrap();
        assert!((l + P_MIN.ln()).abs() < 1e-9);
    }

    #[test]
    fn gce_values() {
        assert_eq!(gce_loss(1.0_f64, 0.3).unwrap(), 0.0);
        assert!((gce_loss(0.5_f64, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // (1 − √0.5)/0.5 = 2 − √2
        assert!((gce_loss(0.5_f64, 0.5).unwrap() - 0.585_786_437_626_905).abs() < 1e-12);
    }

    #[test]
    fn gce_validation() {
        assert!(gce_loss(0.5_f64, 0.0).is_err());
        assert!(gce_loss(0.5_f64, 1.5).is_err());
        assert!(gce_loss(1.5_f64, 0.5).is_err());
        assert!(GceConfig::new(0.7).is_ok());
        // p = 0 is allowed: clamped, finite gradient
        assert!(gce_grad(0.0_f64, 0.5).unwrap().is_finite());
    }

    #[test]
    fn weighted_mean_examples() {
        assert_eq!(
            weighted_mean_loss(&[1.0_f64, 3.0], &[1.0, 1.0]).unwrap(),
            2.0
        );
        assert_eq!(
            weighted_mean_loss(&[4.0_f64, 9.0], &[2.0, 0.0]).unwrap(),
            4.0
        );
        assert!(
            (weighted_mean_loss(&[1.0_f64, 1.0], &[10.0, 0.05]).unwrap() - 5.025).abs() < 1e-15
        );
        assert!(weighted_mean_loss(&[1.0_f64], &[-1.0]).is_err());
        assert!(weighted_mean_loss(&[1.0_f64], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tape_losses_match_plain() {
        let logits = Tensor::matrix(2, 3, vec![0.2_f64, -1.0, 0.7, 3.0, 0.1, -0.4]).unwrap();
        let y = [2usize, 0];
        let mut tape = Tape::new();
        let lv = tape.constant(logits.clone());
        let xe = xent_on_tape(&mut tape, lv, &y).unwrap();
        let ge = gce_on_tape(&mut tape, lv, &y, 0.7).unwrap();
        for i in 0..2 {
            let want = softmax_xent(logits.row(i), y[i]).unwrap();
            assert!((tape.value(xe).data()[i] - want).abs() < 1e-14);
            let p = softmax(logits.row(i))[y[i]];
            let want = gce_loss(p, 0.7).unwrap();
            assert!((tape.value(ge).data()[i] - want).abs() < 1e-14);
        }
    }
}
