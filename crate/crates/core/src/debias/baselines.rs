use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::classifier::softmax;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Loss-ratio weight `L_ψ / (L_ψ + L_θ)`; `0.5` when both losses vanish.
pub fn lff_weight<T: Scalar>(loss_biased: T, loss_debiased: T) -> Result<T> {
    if !(loss_biased >= T::zero())
        || !(loss_debiased >= T::zero())
        || !loss_biased.is_finite()
        || !loss_debiased.is_finite()
    {
        return Err(Error::InvalidConfig(format!(
            "LfF losses must be finite and >= 0, got {loss_biased} and {loss_debiased}"
        )));
    }
    let s = loss_biased + loss_debiased;
    if s == T::zero() {
        return Ok(T::lit(0.5));
    }
    Ok(loss_biased / s)
}

/// Frobenius norm of the last-layer gradient `(p − 1_y) hᵀ`, computed as the
/// product of the two vector norms.
pub fn pgd_weight<T: Scalar>(p: &[T], y: usize, h: &[T]) -> Result<T> {
    if y >= p.len() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: p.len(),
        });
    }
    let r: T = p
        .iter()
        .enumerate()
        .map(|(c, &pc)| {
            let d = if c == y { pc - T::one() } else { pc };
            d * d
        })
        .sum();
    let hn: T = h.iter().map(|&v| v * v).sum();
    Ok(r.sqrt() * hn.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TbaConfig {
    pub gamma: f64,
}

impl TbaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "TBA gamma {} must be > 1",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `log max(p, 1/γ)` entrywise: the additive logit correction.
pub fn tba_log_offsets<T: Scalar>(p_psi: &[T], gamma: T) -> Result<Vec<T>> {
    TbaConfig {
        gamma: gamma.as_f64(),
    }
    .validate()?;
    let floor = T::one() / gamma;
    p_psi
        .iter()
        .map(|&p| {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::InvalidConfig(format!(
                    "bias probability {p} not in [0,1]"
                )));
            }
            Ok(p.max(floor).ln())
        })
        .collect()
}

/// `softmax(f + log v)` with `v = max(p_ψ, 1/γ)`.
pub fn tba_adjusted_probs<T: Scalar>(logits: &[T], p_psi: &[T], gamma: T) -> Result<Vec<T>> {
    if logits.len() != p_psi.len() {
        return Err(Error::shape(
            "tba",
            format!("{} logits vs {} probabilities", logits.len(), p_psi.len()),
        ));
    }
    let off = tba_log_offsets(p_psi, gamma)?;
    let adj: Vec<T> = logits.iter().zip(&off).map(|(&f, &o)| f + o).collect();
    Ok(softmax(&adj))
}

/// Row-wise [`tba_log_offsets`] of an `N×C` probability matrix.
pub fn tba_offset_matrix<T: Scalar>(probs: &Tensor<T>, gamma: T) -> Result<Tensor<T>> {
    let data = tba_log_offsets(probs.data(), gamma)?;
    Tensor::new(probs.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lff_examples() {
        assert_eq!(lff_weight(3.0_f64, 3.0).unwrap(), 0.5);
        assert_eq!(lff_weight(2.0_f64, 0.0).unwrap(), 1.0);
        assert_eq!(lff_weight(2.0_f64, 6.0).unwrap(), 0.25);
        assert_eq!(lff_weight(0.0_f64, 0.0).unwrap(), 0.5);
        assert!(lff_weight(-1.0_f64, 1.0).is_err());
    }

    #[test]
    fn pgd_examples() {
        assert_eq!(pgd_weight(&[0.0_f64, 1.0], 1, &[3.0, 4.0]).unwrap(), 0.0);
        let w = pgd_weight(&[0.5_f64, 0.5], 0, &[1.0]).unwrap();
        assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
        let w2 = pgd_weight(&[0.5_f64, 0.5], 0, &[2.0]).unwrap();
        assert!((w2 - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn tba_examples() {
        let p = tba_adjusted_probs(&[0.0_f64, 0.0], &[0.9, 0.1], 200.0).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-12 && (p[1] - 0.1).abs() < 1e-12);
        let f = [0.3_f64, -1.2, 2.0];
        let q = tba_adjusted_probs(&f, &[1.0 / 3.0; 3], 200.0).unwrap();
        for (a, b) in q.iter().zip(softmax(&f)) {
            assert!((a - b).abs() < 1e-12);
        }
        let off = tba_log_offsets(&[0.0_f64, 1.0], 100.0).unwrap();
        assert!((off[0] - (0.01f64).ln()).abs() < 1e-15);
        assert!(tba_log_offsets(&[0.5_f64], 1.0).is_err());
    }
}
