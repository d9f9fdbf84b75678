use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::BatchSampler;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// i.i.d. draws with replacement, `P(n) = w_n / Σ w`.
#[derive(Clone, Debug)]
pub struct WeightedSampler {
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    batch_size: usize,
    batches_per_epoch: usize,
}

impl WeightedSampler {
    /// `batches_per_epoch` batches of `batch_size` draws make up one epoch.
    pub fn new<T: Scalar>(
        weights: &[T],
        batch_size: usize,
        batches_per_epoch: usize,
        seed: u64,
    ) -> Result<Self> {
        let w: Vec<f64> = weights.iter().map(|w| w.as_f64()).collect();
        if let Some(bad) = w.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sampling weight {bad} is negative or non-finite"
            )));
        }
        let dist = WeightedIndex::new(&w)
            .map_err(|e| Error::InvalidConfig(format!("cannot sample from weights: {e}")))?;
        Ok(Self {
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
            batch_size: batch_size.max(1),
            batches_per_epoch,
        })
    }

    /// Epoch length matching one pass over `n` samples.
    pub fn for_epochs_of<T: Scalar>(weights: &[T], batch_size: usize, seed: u64) -> Result<Self> {
        let n = weights.len();
        let bs = batch_size.max(1);
        Self::new(weights, bs, n.div_ceil(bs), seed)
    }

    pub fn draw(&mut self) -> usize {
        self.dist.sample(&mut self.rng)
    }

    pub fn draw_batch(&mut self) -> Vec<usize> {
        (0..self.batch_size).map(|_| self.draw()).collect()
    }
}

impl BatchSampler for WeightedSampler {
    fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        (0..self.batches_per_epoch)
            .map(|_| self.draw_batch())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_weights_rejected() {
        assert!(WeightedSampler::new(&[0.0_f64, 0.0], 4, 1, 0).is_err());
        assert!(WeightedSampler::new(&[1.0_f64, -1.0], 4, 1, 0).is_err());
        assert!(WeightedSampler::new::<f64>(&[], 4, 1, 0).is_err());
    }

    #[test]
    fn zero_weight_never_drawn() {
        let mut s = WeightedSampler::new(&[1.0_f64, 0.0, 2.0], 64, 1, 3).unwrap();
        for _ in 0..200 {
            assert!(s.draw_batch().iter().all(|&i| i != 1));
        }
    }

    #[test]
    fn epochs_have_requested_shape() {
        let mut s = WeightedSampler::for_epochs_of(&[1.0_f64; 10], 3, 1).unwrap();
        let e = s.next_epoch();
        assert_eq!(e.len(), 4);
        assert!(e.iter().all(|b| b.len() == 3));
    }

    #[test]
    fn seeded_streams_repeat() {
        let mut a = WeightedSampler::new(&[1.0_f64, 2.0, 3.0], 8, 2, 42).unwrap();
        let mut b = WeightedSampler::new(&[1.0_f64, 2.0, 3.0], 8, 2, 42).unwrap();
        assert_eq!(a.next_epoch(), b.next_epoch());
    }
}
