use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Count-based estimate of `p(y | b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalConditional<T> {
    classes: usize,
    /// Row-major `C×C`, entry `(y, b)`.
    table: Vec<T>,
    counts: Vec<u64>,
}

impl<T: Scalar> EmpiricalConditional<T> {
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// `p̂(y | b)`.
    pub fn get(&self, y: usize, b: usize) -> T {
        self.table[y * self.classes + b]
    }

    pub fn count(&self, y: usize, b: usize) -> u64 {
        self.counts[y * self.classes + b]
    }

    /// The column `p̂(· | b)` as a class-probability vector.
    pub fn column(&self, b: usize) -> Vec<T> {
        (0..self.classes).map(|y| self.get(y, b)).collect()
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }
}

/// `p̂(y=c | b=k) = count(y=c, b=k) / count(b=k)`.
///
/// Every bias value in `0..C` must occur at least once.
pub fn estimate_p_y_given_b<T: Scalar>(ds: &LabeledDataset<T>) -> Result<EmpiricalConditional<T>> {
    let bias = ds.bias().ok_or(Error::MissingBiasLabels)?;
    let c = ds.classes();
    let mut counts = vec![0u64; c * c];
    for (&y, &b) in ds.labels().iter().zip(bias) {
        counts[y * c + b] += 1;
    }
    let mut table = vec![T::zero(); c * c];
    for b in 0..c {
        let total: u64 = (0..c).map(|y| counts[y * c + b]).sum();
        if total == 0 {
            return Err(Error::EmptyBiasCell(b));
        }
        let denom = T::lit(total as f64);
        for y in 0..c {
            table[y * c + b] = T::lit(counts[y * c + b] as f64) / denom;
        }
    }
    Ok(EmpiricalConditional {
        classes: c,
        table,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn ds(y: Vec<usize>, b: Option<Vec<usize>>, c: usize) -> LabeledDataset<f64> {
        let n = y.len();
        LabeledDataset::new(Tensor::zeros(vec![n, 1]), y, b, None, c).unwrap()
    }

    #[test]
    fn single_class_cell() {
        // Two declared classes but every sample sits in (y=0, b=0); the
        // unobserved bias value must be reported.
        let d = ds(vec![0, 0, 0], Some(vec![0, 0, 0]), 2);
        assert!(matches!(
            estimate_p_y_given_b(&d),
            Err(Error::EmptyBiasCell(1))
        ));
        let d = ds(vec![0, 0, 1], Some(vec![0, 0, 1]), 2);
        let e = estimate_p_y_given_b(&d).unwrap();
        assert_eq!(e.get(0, 0), 1.0);
    }

    #[test]
    fn bias_equal_to_label_gives_identity() {
        let y: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let d = ds(y.clone(), Some(y), 4);
        let e = estimate_p_y_given_b(&d).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(e.get(a, b), if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn missing_bias_labels() {
        let d = ds(vec![0, 1], None, 2);
        assert!(matches!(
            estimate_p_y_given_b(&d),
            Err(Error::MissingBiasLabels)
        ));
    }

    #[test]
    fn columns_sum_to_one() {
        let y = vec![0, 1, 2, 0, 1, 2, 2, 2, 1];
        let b = vec![0, 0, 0, 1, 1, 2, 2, 1, 2];
        let e = estimate_p_y_given_b(&ds(y, Some(b), 3)).unwrap();
        for k in 0..3 {
            let s: f64 = e.column(k).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(e.count(2, 2), 2);
    }
}
