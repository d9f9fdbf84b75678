//! Procedurally generated biased datasets with known ground-truth bias
//! structure, and the nonparametric `p(y|b)` estimator.
//!
//! Every generated sample carries a class label `y`, a bias label `b` and an
//! `aligned` flag (`b == y`). The class attribute is identified with `y`.

mod conditional;
mod generate;
mod glyphs;
mod io;

pub use conditional::{estimate_p_y_given_b, EmpiricalConditional};
pub use generate::{
    generate, generate_colored_glyphs, generate_two_factor, DatasetKind, GenConfig,
};
pub use glyphs::{glyph_mask, palette, GLYPH_SIDE, PALETTE_SIZE};
pub use io::{load_dataset, save_dataset, DatasetMeta};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    features: Tensor<T>,
    labels: Vec<usize>,
    bias: Option<Vec<usize>>,
    aligned: Vec<bool>,
    classes: usize,
    origin: Option<GenConfig>,
}

impl<T: Scalar> LabeledDataset<T> {
    /// Builds a dataset and checks its invariants. When bias labels are
    /// present the `aligned` flags are derived from them.
    pub fn new(
        features: Tensor<T>,
        labels: Vec<usize>,
        bias: Option<Vec<usize>>,
        aligned: Option<Vec<bool>>,
        classes: usize,
    ) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::shape(
                "LabeledDataset",
                format!("features {:?}", features.shape()),
            ));
        }
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::shape(
                "LabeledDataset",
                format!("{} labels for {n} rows", labels.len()),
            ));
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        for &y in &labels {
            if y >= classes {
                return Err(Error::LabelOutOfRange { label: y, classes });
            }
        }
        let derived = match &bias {
            Some(b) => {
                if b.len() != n {
                    return Err(Error::shape(
                        "LabeledDataset",
                        format!("{} bias labels for {n} rows", b.len()),
                    ));
                }
                if let Some(&bad) = b.iter().find(|&&v| v >= classes) {
                    return Err(Error::LabelOutOfRange {
                        label: bad,
                        classes,
                    });
                }
                Some(
                    labels
                        .iter()
                        .zip(b)
                        .map(|(y, b)| y == b)
                        .collect::<Vec<_>>(),
                )
            }
            None => None,
        };
        let aligned = match (aligned, derived) {
            (Some(a), Some(d)) => {
                if a != d {
                    return Err(Error::InvalidConfig(
                        "aligned flags disagree with b == y".into(),
                    ));
                }
                a
            }
            (Some(a), None) => {
                if a.len() != n {
                    return Err(Error::shape(
                        "LabeledDataset",
                        format!("{} flags for {n} rows", a.len()),
                    ));
                }
                a
            }
            (None, Some(d)) => d,
            (None, None) => vec![true; n],
        };
        Ok(Self {
            features,
            labels,
            bias,
            aligned,
            classes,
            origin: None,
        })
    }

    pub(crate) fn with_origin(mut self, origin: GenConfig) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn bias(&self) -> Option<&[usize]> {
        self.bias.as_deref()
    }

    pub fn aligned(&self) -> &[bool] {
        &self.aligned
    }

    /// Generator configuration, for datasets produced by [`generate`].
    pub fn origin(&self) -> Option<&GenConfig> {
        self.origin.as_ref()
    }

    pub fn bc_count(&self) -> usize {
        self.aligned.iter().filter(|&&a| !a).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            bias: self
                .bias
                .as_ref()
                .map(|b| idx.iter().map(|&i| b[i]).collect()),
            aligned: idx.iter().map(|&i| self.aligned[i]).collect(),
            classes: self.classes,
            origin: self.origin.clone(),
        }
    }

    /// Converts features to another scalar type.
    pub fn cast<U: Scalar>(&self) -> LabeledDataset<U> {
        let data = self
            .features
            .data()
            .iter()
            .map(|x| U::lit(x.as_f64()))
            .collect();
        LabeledDataset {
            features: Tensor::new(self.features.shape().to_vec(), data).expect("same shape"),
            labels: self.labels.clone(),
            bias: self.bias.clone(),
            aligned: self.aligned.clone(),
            classes: self.classes,
            origin: self.origin.clone(),
        }
    }
}

/// Shuffled train/test index partition.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} not in (0,1)"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} leaves an empty part of {n} samples"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split<T: Scalar>(
    ds: &LabeledDataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let (tr, te) = split_indices(ds.len(), train_fraction, seed)?;
    Ok((ds.subset(&tr), ds.subset(&te)))
}
