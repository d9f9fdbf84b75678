use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::glyphs::{glyph_mask, palette, GLYPH_SIDE, PALETTE_SIZE};
use super::LabeledDataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// `x = [onehot(y) + noise_u, onehot(b) + noise_b]`, `D = 2C`.
    TwoFactor,
    /// 16×16 RGB glyph of class `y` on a background colored by `b`, `D = 768`.
    ColoredGlyphs,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::TwoFactor => "two-factor",
            DatasetKind::ColoredGlyphs => "colored-glyphs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub classes: usize,
    pub samples: usize,
    /// Probability that a sample is bias-conflicting.
    pub bc_ratio: f64,
    #[serde(default = "default_sigma_u")]
    pub sigma_u: f64,
    #[serde(default = "default_sigma_b")]
    pub sigma_b: f64,
    pub seed: u64,
    pub kind: DatasetKind,
}

fn default_sigma_u() -> f64 {
    0.5
}
fn default_sigma_b() -> f64 {
    0.1
}

impl GenConfig {
    pub fn two_factor(classes: usize, samples: usize, bc_ratio: f64, seed: u64) -> Self {
        Self {
            classes,
            samples,
            bc_ratio,
            sigma_u: default_sigma_u(),
            sigma_b: default_sigma_b(),
            seed,
            kind: DatasetKind::TwoFactor,
        }
    }

    pub fn colored_glyphs(classes: usize, samples: usize, bc_ratio: f64, seed: u64) -> Self {
        Self {
            kind: DatasetKind::ColoredGlyphs,
            ..Self::two_factor(classes, samples, bc_ratio, seed)
        }
    }

    /// Same generator with `b` independent of `y`: a conflict rate of
    /// `(C−1)/C` makes `b` uniform over all classes.
    pub fn unbiased(&self, samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            bc_ratio: (self.classes - 1) as f64 / self.classes as f64,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if !(self.bc_ratio > 0.0 && self.bc_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bc_ratio {} not in (0,1)",
                self.bc_ratio
            )));
        }
        if !(self.sigma_u >= 0.0 && self.sigma_b >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise standard deviations must be >= 0".into(),
            ));
        }
        if self.kind == DatasetKind::ColoredGlyphs && self.classes > PALETTE_SIZE {
            return Err(Error::InvalidConfig(format!(
                "colored glyphs support at most {PALETTE_SIZE} classes, got {}",
                self.classes
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DatasetKind::TwoFactor => 2 * self.classes,
            DatasetKind::ColoredGlyphs => GLYPH_SIDE * GLYPH_SIDE * 3,
        }
    }

    /// Exact `p(y=c | b=k)` of the generator as a row-major `C×C` table
    /// (row `c`, column `k`): `1−ρ` on the diagonal, `ρ/(C−1)` elsewhere.
    pub fn analytic_p_y_given_b(&self) -> Vec<f64> {
        let c = self.classes;
        let off = self.bc_ratio / (c - 1) as f64;
        let mut t = vec![off; c * c];
        for k in 0..c {
            t[k * c + k] = 1.0 - self.bc_ratio;
        }
        t
    }
}

/// Draws `(y, b)` for every sample: `y` uniform, `b = y` with probability
/// `1−ρ`, otherwise uniform over the other classes.
fn draw_labels(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let c = cfg.classes;
    let mut ys = Vec::with_capacity(cfg.samples);
    let mut bs = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let y = rng.random_range(0..c);
        let conflict = rng.random::<f64>() < cfg.bc_ratio;
        let b = if conflict {
            let k = rng.random_range(0..c - 1);
            if k >= y {
                k + 1
            } else {
                k
            }
        } else {
            y
        };
        ys.push(y);
        bs.push(b);
    }
    (ys, bs)
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

pub fn generate_two_factor<T: Scalar>(cfg: &GenConfig) -> Result<LabeledDataset<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ys, bs) = draw_labels(cfg, &mut rng);
    let c = cfg.classes;
    let d = 2 * c;
    let mut x = Vec::with_capacity(cfg.samples * d);
    for (&y, &b) in ys.iter().zip(&bs) {
        for j in 0..c {
            let base = if j == y { 1.0 } else { 0.0 };
            x.push(T::lit(base + normal(&mut rng, cfg.sigma_u)));
        }
        for j in 0..c {
            let base = if j == b { 1.0 } else { 0.0 };
            x.push(T::lit(base + normal(&mut rng, cfg.sigma_b)));
        }
    }
    let features = Tensor::matrix(cfg.samples, d, x)?;
    Ok(LabeledDataset::new(features, ys, Some(bs), None, c)?.with_origin(cfg.clone()))
}

pub fn generate_colored_glyphs<T: Scalar>(cfg: &GenConfig) -> Result<LabeledDataset<T>> {
    let cfg_checked = GenConfig {
        kind: DatasetKind::ColoredGlyphs,
        ..cfg.clone()
    };
    cfg_checked.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ys, bs) = draw_labels(cfg, &mut rng);
    let colors = palette();
    let masks: Vec<_> = (0..cfg.classes).map(glyph_mask).collect();
    let d = GLYPH_SIDE * GLYPH_SIDE * 3;
    let mut x = Vec::with_capacity(cfg.samples * d);
    for (&y, &b) in ys.iter().zip(&bs) {
        let mask = &masks[y];
        for row in mask {
            for &ink in row {
                for ch in 0..3 {
                    let v = if ink {
                        1.0 + normal(&mut rng, cfg.sigma_u)
                    } else {
                        colors[b][ch] + normal(&mut rng, cfg.sigma_b)
                    };
                    x.push(T::lit(v.clamp(0.0, 1.0)));
                }
            }
        }
    }
    let features = Tensor::matrix(cfg.samples, d, x)?;
    Ok(LabeledDataset::new(features, ys, Some(bs), None, cfg.classes)?.with_origin(cfg_checked))
}

/// Dispatches on `cfg.kind`.
pub fn generate<T: Scalar>(cfg: &GenConfig) -> Result<LabeledDataset<T>> {
    match cfg.kind {
        DatasetKind::TwoFactor => generate_two_factor(cfg),
        DatasetKind::ColoredGlyphs => generate_colored_glyphs(cfg),
    }
}
