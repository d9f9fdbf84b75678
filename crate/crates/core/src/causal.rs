//! Exact enumeration over small discrete models: backdoor adjustment, the
//! interventional log-likelihood and its loss-weighting upper bound, and the
//! expected-gradient equivalence of loss weighting and weighted sampling.
//!
//! Tables are row-major: `p_ub[u][b]`, `p_y_given_ub[u][b][y]`,
//! `q[u][b][y]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::autodiff::{Tape, Tensor};
use crate::classifier::{mlp_forward, softmax, weighted_mean_on_tape, xent_on_tape, MlpParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest supported size of each of `U`, `B` and `Y`.
pub const MAX_CARDINALITY: usize = 8;

const TABLE_TOL: f64 = 1e-12;

/// Observational joint over class attribute `u`, bias `b` and label `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint<T> {
    nu: usize,
    nb: usize,
    ny: usize,
    p_ub: Vec<T>,
    p_y_given_ub: Vec<T>,
}

fn check_size(what: &str, n: usize) -> Result<()> {
    if n == 0 || n > MAX_CARDINALITY {
        return Err(Error::InvalidTable(format!(
            "{what} has {n} values, expected 1..={MAX_CARDINALITY}"
        )));
    }
    Ok(())
}

fn check_slices<T: Scalar>(
    what: &str,
    t: &[T],
    width: usize,
    strictly_positive: bool,
) -> Result<()> {
    for (k, s) in t.chunks(width).enumerate() {
        if s.iter()
            .any(|&v| !(v >= T::zero()) || (strictly_positive && !(v > T::zero())))
        {
            return Err(Error::InvalidTable(format!(
                "{what} slice {k} has an invalid entry"
            )));
        }
        let total: T = s.iter().copied().sum();
        if (total.as_f64() - 1.0).abs() > TABLE_TOL * width as f64 {
            return Err(Error::InvalidTable(format!(
                "{what} slice {k} sums to {total}"
            )));
        }
    }
    Ok(())
}

impl<T: Scalar> DiscreteJoint<T> {
    /// `y = u` deterministically; needs `|Y| = |U|`.
    pub fn new(nu: usize, nb: usize, p_ub: Vec<T>) -> Result<Self> {
        let mut p_y = vec![T::zero(); nu * nb * nu];
        for u in 0..nu {
            for b in 0..nb {
                p_y[(u * nb + b) * nu + u] = T::one();
            }
        }
        Self::with_label_model(nu, nb, nu, p_ub, p_y)
    }

    pub fn with_label_model(
        nu: usize,
        nb: usize,
        ny: usize,
        p_ub: Vec<T>,
        p_y_given_ub: Vec<T>,
    ) -> Result<Self> {
        check_size("U", nu)?;
        check_size("B", nb)?;
        check_size("Y", ny)?;
        if p_ub.len() != nu * nb || p_y_given_ub.len() != nu * nb * ny {
            return Err(Error::InvalidTable(format!(
                "tables of {} and {} entries for sizes ({nu}, {nb}, {ny})",
                p_ub.len(),
                p_y_given_ub.len()
            )));
        }
        check_slices("p(u,b)", &p_ub, nu * nb, false)?;
        check_slices("p(y|u,b)", &p_y_given_ub, ny, false)?;
        Ok(Self {
            nu,
            nb,
            ny,
            p_ub,
            p_y_given_ub,
        })
    }

    /// Strictly positive random joint with `y = u`.
    pub fn random(nu: usize, nb: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(nu, nb, random_simplex(&mut rng, nu * nb))
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.nu, self.nb, self.ny)
    }

    pub fn p_ub(&self, u: usize, b: usize) -> T {
        self.p_ub[u * self.nb + b]
    }

    pub fn p_y_given_ub(&self, u: usize, b: usize, y: usize) -> T {
        self.p_y_given_ub[(u * self.nb + b) * self.ny + y]
    }

    pub fn p_b(&self) -> Vec<T> {
        (0..self.nb)
            .map(|b| (0..self.nu).map(|u| self.p_ub(u, b)).sum())
            .collect()
    }

    pub fn p_u(&self) -> Vec<T> {
        (0..self.nu)
            .map(|u| (0..self.nb).map(|b| self.p_ub(u, b)).sum())
            .collect()
    }

    /// Same model with bias values relabelled by `perm` (`new b = perm[old b]`).
    pub fn permute_bias(&self, perm: &[usize]) -> Self {
        let mut p_ub = vec![T::zero(); self.p_ub.len()];
        let mut p_y = vec![T::zero(); self.p_y_given_ub.len()];
        for u in 0..self.nu {
            for b in 0..self.nb {
                p_ub[u * self.nb + perm[b]] = self.p_ub(u, b);
                for y in 0..self.ny {
                    p_y[(u * self.nb + perm[b]) * self.ny + y] = self.p_y_given_ub(u, b, y);
                }
            }
        }
        Self {
            p_ub,
            p_y_given_ub: p_y,
            ..self.clone()
        }
    }
}

fn random_simplex<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e + 1e-3
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / s)).collect()
}

/// Model probabilities `q(y | u, b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierTable<T> {
    nu: usize,
    nb: usize,
    ny: usize,
    q: Vec<T>,
}

impl<T: Scalar> ClassifierTable<T> {
    pub fn new(nu: usize, nb: usize, ny: usize, q: Vec<T>) -> Result<Self> {
        check_size("U", nu)?;
        check_size("B", nb)?;
        check_size("Y", ny)?;
        if q.len() != nu * nb * ny {
            return Err(Error::InvalidTable(format!(
                "classifier table of {} entries",
                q.len()
            )));
        }
        check_slices("q(y|u,b)", &q, ny, true)?;
        Ok(Self { nu, nb, ny, q })
    }

    /// Random table; with `b_invariant` every `b` shares the slice of `b = 0`.
    pub fn random(nu: usize, nb: usize, ny: usize, b_invariant: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = Vec::with_capacity(nu * nb * ny);
        for _ in 0..nu {
            let shared: Vec<T> = random_simplex(&mut rng, ny);
            for _ in 0..nb {
                if b_invariant {
                    q.extend_from_slice(&shared);
                } else {
                    q.extend(random_simplex::<T>(&mut rng, ny));
                }
            }
        }
        Self::new(nu, nb, ny, q)
    }

    /// Softmax outputs of `params` on `onehot(u) ‖ onehot(b)`.
    pub fn from_mlp(params: &MlpParams<T>, nu: usize, nb: usize) -> Result<Self> {
        let x = cell_inputs(nu, nb)?;
        let logits = params.logits(&x)?;
        let ny = logits.cols();
        let q = (0..nu * nb).flat_map(|r| softmax(logits.row(r))).collect();
        Self::new(nu, nb, ny, q)
    }

    pub fn get(&self, u: usize, b: usize, y: usize) -> T {
        self.q[(u * self.nb + b) * self.ny + y]
    }

    pub fn permute_bias(&self, perm: &[usize]) -> Self {
        let mut q = vec![T::zero(); self.q.len()];
        for u in 0..self.nu {
            for b in 0..self.nb {
                for y in 0..self.ny {
                    q[(u * self.nb + perm[b]) * self.ny + y] = self.get(u, b, y);
                }
            }
        }
        Self { q, ..self.clone() }
    }

    /// Largest change of any `q(y|u,·)` across bias values.
    pub fn bias_variation(&self) -> T {
        let mut worst = T::zero();
        for u in 0..self.nu {
            for y in 0..self.ny {
                for b in 1..self.nb {
                    worst = worst.max((self.get(u, b, y) - self.get(u, 0, y)).abs());
                }
            }
        }
        worst
    }
}

/// One row per `(u, b)` cell, `onehot(u) ‖ onehot(b)`.
pub fn cell_inputs<T: Scalar>(nu: usize, nb: usize) -> Result<Tensor<T>> {
    let d = nu + nb;
    let mut x = vec![T::zero(); nu * nb * d];
    for u in 0..nu {
        for b in 0..nb {
            let r = u * nb + b;
            x[r * d + u] = T::one();
            x[r * d + nu + b] = T::one();
        }
    }
    Tensor::matrix(nu * nb, d, x)
}

fn check_compatible<T: Scalar>(j: &DiscreteJoint<T>, q: &ClassifierTable<T>) -> Result<()> {
    if j.sizes() != (q.nu, q.nb, q.ny) {
        return Err(Error::InvalidTable(format!(
            "joint sizes {:?} vs classifier sizes {:?}",
            j.sizes(),
            (q.nu, q.nb, q.ny)
        )));
    }
    Ok(())
}

/// `p(u | b)` as a `|U|×|B|` table.
pub fn conditional_u_given_b<T: Scalar>(j: &DiscreteJoint<T>) -> Result<Vec<T>> {
    let pb = j.p_b();
    if let Some(b) = pb.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::Positivity(format!("p(b={b}) = 0")));
    }
    let mut out = Vec::with_capacity(j.nu * j.nb);
    for u in 0..j.nu {
        for (b, &p) in pb.iter().enumerate() {
            out.push(j.p_ub(u, b) / p);
        }
    }
    Ok(out)
}

fn positive_propensity<T: Scalar>(j: &DiscreteJoint<T>) -> Result<Vec<T>> {
    let p = conditional_u_given_b(j)?;
    if let Some(k) = p.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::Positivity(format!(
            "p(u={} | b={}) = 0",
            k / j.nb,
            k % j.nb
        )));
    }
    Ok(p)
}

/// Backdoor adjustment `p(y | do(u)) = Σ_b p(b) q(y|u,b)`, as `|U|×|Y|`.
pub fn interventional<T: Scalar>(j: &DiscreteJoint<T>, q: &ClassifierTable<T>) -> Result<Vec<T>> {
    check_compatible(j, q)?;
    positive_propensity(j)?;
    let pb = j.p_b();
    let mut out = Vec::with_capacity(j.nu * j.ny);
    for u in 0..j.nu {
        for y in 0..j.ny {
            out.push((0..j.nb).map(|b| pb[b] * q.get(u, b, y)).sum());
        }
    }
    Ok(out)
}

/// The inverse-propensity form `Σ_b p(u,b) q(y|u,b) / p(u|b)`, summed bias
/// value by bias value.
pub fn interventional_ipw<T: Scalar>(
    j: &DiscreteJoint<T>,
    q: &ClassifierTable<T>,
) -> Result<Vec<T>> {
    check_compatible(j, q)?;
    let prop = positive_propensity(j)?;
    let mut out = vec![T::zero(); j.nu * j.ny];
    for b in (0..j.nb).rev() {
        for u in 0..j.nu {
            let w = j.p_ub(u, b) / prop[u * j.nb + b];
            for y in 0..j.ny {
                out[u * j.ny + y] = out[u * j.ny + y] + w * q.get(u, b, y);
            }
        }
    }
    Ok(out)
}

/// `E_{p(u,b,y)}[−log p(y | do(u))]`.
pub fn nill<T: Scalar>(j: &DiscreteJoint<T>, q: &ClassifierTable<T>) -> Result<T> {
    let pdo = interventional(j, q)?;
    let mut terms = Vec::new();
    for u in 0..j.nu {
        for b in 0..j.nb {
            for y in 0..j.ny {
                let mass = j.p_ub(u, b) * j.p_y_given_ub(u, b, y);
                if mass == T::zero() {
                    continue;
                }
                let p = pdo[u * j.ny + y];
                if !(p > T::zero()) {
                    return Err(Error::Positivity(format!("p(y={y} | do(u={u})) = 0")));
                }
                terms.push(-mass * p.ln());
            }
        }
    }
    Ok(terms.into_iter().sum())
}

fn weighted_xent<T: Scalar>(
    j: &DiscreteJoint<T>,
    q: &ClassifierTable<T>,
    stabilized: bool,
) -> Result<T> {
    check_compatible(j, q)?;
    let prop = positive_propensity(j)?;
    let pu = j.p_u();
    let mut terms = Vec::new();
    for u in 0..j.nu {
        for b in 0..j.nb {
            let mut w = j.p_ub(u, b) / prop[u * j.nb + b];
            if stabilized {
                w = w * pu[u];
            }
            for y in 0..j.ny {
                let py = j.p_y_given_ub(u, b, y);
                if py > T::zero() {
                    terms.push(-w * py * q.get(u, b, y).ln());
                }
            }
        }
    }
    Ok(terms.into_iter().sum())
}

/// Loss weighting with stabilized weights `p(u)/p(u|b)`:
/// `E_{p(u,b,y)}[p(u) · (−log q(y|u,b)) / p(u|b)]`. This is the Jensen upper
/// bound of [`nill`], tight when `q` ignores `b`.
pub fn lw_loss_exact<T: Scalar>(j: &DiscreteJoint<T>, q: &ClassifierTable<T>) -> Result<T> {
    weighted_xent(j, q, true)
}

/// Loss weighting with the plain weights `1/p(u|b)`.
pub fn lw_loss_unstabilized<T: Scalar>(j: &DiscreteJoint<T>, q: &ClassifierTable<T>) -> Result<T> {
    weighted_xent(j, q, false)
}

/// Second enumeration order for [`lw_loss_exact`]: `Σ_b p(b) Σ_u p(u) Σ_y …`.
pub fn lw_loss_by_bias<T: Scalar>(j: &DiscreteJoint<T>, q: &ClassifierTable<T>) -> Result<T> {
    check_compatible(j, q)?;
    positive_propensity(j)?;
    let pb = j.p_b();
    let pu = j.p_u();
    let mut total = T::zero();
    for (b, &p_b) in pb.iter().enumerate() {
        let mut inner = T::zero();
        for (u, &p_u) in pu.iter().enumerate() {
            let row: T = (0..j.ny)
                .filter(|&y| j.p_y_given_ub(u, b, y) > T::zero())
                .map(|y| -j.p_y_given_ub(u, b, y) * q.get(u, b, y).ln())
                .sum();
            inner = inner + p_u * row;
        }
        total = total + p_b * inner;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub nill: f64,
    pub lw: f64,
    pub lw_unstabilized: f64,
    /// `lw − nill`
    pub gap: f64,
    pub holds: bool,
    pub bias_variation: f64,
}

pub fn verify_bound<T: Scalar>(
    j: &DiscreteJoint<T>,
    q: &ClassifierTable<T>,
) -> Result<BoundReport> {
    let n = nill(j, q)?.as_f64();
    let lw = lw_loss_exact(j, q)?.as_f64();
    Ok(BoundReport {
        nill: n,
        lw,
        lw_unstabilized: lw_loss_unstabilized(j, q)?.as_f64(),
        gap: lw - n,
        holds: n <= lw + 1e-9,
        bias_variation: q.bias_variation().as_f64(),
    })
}

/// Flat gradient of `Σ_y p(y|u,b) · (−log q_θ(y | x_ub))` for one cell.
fn cell_gradient<T: Scalar>(params: &MlpParams<T>, x: &[T], label_probs: &[T]) -> Result<Vec<T>> {
    let ny = label_probs.len();
    let mut rows = Vec::with_capacity(ny * x.len());
    for _ in 0..ny {
        rows.extend_from_slice(x);
    }
    let xb = Tensor::matrix(ny, x.len(), rows)?;
    let labels: Vec<usize> = (0..ny).collect();
    let n = T::from_usize_lossy(ny);
    let w: Vec<T> = label_probs.iter().map(|&p| p * n).collect();
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let xv = tape.constant(xb);
    let out = mlp_forward(&mut tape, &vars, xv)?;
    let per = xent_on_tape(&mut tape, out.logits, &labels)?;
    let total = weighted_mean_on_tape(&mut tape, per, &w)?;
    let g = tape.backward(total)?;
    Ok(vars
        .grads(&g, params)
        .into_iter()
        .flat_map(|t| t.into_data())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// `‖G_LW − |U| · G_WS‖₂`
    pub discrepancy: f64,
    pub lw_norm: f64,
    /// Normaliser `Σ_{u,b} p(u,b)/p(u|b)` of the resampling distribution.
    pub normalizer: f64,
}

/// Expected gradient of loss weighting with `1/p(u|b)` against that of
/// sampling cells in proportion to `p(u,b)/p(u|b)`. The two differ by the
/// constant `|U|`, the normaliser of the resampling distribution.
pub fn verify_lw_ws_equivalence<T: Scalar>(
    j: &DiscreteJoint<T>,
    params: &MlpParams<T>,
) -> Result<EquivalenceReport> {
    let (nu, nb, ny) = j.sizes();
    if params.input_dim() != nu + nb || params.output_dim() != ny {
        return Err(Error::shape(
            "verify_lw_ws_equivalence",
            format!(
                "model {:?} for cells ({nu}, {nb}) and {ny} labels",
                params.sizes()
            ),
        ));
    }
    let prop = positive_propensity(j)?;
    let x = cell_inputs::<T>(nu, nb)?;
    let grads: Vec<Vec<T>> = (0..nu * nb)
        .map(|r| {
            let (u, b) = (r / nb, r % nb);
            let py: Vec<T> = (0..ny).map(|y| j.p_y_given_ub(u, b, y)).collect();
            cell_gradient(params, x.row(r), &py)
        })
        .collect::<Result<_>>()?;
    let dim = grads[0].len();
    let mut lw = vec![T::zero(); dim];
    let mut z = T::zero();
    for (r, g) in grads.iter().enumerate() {
        let w = j.p_ub(r / nb, r % nb) / prop[r];
        z = z + j.p_ub(r / nb, r % nb) * (T::one() / prop[r]);
        for (acc, &v) in lw.iter_mut().zip(g) {
            *acc = *acc + w * v;
        }
    }
    // Resampling distribution, enumerated bias-major: r(u,b) = p(b)/|U|.
    let pb = j.p_b();
    let mut ws = vec![T::zero(); dim];
    let nu_t = T::from_usize_lossy(nu);
    for (b, &p_b) in pb.iter().enumerate() {
        for u in 0..nu {
            let r = p_b / nu_t;
            for (acc, &v) in ws.iter_mut().zip(&grads[u * nb + b]) {
                *acc = *acc + r * v;
            }
        }
    }
    let disc: T = lw
        .iter()
        .zip(&ws)
        .map(|(&a, &b)| (a - nu_t * b) * (a - nu_t * b))
        .sum();
    let norm: T = lw.iter().map(|&a| a * a).sum();
    Ok(EquivalenceReport {
        discrepancy: disc.sqrt().as_f64(),
        lw_norm: norm.sqrt().as_f64(),
        normalizer: z.as_f64(),
    })
}
