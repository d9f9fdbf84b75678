//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation of one forward pass as a node whose
//! parents precede it, so the node list is already in topological order.
//! [`Tape::backward`] walks it in reverse and returns the adjoint of every
//! node that depends on a trainable leaf. The tape itself is never mutated
//! by the reverse sweep; build a fresh tape for every forward pass.

use super::tensor::{matmul_into, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    /// `[n, m] + [m]`, bias broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var, T),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    /// `max(a, c)`; gradient flows only where `a > c`.
    ClampMin(Var, T),
    Sum(Var),
    /// `[n, m] -> [n]`
    SumCols(Var),
    /// `[n] -> [n, m]`
    RepeatCols(Var, usize),
    LogSoftmax(Var),
    /// `[n, c] -> [n]`, entry `(i, idx[i])`.
    Pick(Var, Vec<usize>),
    /// `[k, m] -> [idx.len(), m]` (or rank 1 `[k] -> [idx.len()]`).
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    /// `log N(z_i; μ_c, σ_c² I)` for every row `i` and class `c`; isotropic
    /// per-class scale given as `log σ_c`.
    GaussianLogDensity {
        z: Var,
        mean: Var,
        log_std: Var,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

/// Operation record of a single forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    adjoints: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the output w.r.t. `v`. Nodes that do not depend on any
    /// trainable leaf have no stored adjoint.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.adjoints.get(v.0).and_then(|a| a.as_ref())
    }

    /// Like [`Gradients::get`] but yields zeros shaped like `like` when the
    /// output did not depend on `v`.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape().to_vec()))
    }
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn rank2<T: Scalar>(op: &'static str, a: &Tensor<T>) -> Result<(usize, usize)> {
    if a.shape().len() != 2 {
        return Err(Error::shape(
            op,
            format!("expected rank 2, got {:?}", a.shape()),
        ));
    }
    Ok((a.shape()[0], a.shape()[1]))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf: its gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Non-trainable leaf (inputs, labels-derived weights).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::MatMul(a, b), out, ng))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, m) = rank2("add_row", self.value(a))?;
        let bv = self.value(bias);
        if bv.len() != m {
            return Err(Error::shape(
                "add_row",
                format!("bias len {} vs {m} columns", bv.len()),
            ));
        }
        let bias_data = bv.data().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..n {
            for (o, &b) in out.data_mut()[i * m..(i + 1) * m]
                .iter_mut()
                .zip(&bias_data)
            {
                *o = *o + b;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(Op::AddRow(a, bias), out, ng))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        same_shape(name, self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), f);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(op, out, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(op, out, ng)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            Op::Relu(a),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, T::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, T::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn clamp_min(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x.max(c), Op::ClampMin(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = crate::scalar::pairwise_sum(self.value(a).data());
        let ng = self.ng(a);
        self.push(Op::Sum(a), Tensor::scalar(s), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_usize_lossy(self.value(a).len());
        let s = self.sum(a);
        self.scale(s, T::one() / n)
    }

    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (n, m) = rank2("sum_cols", self.value(a))?;
        let d = self.value(a).data();
        let out: Vec<T> = (0..n)
            .map(|i| d[i * m..(i + 1) * m].iter().copied().sum())
            .collect();
        let ng = self.ng(a);
        Ok(self.push(Op::SumCols(a), Tensor::vector(out), ng))
    }

    pub fn repeat_cols(&mut self, a: Var, m: usize) -> Result<Var> {
        let v = self.value(a);
        if v.shape().len() != 1 {
            return Err(Error::shape(
                "repeat_cols",
                format!("expected rank 1, got {:?}", v.shape()),
            ));
        }
        let n = v.len();
        let data: Vec<T> = v
            .data()
            .iter()
            .flat_map(|&x| std::iter::repeat_n(x, m))
            .collect();
        let out = Tensor::matrix(n, m, data)?;
        let ng = self.ng(a);
        Ok(self.push(Op::RepeatCols(a, m), out, ng))
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (n, m) = rank2("log_softmax", self.value(a))?;
        let mut out = self.value(a).clone();
        for i in 0..n {
            let row = &mut out.data_mut()[i * m..(i + 1) * m];
            let lse = crate::scalar::log_sum_exp(row);
            for x in row.iter_mut() {
                *x = *x - lse;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Op::LogSoftmax(a), out, ng))
    }

    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (n, m) = rank2("pick", self.value(a))?;
        if idx.len() != n {
            return Err(Error::shape(
                "pick",
                format!("{} indices for {n} rows", idx.len()),
            ));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= m) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: m,
            });
        }
        let d = self.value(a).data();
        let out: Vec<T> = idx.iter().enumerate().map(|(i, &j)| d[i * m + j]).collect();
        let ng = self.ng(a);
        Ok(self.push(Op::Pick(a, idx.to_vec()), Tensor::vector(out), ng))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&j| j >= v.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} of {}", v.rows()),
            ));
        }
        let out = v.select_rows(idx);
        let ng = self.ng(a);
        Ok(self.push(Op::GatherRows(a, idx.to_vec()), out, ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (n, m) = rank2("slice_cols", self.value(a))?;
        if start >= end || end > m {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {m}")));
        }
        let w = end - start;
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(n * w);
        for i in 0..n {
            out.extend_from_slice(&d[i * m + start..i * m + end]);
        }
        let ng = self.ng(a);
        Ok(self.push(Op::SliceCols(a, start, end), Tensor::matrix(n, w, out)?, ng))
    }

    /// `out[i, c] = log N(z_i; mean_c, exp(log_std_c)² I)` with `z: [n, d]`,
    /// `mean: [C, d]`, `log_std: [C]`.
    pub fn gaussian_log_density(&mut self, z: Var, mean: Var, log_std: Var) -> Result<Var> {
        let (n, d) = rank2("gaussian_log_density", self.value(z))?;
        let (c, d2) = rank2("gaussian_log_density", self.value(mean))?;
        if d != d2 || self.value(log_std).len() != c {
            return Err(Error::shape(
                "gaussian_log_density",
                format!(
                    "z {:?}, mean {:?}, log_std {:?}",
                    self.value(z).shape(),
                    self.value(mean).shape(),
                    self.value(log_std).shape()
                ),
            ));
        }
        let zd = self.value(z).data();
        let md = self.value(mean).data();
        let ls = self.value(log_std).data();
        let half = T::lit(0.5);
        let dim = T::from_usize_lossy(d);
        let log_2pi = (T::lit(2.0) * T::PI()).ln();
        let mut out = vec![T::zero(); n * c];
        for i in 0..n {
            for k in 0..c {
                let inv_var = (-(ls[k] + ls[k])).exp();
                let mut sq = T::zero();
                for j in 0..d {
                    let diff = zd[i * d + j] - md[k * d + j];
                    sq = sq + diff * diff;
                }
                out[i * c + k] = -half * sq * inv_var - dim * ls[k] - half * dim * log_2pi;
            }
        }
        let ng = self.ng(z) || self.ng(mean) || self.ng(log_std);
        Ok(self.push(
            Op::GaussianLogDensity { z, mean, log_std },
            Tensor::matrix(n, c, out)?,
            ng,
        ))
    }

    /// Reverse sweep from a scalar `output`. Returns adjoints for every node
    /// that depends on a trainable leaf.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out_val = &self.nodes[output.0].value;
        if out_val.len() != 1 {
            return Err(Error::NonScalarOutput(out_val.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor::full(out_val.shape().to_vec(), T::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            if !g.all_finite() {
                return Err(Error::NonFinite(format!(
                    "adjoint of node {idx} ({:?})",
                    op_name(&node.op)
                )));
            }
            self.propagate(&node.op, &node.value, &g, &mut adj)?;
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn accumulate(&self, adj: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.ng(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn accumulate_with(&self, adj: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.ng(v) {
            return;
        }
        let slot = &mut adj[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape().to_vec()));
        }
        f(slot.as_mut().expect("initialised above").data_mut());
    }

    fn propagate(
        &self,
        op: &Op<T>,
        value: &Tensor<T>,
        g: &Tensor<T>,
        adj: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                self.accumulate_with(adj, *a, |out| {
                    matmul_nt_acc(g.data(), bv.data(), out, n, k, m)
                });
                self.accumulate_with(adj, *b, |out| {
                    matmul_tn_acc(av.data(), g.data(), out, n, k, m)
                });
            }
            Op::AddRow(a, bias) => {
                self.accumulate(adj, *a, g.clone());
                let m = g.cols();
                self.accumulate_with(adj, *bias, |out| {
                    for i in 0..g.rows() {
                        for (o, &x) in out.iter_mut().zip(&g.data()[i * m..(i + 1) * m]) {
                            *o = *o + x;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(adj, *a, g.zip_map(bv, |x, y| x * y));
                self.accumulate(adj, *b, g.zip_map(av, |x, y| x * y));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                self.accumulate(adj, *a, g.zip_map(bv, |x, y| x / y));
                // d(a/b)/db = -(a/b)/b
                let gb = g.zip_map(value, |x, q| x * q).zip_map(bv, |x, y| -x / y);
                self.accumulate(adj, *b, gb);
            }
            Op::Scale(a, c) => self.accumulate(adj, *a, g.map(|x| x * *c)),
            Op::AddScalar(a, _) => self.accumulate(adj, *a, g.clone()),
            Op::Relu(a) => {
                let av = self.value(*a);
                self.accumulate(
                    adj,
                    *a,
                    g.zip_map(av, |x, y| if y > T::zero() { x } else { T::zero() }),
                );
            }
            Op::Exp(a) => self.accumulate(adj, *a, g.zip_map(value, |x, e| x * e)),
            Op::Ln(a) => {
                let av = self.value(*a);
                self.accumulate(adj, *a, g.zip_map(av, |x, y| x / y));
            }
            Op::Square(a) => {
                let av = self.value(*a);
                let two = T::lit(2.0);
                self.accumulate(adj, *a, g.zip_map(av, |x, y| two * x * y));
            }
            Op::ClampMin(a, c) => {
                let av = self.value(*a);
                self.accumulate(
                    adj,
                    *a,
                    g.zip_map(av, |x, y| if y > *c { x } else { T::zero() }),
                );
            }
            Op::Sum(a) => {
                let s = g.item();
                self.accumulate(adj, *a, Tensor::full(self.value(*a).shape().to_vec(), s));
            }
            Op::SumCols(a) => {
                let m = self.value(*a).cols();
                self.accumulate_with(adj, *a, |out| {
                    for (i, &gi) in g.data().iter().enumerate() {
                        for o in &mut out[i * m..(i + 1) * m] {
                            *o = *o + gi;
                        }
                    }
                });
            }
            Op::RepeatCols(a, m) => {
                let m = *m;
                self.accumulate_with(adj, *a, |out| {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = *o + g.data()[i * m..(i + 1) * m].iter().copied().sum::<T>();
                    }
                });
            }
            Op::LogSoftmax(a) => {
                // dx_j = g_j - softmax_j * Σ_k g_k
                let (n, m) = (value.rows(), value.cols());
                self.accumulate_with(adj, *a, |out| {
                    for i in 0..n {
                        let gr = &g.data()[i * m..(i + 1) * m];
                        let lr = &value.data()[i * m..(i + 1) * m];
                        let gs: T = gr.iter().copied().sum();
                        for j in 0..m {
                            out[i * m + j] = out[i * m + j] + gr[j] - lr[j].exp() * gs;
                        }
                    }
                });
            }
            Op::Pick(a, idx) => {
                let m = self.value(*a).cols();
                self.accumulate_with(adj, *a, |out| {
                    for (i, &j) in idx.iter().enumerate() {
                        out[i * m + j] = out[i * m + j] + g.data()[i];
                    }
                });
            }
            Op::GatherRows(a, idx) => {
                let m = self.value(*a).cols();
                self.accumulate_with(adj, *a, |out| {
                    for (i, &r) in idx.iter().enumerate() {
                        for j in 0..m {
                            out[r * m + j] = out[r * m + j] + g.data()[i * m + j];
                        }
                    }
                });
            }
            Op::SliceCols(a, start, end) => {
                let m = self.value(*a).cols();
                let w = end - start;
                self.accumulate_with(adj, *a, |out| {
                    for i in 0..g.rows() {
                        for j in 0..w {
                            out[i * m + start + j] = out[i * m + start + j] + g.data()[i * w + j];
                        }
                    }
                });
            }
            Op::GaussianLogDensity { z, mean, log_std } => {
                let (zv, mv, lv) = (self.value(*z), self.value(*mean), self.value(*log_std));
                let (n, d) = (zv.rows(), zv.cols());
                let c = mv.rows();
                let dim = T::from_usize_lossy(d);
                let mut gz = vec![T::zero(); n * d];
                let mut gm = vec![T::zero(); c * d];
                let mut gl = vec![T::zero(); c];
                for i in 0..n {
                    for k in 0..c {
                        let gik = g.data()[i * c + k];
                        if gik == T::zero() {
                            continue;
                        }
                        let inv_var = (-(lv.data()[k] + lv.data()[k])).exp();
                        let mut sq = T::zero();
                        for j in 0..d {
                            let diff = zv.data()[i * d + j] - mv.data()[k * d + j];
                            sq = sq + diff * diff;
                            let t = gik * diff * inv_var;
                            gz[i * d + j] = gz[i * d + j] - t;
                            gm[k * d + j] = gm[k * d + j] + t;
                        }
                        gl[k] = gl[k] + gik * (sq * inv_var - dim);
                    }
                }
                let zs = zv.shape().to_vec();
                let ms = mv.shape().to_vec();
                let ls = lv.shape().to_vec();
                self.accumulate(adj, *z, Tensor::new(zs, gz)?);
                self.accumulate(adj, *mean, Tensor::new(ms, gm)?);
                self.accumulate(adj, *log_std, Tensor::new(ls, gl)?);
            }
        }
        Ok(())
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::AddRow(..) => "add_row",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Relu(..) => "relu",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Square(..) => "square",
        Op::ClampMin(..) => "clamp_min",
        Op::Sum(..) => "sum",
        Op::SumCols(..) => "sum_cols",
        Op::RepeatCols(..) => "repeat_cols",
        Op::LogSoftmax(..) => "log_softmax",
        Op::Pick(..) => "pick",
        Op::GatherRows(..) => "gather_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::GaussianLogDensity { .. } => "gaussian_log_density",
    }
}

/// Plain (non-recording) matrix product used by inference paths.
pub(crate) fn matmul_plain<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![T::zero(); n * m];
    matmul_into(a.data(), b.data(), &mut out, n, k, m);
    Tensor::matrix(n, m, out).expect("matmul shapes checked by caller")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn product_symmetry() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(2.0));
        let y = t.param(Tensor::scalar(5.0));
        let f = t.mul(x, y).unwrap();
        let g = t.backward(f).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 5.0);
        assert_eq!(g.get(y).unwrap().item(), 2.0);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        let y = t.square(x);
        assert!(matches!(t.backward(y), Err(Error::NonScalarOutput(_))));
    }

    #[test]
    fn nan_in_reverse_sweep_is_reported() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(0.0));
        let l = t.ln(x); // -inf, derivative 1/0
        let y = t.scale(l, 0.0);
        let s = t.sum(y);
        assert!(matches!(t.backward(s), Err(Error::NonFinite(_))));
    }

    #[test]
    fn backward_leaves_values_untouched() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let r = t.relu(x);
        let s = t.sum(r);
        let before: Vec<f64> = (0..t.len())
            .flat_map(|i| t.value(Var(i)).data().to_vec())
            .collect();
        t.backward(s).unwrap();
        t.backward(s).unwrap();
        let after: Vec<f64> = (0..t.len())
            .flat_map(|i| t.value(Var(i)).data().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn constants_get_no_adjoint() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::scalar(4.0));
        let w = t.param(Tensor::scalar(0.5));
        let y = t.mul(x, w).unwrap();
        let g = t.backward(y).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.get(w).unwrap().item(), 4.0);
    }

    #[test]
    fn works_in_single_precision() {
        let mut t = Tape::<f32>::new();
        let x = t.param(Tensor::scalar(1.5_f32));
        let e = t.exp(x);
        let g = t.backward(e).unwrap();
        assert!((g.get(x).unwrap().item() - 1.5_f32.exp()).abs() < 1e-6);
    }
}
