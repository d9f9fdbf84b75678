use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{matmul_plain, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected ReLU network with layer sizes `[D, H.., C]`.
///
/// Parameters are stored interleaved as `W0, b0, W1, b1, ..` where `Wl` has
/// shape `[in, out]` (row-major) and `bl` has shape `[out]`. The same order
/// is used by [`MlpParams::to_flat`] and the checkpoint format.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    sizes: Vec<usize>,
    tensors: Vec<Tensor<T>>,
}

/// Tape handles for one registration of an [`MlpParams`].
#[derive(Clone, Debug)]
pub struct MlpVars {
    vars: Vec<Var>,
}

impl MlpVars {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradient of every parameter, in storage order.
    pub fn grads<T: Scalar>(&self, grads: &Gradients<T>, params: &MlpParams<T>) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .zip(&params.tensors)
            .map(|(&v, p)| grads.get_or_zeros(v, p))
            .collect()
    }
}

/// Logits plus the input of the final layer (`h` in `Wᵀh + b`).
#[derive(Clone, Copy, Debug)]
pub struct MlpOutput {
    pub logits: Var,
    pub penultimate: Var,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "invalid layer sizes {sizes:?}"
        )));
    }
    Ok(())
}

impl<T: Scalar> MlpParams<T> {
    /// He-normal weights, zero biases, seeded.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::lit(scale * z)
                })
                .collect();
            tensors.push(Tensor::matrix(fan_in, fan_out, data)?);
            tensors.push(Tensor::zeros(vec![fan_out]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            tensors,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let tensors = sizes
            .windows(2)
            .flat_map(|w| [Tensor::zeros(vec![w[0], w[1]]), Tensor::zeros(vec![w[1]])])
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            tensors,
        })
    }

    pub fn from_flat(sizes: &[usize], flat: &[T]) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        let total: usize = p.tensors.iter().map(Tensor::len).sum();
        if flat.len() != total {
            return Err(Error::shape(
                "MlpParams::from_flat",
                format!("{} values for {total} parameters", flat.len()),
            ));
        }
        let mut off = 0;
        for t in &mut p.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(p)
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn register(&self, tape: &mut Tape<T>) -> MlpVars {
        MlpVars {
            vars: self.tensors.iter().map(|t| tape.param(t.clone())).collect(),
        }
    }

    /// Logits and penultimate activations without recording a tape.
    pub fn forward_with_hidden(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::shape(
                "mlp_forward",
                format!("input {:?} for input dim {}", x.shape(), self.input_dim()),
            ));
        }
        let layers = self.sizes.len() - 1;
        let mut h = x.clone();
        for l in 0..layers {
            let w = &self.tensors[2 * l];
            let b = &self.tensors[2 * l + 1];
            let mut z = matmul_plain(&h, w);
            let m = z.cols();
            for row in z.data_mut().chunks_mut(m) {
                for (v, &bv) in row.iter_mut().zip(b.data()) {
                    *v = *v + bv;
                }
            }
            if l + 1 == layers {
                return Ok((z, h));
            }
            h = z.map(|v| if v > T::zero() { v } else { T::zero() });
        }
        unreachable!("loop returns on the last layer")
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_with_hidden(x)?.0)
    }
}

/// Records the forward pass of `vars` (registered from a parameter set with
/// layer sizes `sizes`) on `tape`.
pub fn mlp_forward<T: Scalar>(tape: &mut Tape<T>, vars: &MlpVars, x: Var) -> Result<MlpOutput> {
    let layers = vars.vars.len() / 2;
    let in_dim = tape.value(vars.vars[0]).rows();
    let xv = tape.value(x);
    if xv.shape().len() != 2 || xv.cols() != in_dim {
        return Err(Error::shape(
            "mlp_forward",
            format!("input {:?} for input dim {in_dim}", xv.shape()),
        ));
    }
    let mut h = x;
    for l in 0..layers {
        let z = tape.matmul(h, vars.vars[2 * l])?;
        let z = tape.add_row(z, vars.vars[2 * l + 1])?;
        if l + 1 == layers {
            return Ok(MlpOutput {
                logits: z,
                penultimate: h,
            });
        }
        h = tape.relu(z);
    }
    unreachable!("loop returns on the last layer")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let p = MlpParams::<f64>::zeros(&[4, 8, 5]).unwrap();
        let x = Tensor::matrix(2, 4, vec![1.0, -2.0, 3.0, 0.5, 0.0, 0.0, 7.0, 1.0]).unwrap();
        let logits = p.logits(&x).unwrap();
        for i in 0..2 {
            let probs = crate::classifier::softmax(logits.row(i));
            for q in probs {
                assert!((q - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_row_matches_batch_row() {
        let p = MlpParams::<f64>::init(&[3, 6, 6, 4], 2).unwrap();
        let x = Tensor::matrix(3, 3, vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.0, 0.0, 0.0, 1.0]).unwrap();
        let all = p.logits(&x).unwrap();
        for i in 0..3 {
            let one = p.logits(&x.select_rows(&[i])).unwrap();
            assert_eq!(one.row(0), all.row(i));
        }
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let p = MlpParams::<f64>::init(&[3, 5, 2], 9).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.3, -0.7, 1.1, 2.0, 0.0, -1.0]).unwrap();
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let xv = tape.constant(x.clone());
        let out = mlp_forward(&mut tape, &vars, xv).unwrap();
        let (logits, hidden) = p.forward_with_hidden(&x).unwrap();
        assert_eq!(tape.value(out.logits), &logits);
        assert_eq!(tape.value(out.penultimate), &hidden);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = MlpParams::<f64>::zeros(&[3, 2]).unwrap();
        assert!(p.logits(&Tensor::zeros(vec![1, 4])).is_err());
        assert!(MlpParams::<f64>::zeros(&[3]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let p = MlpParams::<f64>::init(&[2, 3, 2], 1).unwrap();
        let q = MlpParams::from_flat(p.sizes(), &p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(MlpParams::<f64>::from_flat(&[2, 2], &[0.0; 5]).is_err());
    }
}
