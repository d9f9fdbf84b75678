//! First-order optimizers. Both follow the conventional coupled-L2 form: the
//! weight-decay term is added to the gradient before the moment updates.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Optimizer choice and hyperparameters, as stored in configs and checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        weight_decay: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
        }
    }

    pub fn sgd(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        OptimizerConfig::Sgd {
            lr,
            momentum,
            weight_decay,
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => *lr,
        }
    }

    pub fn build<T: Scalar>(&self) -> Optimizer<T> {
        match *self {
            OptimizerConfig::Sgd {
                lr,
                momentum,
                weight_decay,
            } => Optimizer::Sgd(Sgd::new(T::lit(lr), T::lit(momentum), T::lit(weight_decay))),
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => Optimizer::Adam(Adam {
                lr: T::lit(lr),
                beta1: T::lit(beta1),
                beta2: T::lit(beta2),
                eps: T::lit(eps),
                weight_decay: T::lit(weight_decay),
                m: Vec::new(),
                v: Vec::new(),
                step: 0,
            }),
        }
    }
}

fn check_shapes<T: Scalar>(params: &[Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "optimizer step",
            format!("{} params vs {} grads", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "optimizer step",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    Ok(())
}

fn init_buffers<T: Scalar>(buf: &mut Vec<Tensor<T>>, params: &[Tensor<T>]) -> Result<()> {
    if buf.is_empty() {
        *buf = params
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
    } else if buf.len() != params.len()
        || buf.iter().zip(params).any(|(b, p)| b.shape() != p.shape())
    {
        return Err(Error::shape(
            "optimizer state",
            "parameter set changed between steps",
        ));
    }
    Ok(())
}

/// SGD with heavy-ball momentum: `buf ← μ·buf + (g + λ·p)`, `p ← p − lr·buf`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    pub weight_decay: T,
    buffers: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: T, momentum: T, weight_decay: T) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            buffers: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_shapes(params, grads)?;
        init_buffers(&mut self.buffers, params)?;
        let first = self.step == 0;
        self.step += 1;
        for ((p, g), buf) in params.iter_mut().zip(grads).zip(&mut self.buffers) {
            for ((pv, &gv), bv) in p.data_mut().iter_mut().zip(g.data()).zip(buf.data_mut()) {
                let d = gv + self.weight_decay * *pv;
                *bv = if first { d } else { self.momentum * *bv + d };
                *pv = *pv - self.lr * *bv;
            }
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8 and no weight decay.
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(default_beta1()),
            beta2: T::lit(default_beta2()),
            eps: T::lit(default_eps()),
            weight_decay: T::zero(),
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_shapes(params, grads)?;
        init_buffers(&mut self.m, params)?;
        init_buffers(&mut self.v, params)?;
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let one = T::one();
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let d = gv + self.weight_decay * *pv;
                *mv = self.beta1 * *mv + (one - self.beta1) * d;
                *vv = self.beta2 * *vv + (one - self.beta2) * d * d;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Optimizer<T> {
    Sgd(Sgd<T>),
    Adam(Adam<T>),
}

impl<T: Scalar> Optimizer<T> {
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads),
            Optimizer::Adam(o) => o.step(params, grads),
        }
    }

    pub fn steps(&self) -> u64 {
        match self {
            Optimizer::Sgd(o) => o.steps(),
            Optimizer::Adam(o) => o.steps(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::scalar(x)]
    }

    #[test]
    fn sgd_single_step() {
        let mut o = Sgd::new(0.1, 0.0, 0.0);
        let mut p = s(0.0);
        o.step(&mut p, &s(1.0)).unwrap();
        assert!((p[0].item() + 0.1).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_unrolled() {
        // buf1 = 1, p1 = -0.1; buf2 = 0.9 + 1 = 1.9, p2 = -0.1 - 0.19
        let mut o = Sgd::new(0.1, 0.9, 0.0);
        let mut p = s(0.0);
        o.step(&mut p, &s(1.0)).unwrap();
        o.step(&mut p, &s(1.0)).unwrap();
        assert!((p[0].item() + 0.29).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_grad_is_noop() {
        let mut o = Sgd::new(0.1, 0.9, 0.0);
        let mut p = s(3.25);
        o.step(&mut p, &s(0.0)).unwrap();
        assert_eq!(p[0].item(), 3.25);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut o = Sgd::<f64>::new(0.1, 0.0, 0.0);
        let mut p = vec![Tensor::zeros(vec![2])];
        assert!(o.step(&mut p, &[Tensor::zeros(vec![3])]).is_err());
        let mut a = Adam::<f64>::new(1e-3);
        assert!(a.step(&mut p, &[]).is_err());
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut o = Adam::new(1e-3);
        let mut p = s(0.7);
        o.step(&mut p, &s(0.0)).unwrap();
        assert_eq!(p[0].item(), 0.7);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // m̂ = g, v̂ = g², Δ = lr·|g|/(|g|+ε)
        for g in [1e-3, 0.5, 4.0, -7.0] {
            let mut o = Adam::new(1e-3);
            let mut p = s(0.0);
            o.step(&mut p, &s(g)).unwrap();
            let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
            assert!((p[0].item().abs() - expected).abs() < 1e-15, "g={g}");
            assert_eq!(o.steps(), 1);
        }
    }

    #[test]
    fn adam_decreases_quadratic() {
        // f(p) = (p - 2)², two steps from p = 0
        let mut o = Adam::new(1e-1);
        let mut p = s(0.0);
        let f = |x: f64| (x - 2.0) * (x - 2.0);
        let mut prev = f(0.0);
        for _ in 0..2 {
            let g = 2.0 * (p[0].item() - 2.0);
            o.step(&mut p, &s(g)).unwrap();
            let now = f(p[0].item());
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = OptimizerConfig::adam(1e-3);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<OptimizerConfig>(&s).unwrap(), c);
        assert!(
            serde_json::from_str::<OptimizerConfig>(r#"{"kind":"adam","lr":1,"typo":2}"#).is_err()
        );
    }
}
