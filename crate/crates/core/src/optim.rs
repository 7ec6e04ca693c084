//! Parameter update rules.
//!
//! [`Adam`] is the optimizer used for every reported result; [`SgdNesterov`]
//! exists only as the comparison baseline.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Constants shared by all Adam parameter groups.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            nesterov: true,
        }
    }
}

pub trait Optimizer<T: Scalar> {
    /// Applies one update to `params` in place.
    fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()>;
}

fn check_shapes<T: Scalar>(
    op: &'static str,
    state: &[Tensor<T>],
    params: &[Tensor<T>],
    grads: &[Tensor<T>],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::shape(
            op,
            "parameter count",
            state.len(),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for (i, ((p, g), s)) in params.iter().zip(grads).zip(state).enumerate() {
        if p.shape() != g.shape() || p.shape() != s.shape() {
            return Err(Error::shape(
                op,
                format!("tensor {i}"),
                s.shape(),
                format!("param {:?} / grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    Ok(())
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    /// First-moment running average, one per parameter tensor.
    pub m: Vec<Tensor<T>>,
    /// Second-moment running average; never negative.
    pub v: Vec<Tensor<T>>,
    /// Number of completed steps.
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let zeros = |p: &Tensor<T>| Tensor::zeros(p.shape());
        Self {
            config,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            t: 0,
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_shapes("adam_step", &self.m, params, grads)?;
        self.t += 1;
        let c = self.config;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let correction1 = one - b1.powi(t);
        let correction2 = one - b2.powi(t);
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.epsilon);

        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= lr / (v_hat.sqrt() + eps) * m_hat;
            }
        }
        Ok(())
    }
}

/// SGD with (optionally Nesterov) momentum.
///
/// `v <- mu v - lr g`, then `theta <- theta + mu v - lr g` (Nesterov) or
/// `theta <- theta + v` (classical momentum).
#[derive(Clone, Debug)]
pub struct SgdNesterov<T> {
    pub config: SgdConfig,
    pub velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> SgdNesterov<T> {
    pub fn new(config: SgdConfig, params: &[Tensor<T>]) -> Self {
        Self {
            config,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for SgdNesterov<T> {
    fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_shapes("sgd_nesterov_step", &self.velocity, params, grads)?;
        let mu = T::from_f64_lossy(self.config.momentum);
        let lr = T::from_f64_lossy(self.config.lr);
        let nesterov = self.config.nesterov;
        for ((p, g), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut()) {
                *v = mu * *v - lr * g;
                if nesterov {
                    *p += mu * *v - lr * g;
                } else {
                    *p += *v;
                }
            }
        }
        Ok(())
    }
}
