//! SGD with momentum and Adam.

use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields))]
pub enum OptimizerSpec {
    SgdMomentum {
        lr: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        momentum: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        weight_decay: f64,
    },
    Adam {
        lr: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_beta1"))]
        beta1: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_beta2"))]
        beta2: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_adam_eps"))]
        eps: f64,
    },
}

#[cfg(feature = "serde")]
fn default_beta1() -> f64 {
    0.9
}
#[cfg(feature = "serde")]
fn default_beta2() -> f64 {
    0.999
}
#[cfg(feature = "serde")]
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerSpec {
    pub fn adam(lr: f64) -> Self {
        OptimizerSpec::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn sgd(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        OptimizerSpec::SgdMomentum { lr, momentum, weight_decay }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerSpec::SgdMomentum { lr, .. } | OptimizerSpec::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(mut self, new_lr: f64) -> Self {
        match &mut self {
            OptimizerSpec::SgdMomentum { lr, .. } | OptimizerSpec::Adam { lr, .. } => *lr = new_lr,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerSpec::SgdMomentum { lr, momentum, weight_decay } => {
                lr >= 0.0 && (0.0..1.0).contains(&momentum) && weight_decay >= 0.0
            }
            OptimizerSpec::Adam { lr, beta1, beta2, eps } => {
                lr >= 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Per-tensor optimizer buffers mirroring the trained tensors' shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    spec: OptimizerSpec,
    /// Momentum buffer (SGD) or first moment (Adam).
    first: Vec<Matrix>,
    /// Second moment (Adam only).
    second: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new<'a>(spec: OptimizerSpec, tensors: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let first: Vec<Matrix> = tensors.into_iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        let second = match spec {
            OptimizerSpec::Adam { .. } => first.clone(),
            OptimizerSpec::SgdMomentum { .. } => Vec::new(),
        };
        OptimizerState { spec, first, second, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every tensor with learning rate `lr`.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Domain(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::dim("optimizer_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        match self.spec {
            OptimizerSpec::SgdMomentum { momentum, weight_decay, .. } => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    let (p, g, v) = (p.as_mut_slice(), g.as_slice(), v.as_mut_slice());
                    for c in 0..p.len() {
                        v[c] = momentum * v[c] + g[c] + weight_decay * p[c];
                        p[c] -= lr * v[c];
                    }
                }
            }
            OptimizerSpec::Adam { beta1, beta2, eps, .. } => {
                let t = self.step as f64;
                let c1 = 1.0 - libm::pow(beta1, t);
                let c2 = 1.0 - libm::pow(beta2, t);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    let (p, g) = (p.as_mut_slice(), g.as_slice());
                    let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
                    for c in 0..p.len() {
                        m[c] = beta1 * m[c] + (1.0 - beta1) * g[c];
                        v[c] = beta2 * v[c] + (1.0 - beta2) * g[c] * g[c];
                        let m_hat = m[c] / c1;
                        let v_hat = v[c] / c2;
                        p[c] -= lr * m_hat / (math::sqrt(v_hat) + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
