//! First-order optimizers over lists of parameter tensors.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use serde::{Deserialize, Serialize};

fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.9
}
fn default_adam_eps() -> f64 {
    1e-8
}

/// Update rule. Adam defaults to `β₁ = 0.5`, `β₂ = 0.9`, `ε = 1e-8`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let OptimizerKind::Adam { beta1, beta2, eps } = *self {
            let unit = |b: f64| (0.0..1.0).contains(&b);
            if !unit(beta1) || !unit(beta2) || !(eps > 0.0) {
                return Err(Error::Config(format!(
                    "Adam needs 0 <= β < 1 and ε > 0, got β₁={beta1} β₂={beta2} ε={eps}"
                )));
            }
        }
        Ok(())
    }
}

/// An optimizer together with its per-parameter state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    /// Steps taken so far.
    pub t: u64,
    /// First and second moments (Adam only; empty for SGD).
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One descent step `θ ← θ − lr·update(g)`.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Structural(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Structural(format!(
                    "tensor {k}: parameter is {:?} but gradient is {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::Divergence {
                    iter: self.t as usize,
                    detail: format!("non-finite gradient in tensor {k} (max |g| = {})", g.max_abs()),
                });
            }
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.axpy(-lr, g);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
                    self.v = self.m.clone();
                }
                if self.m.len() != grads.len() {
                    return Err(Error::Structural("optimizer state does not match parameters".into()));
                }
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = self.m[k].as_mut_slice();
                    let v = self.v[k].as_mut_slice();
                    for (((x, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
