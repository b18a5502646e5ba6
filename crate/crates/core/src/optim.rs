//! Stochastic gradient descent with momentum and classic L2 weight decay.
//!
//! Per parameter and step: `g' = grad + wd·param`, `v = mu·v + g'`,
//! `param -= lr·v`, then the gradient is zeroed. Batch-norm affine
//! parameters are exempt from weight decay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient in parameter {0}; training diverged")]
    Divergence(String),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.001,
        }
    }
}

/// Optimizer state: one velocity buffer per trainable parameter, aligned with
/// the stable ordering of [`ModelParams::trainable`].
#[derive(Debug)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig, params: &ModelParams) -> Result<Self, OptimError> {
        if cfg.lr <= 0.0 {
            return Err(OptimError::Config(format!(
                "learning rate must be positive, got {}",
                cfg.lr
            )));
        }
        let velocity = params
            .trainable()
            .iter()
            .map(|(_, p, _)| Tensor::zeros(&p.shape()))
            .collect();
        Ok(Self { cfg, velocity })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    /// One update step over all parameters; zeroes gradients afterwards.
    pub fn step(&mut self, params: &ModelParams) -> Result<(), OptimError> {
        for ((name, param, decay), vel) in params.trainable().into_iter().zip(&mut self.velocity) {
            let grad = param.grad();
            if !grad.all_finite() {
                return Err(OptimError::Divergence(name));
            }
            let wd = if decay { self.cfg.weight_decay } else { 0.0 };
            let mu = self.cfg.momentum;
            let lr = self.cfg.lr;
            param.update_value(|value| {
                for ((v, g), p) in vel
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(value.data_mut())
                {
                    let adjusted = g + wd * *p;
                    *v = mu * *v + adjusted;
                    *p -= lr * *v;
                }
            });
            param.zero_grad();
        }
        Ok(())
    }
}
