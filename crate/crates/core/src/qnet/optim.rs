use serde::{Deserialize, Serialize};

use super::Gradients;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd {
        learning_rate: f64,
    },
    /// `s <- decay * s + (1 - decay) * g^2; theta <- theta - lr * g / sqrt(s + epsilon)`
    RmsProp {
        learning_rate: f64,
        decay: f64,
        epsilon: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::RmsProp {
            learning_rate: 0.00025,
            decay: 0.95,
            epsilon: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { learning_rate } | OptimizerConfig::RmsProp { learning_rate, .. } => {
                learning_rate
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if let OptimizerConfig::RmsProp { decay, epsilon, .. } = *self {
            if !(0.0..1.0).contains(&decay) || !(epsilon > 0.0) {
                return Err(Error::Config(
                    "rmsprop needs decay in [0, 1) and a positive epsilon".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    /// Running mean of squared gradients (RMSProp only).
    pub square_avg: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, shapes: &[usize]) -> Self {
        let square_avg = match config {
            OptimizerConfig::Sgd { .. } => Vec::new(),
            OptimizerConfig::RmsProp { .. } => shapes.iter().map(|&n| vec![0.0; n]).collect(),
        };
        Self { config, square_avg }
    }

    /// Gradient descent step on `params`. Nothing is modified if any gradient
    /// is non-finite.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &Gradients) -> Result<()> {
        if params.len() != grads.tensors.len()
            || params.iter().zip(&grads.tensors).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::Shape("parameter and gradient shapes differ".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        match self.config {
            OptimizerConfig::Sgd { learning_rate } => {
                for (p, g) in params.into_iter().zip(&grads.tensors) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= learning_rate * gi;
                    }
                }
            }
            OptimizerConfig::RmsProp {
                learning_rate,
                decay,
                epsilon,
            } => {
                if self.square_avg.len() != grads.tensors.len() {
                    return Err(Error::Shape("optimizer state does not match parameters".into()));
                }
                for ((p, g), s) in params.into_iter().zip(&grads.tensors).zip(&mut self.square_avg) {
                    for ((pi, gi), si) in p.iter_mut().zip(g).zip(s.iter_mut()) {
                        *si = decay * *si + (1.0 - decay) * gi * gi;
                        *pi -= learning_rate * gi / (*si + epsilon).sqrt();
                    }
                }
            }
        }
        Ok(())
    }
}
