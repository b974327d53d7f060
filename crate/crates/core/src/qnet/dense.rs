use serde::{Deserialize, Serialize};

use super::linalg::{axpy, dot};
use crate::error::{Error, Result};

/// Fully connected layer, weights stored `[output][input]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Shape(format!("invalid dense layer {inputs} -> {outputs}")));
        }
        Ok(Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        Ok(self
            .weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + dot(row, x))
            .collect())
    }

    /// Accumulates parameter gradients and returns the input gradient.
    /// `grad_out` is the gradient w.r.t. the pre-activation output.
    pub fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        grad_weights: &mut [f64],
        grad_bias: &mut [f64],
    ) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let span = o * self.inputs..(o + 1) * self.inputs;
            axpy(g, x, &mut grad_weights[span.clone()]);
            grad_bias[o] += g;
            axpy(g, &self.weights[span], &mut grad_in);
        }
        grad_in
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_is_affine() {
        let mut d = Dense::new(2, 2).unwrap();
        d.weights = vec![1.0, 2.0, -1.0, 0.5];
        d.bias = vec![0.5, 0.0];
        assert_eq!(d.forward(&[1.0, 1.0]).unwrap(), vec![3.5, -0.5]);
        assert!(d.forward(&[1.0]).is_err());
    }

    #[test]
    fn sigmoid_is_bounded_and_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
