//! Gradient buffers and the Adam optimizer.

use crate::policy::PolicyParams;
use crate::tensor::{Gradients, Matrix};

/// Per-parameter gradient accumulator. Adding a second set of gradients
/// without [`GradBuffer::zero`] sums them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub grads: Vec<Matrix>,
}

impl GradBuffer {
    pub fn new(params: &PolicyParams) -> Self {
        Self {
            grads: (0..params.len())
                .map(|i| {
                    let (r, c) = params.tensor(i).shape();
                    Matrix::zeros(r, c)
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, g: &Gradients) {
        for (i, m) in g.params() {
            self.grads[i].add_assign(m);
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().map(Matrix::norm_sq).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2.5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected adaptive-moment descent.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &PolicyParams) -> Self {
        let zeros = GradBuffer::new(params).grads;
        Self { config, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, params: &mut PolicyParams, grads: &GradBuffer) {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.grads.iter().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.tensor_mut(i);
            for k in 0..g.data.len() {
                let gk = g.data[k];
                m.data[k] = beta1 * m.data[k] + (1.0 - beta1) * gk;
                v.data[k] = beta2 * v.data[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m.data[k] / c1;
                let v_hat = v.data[k] / c2;
                p.data[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let config = PolicyConfig { layers: 1, heads: 1, head_dim: 2, meta_dim: 2, value_hidden: 2, grid_size: 2, ..Default::default() };
        let mut params = PolicyParams::zeros(config);
        let mut grads = GradBuffer::new(&params);
        grads.grads[0].data[0] = 3.0;
        grads.grads[0].data[1] = -0.5;
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &params);
        adam.step(&mut params, &grads);
        let p = params.tensor(0);
        assert!((p.data[0] + 0.1).abs() < 1e-8);
        assert!((p.data[1] - 0.1).abs() < 1e-7);
        assert_eq!(p.data[2], 0.0);
    }
}
