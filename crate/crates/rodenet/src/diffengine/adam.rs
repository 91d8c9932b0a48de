//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::DiffError;

/// State of one Adam optimizer instance over a flat parameter vector.
///
/// `t` counts completed steps; `m` and `v` are the first and second moment
/// estimates and always have the parameter vector's length.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    /// Defaults beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(lr: f64, dim: usize) -> Self {
        Self::with_betas(lr, 0.9, 0.999, dim)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, dim: usize) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), DiffError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(DiffError::LengthMismatch(format!(
                "adam_step: state dim {}, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
