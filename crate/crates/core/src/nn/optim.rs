use serde::{Deserialize, Serialize};

use super::{GradientSet, NetworkParams};
use crate::error::{Error, Result};

/// Rescales `grads` so that their global L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut GradientSet, threshold: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > threshold {
        let scale = threshold / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// Bias-corrected adaptive-moment optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: GradientSet,
    v: GradientSet,
}

impl Adam {
    pub fn new(params: &NetworkParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: GradientSet::zeros_like(params),
            v: GradientSet::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &GradientSet) -> Result<()> {
        let shapes = |g: &GradientSet| g.tensors().iter().map(|t| t.len()).collect::<Vec<_>>();
        if shapes(grads) != shapes(&self.m) {
            return Err(Error::Checkpoint(
                "optimizer state does not match gradient shapes".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let mut targets = params.trainable_mut();
        if targets.len()
            != grads
                .layers
                .iter()
                .map(|l| 2 + 2 * l.gamma.is_some() as usize)
                .sum::<usize>()
        {
            return Err(Error::Checkpoint(
                "parameters do not match gradient shapes".into(),
            ));
        }
        for (((p, g), m), v) in targets
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            if p.len() != g.len() {
                return Err(Error::Checkpoint(
                    "parameters do not match gradient shapes".into(),
                ));
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
