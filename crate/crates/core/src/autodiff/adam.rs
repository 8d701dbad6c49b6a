use std::collections::BTreeMap;

use super::params::ParamStore;

/// Adam optimizer state: first/second moment buffers per parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    skipped: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(1e-3, 0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            skipped: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Number of updates skipped because of non-finite gradients.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Applies one update from the gradients stored in `params`, then zeroes
    /// them. Returns `false` (and leaves parameters and moments untouched)
    /// when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore) -> bool {
        if !params.grads_finite() {
            self.skipped += 1;
            log::warn!("adam: non-finite gradient, skipping update ({} skipped)", self.skipped);
            params.zero_grad();
            return false;
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let Some(grad) = tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            for (((w, g), mi), vi) in tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            tensor.zero_grad();
        }
        true
    }
}
