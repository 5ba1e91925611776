use super::model::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &ParamStore, config: AdamWConfig) -> Self {
        let zeros = || params.tensors.iter().map(|t| vec![0.0; t.numel()]).collect();
        AdamW {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// `p ← p − lr·wd·p`, then the bias-corrected Adam update.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adamw", format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, t) in params.tensors.iter_mut().enumerate() {
            let g = &grads[i];
            if g.len() != t.numel() {
                return Err(Error::shape("adamw", format!("gradient of {} has {} values", params.names[i], g.len())));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                let p = &mut t.data[j];
                *p -= c.lr * c.weight_decay * *p;
                *p -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
