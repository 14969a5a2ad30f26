//! AdamW with decoupled weight decay, and cosine annealing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    /// The usual library defaults: β = (0.9, 0.999), ε = 1e-8, λ = 0.01.
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One trainable tensor handed to the optimizer.
pub struct ParamSlot<'a> {
    pub name: &'static str,
    pub values: &'a mut [f64],
    /// Whether decoupled weight decay applies (weight matrices only).
    pub decay: bool,
    /// Frozen tensors are left untouched, moments included.
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub first_moments: Vec<Vec<f64>>,
    pub second_moments: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
        }
    }

    /// One update. `grads` must list the same tensors as `params`, in order.
    pub fn step(&mut self, params: &mut [ParamSlot<'_>], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.values.len() != g.len() {
                return Err(Error::Shape(format!(
                    "parameter `{}` has {} entries but its gradient has {}",
                    p.name,
                    p.values.len(),
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.to_string()));
            }
        }
        if self.first_moments.is_empty() {
            self.first_moments = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
            self.second_moments = self.first_moments.clone();
        } else if self.first_moments.len() != params.len()
            || self.first_moments.iter().zip(params.iter()).any(|(m, p)| m.len() != p.values.len())
        {
            return Err(Error::Shape("optimizer moments do not match parameter shapes".into()));
        }

        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moments.iter_mut().zip(self.second_moments.iter_mut()))
        {
            if p.frozen {
                continue;
            }
            let decay = if p.decay { 1.0 - lr * weight_decay } else { 1.0 };
            for i in 0..p.values.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.values[i] = p.values[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: u64,
}

impl CosineSchedule {
    /// `η_min + ½(η_max − η_min)(1 + cos(π t / T))`, clamped to `η_min` past `T`.
    pub fn lr(&self, t: u64) -> f64 {
        cosine_lr(t, self)
    }
}

pub fn cosine_lr(t: u64, cfg: &CosineSchedule) -> f64 {
    if t >= cfg.total_steps {
        return cfg.lr_min;
    }
    let frac = t as f64 / cfg.total_steps as f64;
    cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}
