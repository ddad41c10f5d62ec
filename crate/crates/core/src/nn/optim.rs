use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// `base_lr * 0.5 * (1 + cos(pi * step / total))`.
pub fn cosine_lr(step: usize, total: usize, base_lr: f64) -> f64 {
    if total == 0 {
        return base_lr;
    }
    let t = step.min(total) as f64 / total as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Moment accumulators for AdamW, shaped like the network's parameter slices.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: AdamWConfig,
    pub base_lr: f64,
    pub total_steps: usize,
    pub step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(mlp: &Mlp<T>, config: AdamWConfig, base_lr: f64, total_steps: usize) -> Self {
        let zeros: Vec<Vec<T>> = mlp.slices().iter().map(|s| vec![T::zero(); s.len()]).collect();
        OptimizerState {
            config,
            base_lr,
            total_steps,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Learning rate the schedule assigns to the next step.
    pub fn scheduled_lr(&self) -> f64 {
        cosine_lr(self.step as usize, self.total_steps, self.base_lr)
    }

    /// One AdamW update: decoupled decay `θ -= lr·wd·θ`, then the
    /// bias-corrected Adam step.
    pub fn adamw_step(&mut self, mlp: &mut Mlp<T>, grads: &Gradients<T>, step_lr: f64) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let decay = T::of(1.0 - step_lr * c.weight_decay);
        let step_size = T::of(step_lr / bc1);
        let inv_bc2_sqrt = T::of(1.0 / bc2.sqrt());
        let eps = T::of(c.epsilon);

        let grad_slices = grads.slices();
        for (k, params) in mlp.slices_mut().into_iter().enumerate() {
            let g = grad_slices[k];
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..params.len() {
                params[i] = params[i] * decay;
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                params[i] = params[i] - step_size * m[i] / (v[i].sqrt() * inv_bc2_sqrt + eps);
            }
        }
    }
}
