//! Adam with bias correction and a step-decay learning rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub initial_lr: f64,
    /// Multiplier applied every `decay_interval_epochs` epochs.
    pub lr_decay_factor: f64,
    pub decay_interval_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            initial_lr: 2e-4,
            lr_decay_factor: 0.4,
            decay_interval_epochs: 5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config("initial_lr must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::config("lr_decay_factor must lie in (0, 1]"));
        }
        if self.decay_interval_epochs < 1 {
            return Err(Error::config("decay_interval_epochs must be at least 1"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("adam epsilon must be positive"));
        }
        Ok(())
    }

    /// `initial_lr * decay^(epoch / interval)`, constant within an epoch.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.decay_interval_epochs) as i32;
        self.initial_lr * self.lr_decay_factor.powi(decays)
    }
}

/// Moment accumulators, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        AdamState {
            step: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One Adam update over matching parameter and gradient tensors.
    pub fn step(
        &mut self,
        config: &OptimizerConfig,
        params: &mut [&mut Vec<f64>],
        grads: &[&Vec<f64>],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::shape(self.first_moment.len(), params.len()));
        }
        if grads.len() != params.len() {
            return Err(Error::shape(params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::shape(p.len(), g.len()));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::numeric("non-finite gradient"));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps) = (config.beta1, config.beta2, config.epsilon);
        let correction1 = 1.0 - b1.powi(t);
        let correction2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((p, g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
