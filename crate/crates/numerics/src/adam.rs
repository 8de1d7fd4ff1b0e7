use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NumericsError, Result};
use crate::params::{Gradients, ParamSet};

/// Per-epoch multiplicative learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f32,
    /// Factor applied once per completed epoch; `1.0` keeps the rate constant.
    pub decay_per_epoch: f32,
}

impl LrSchedule {
    pub fn constant(lr: f32) -> Self {
        LrSchedule {
            initial: lr,
            decay_per_epoch: 1.0,
        }
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f32 {
        (self.initial as f64 * (self.decay_per_epoch as f64).powi(epoch as i32)) as f32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub schedule: LrSchedule,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// L2 coefficient added to the gradient (`g + λθ`) before the moment
    /// updates.
    pub weight_decay: f32,
}

impl AdamConfig {
    pub fn new(schedule: LrSchedule, weight_decay: f32) -> Self {
        AdamConfig {
            schedule,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Adam optimiser state: first/second moments per parameter and the step
/// counter.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first_moment: BTreeMap<String, Vec<f32>>,
    second_moment: BTreeMap<String, Vec<f32>>,
    step: u64,
    epoch: usize,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
            step: 0,
            epoch: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Selects the epoch whose scheduled learning rate subsequent steps use.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn current_lr(&self) -> f32 {
        self.config.schedule.lr_at_epoch(self.epoch)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f32]> {
        self.second_moment.get(name).map(Vec::as_slice)
    }

    /// One bias-corrected update of every parameter that has a gradient.
    /// Nothing is modified when any gradient is non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(NumericsError::Training("non-finite gradient, step aborted".into()));
        }
        for (name, g) in grads.iter() {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(NumericsError::shape("adam_step", p.shape(), g.shape()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let lr = self.current_lr();
        let bias1 = 1.0 - (beta1 as f64).powi(t);
        let bias2 = 1.0 - (beta2 as f64).powi(t);
        let step_size = (lr as f64 / bias1) as f32;
        let inv_sqrt_bias2 = (1.0 / bias2.sqrt()) as f32;

        for (name, g) in grads.iter() {
            let theta = params.get_mut(name)?.data_mut();
            let m = self
                .first_moment
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; theta.len()]);
            let v = self
                .second_moment
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; theta.len()]);
            for i in 0..theta.len() {
                let grad = g.data()[i] + weight_decay * theta[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
                let denom = v[i].sqrt() * inv_sqrt_bias2 + eps;
                theta[i] -= step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}
