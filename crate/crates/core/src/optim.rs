//! SGD and bias-corrected Adam.

use crate::error::{config_err, shape_err, Result};
use crate::models::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty coefficient added to the gradient.
    pub weight_decay: f64,
    /// Inverse-square-root warmup length; 0 keeps the rate constant.
    pub warmup_steps: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            weight_decay: 0.0,
            warmup_steps: 0,
            max_grad_norm: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return config_err(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return config_err("adam betas must lie in [0, 1)");
        }
        if self.eps <= 0.0 || self.weight_decay < 0.0 || self.max_grad_norm < 0.0 {
            return config_err("eps must be positive; weight decay and clip non-negative");
        }
        Ok(())
    }

    /// Learning rate for 1-based `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            return self.lr;
        }
        let s = step.max(1) as f64;
        let w = self.warmup_steps as f64;
        self.lr * (s / w).min((w / s).sqrt())
    }
}

/// Per-parameter Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

pub struct Optimizer {
    config: OptimizerConfig,
    adam: Option<AdamState>,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let adam = (config.kind == OptimizerKind::Adam).then(|| AdamState::new(params));
        Ok(Self {
            config,
            adam,
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn adam_state(&self) -> Option<&AdamState> {
        self.adam.as_ref()
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update with `grads` aligned to `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len()
            || params
                .iter()
                .zip(grads)
                .any(|(p, g)| p.value.shape() != g.shape())
        {
            return shape_err("gradients do not match the parameter layout");
        }
        self.step += 1;
        let lr = self.config.lr_at(self.step);
        let wd = self.config.weight_decay;

        let clip = if self.config.max_grad_norm > 0.0 {
            let norm = grads
                .iter()
                .flat_map(|g| g.data())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            (self.config.max_grad_norm / norm).min(1.0)
        } else {
            1.0
        };

        match &mut self.adam {
            None => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, &gi) in p.value.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * (clip * gi + wd * *w);
                    }
                }
            }
            Some(state) => {
                state.step += 1;
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
                let t = state.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = state.m[i].data_mut();
                    let v = state.v[i].data_mut();
                    for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                        let gi = clip * g.data()[j] + wd * *w;
                        m[j] = b1 * m[j] + (1.0 - b1) * gi;
                        v[j] = b2 * v[j] + (1.0 - b2) * gi * gi;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
