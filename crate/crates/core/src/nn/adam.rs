use serde::{Deserialize, Serialize};

use super::Params;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Adam with bias-corrected moments.
///
/// Moments are allocated lazily on the first step to match the parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update. Non-finite gradients abort before anything is modified.
    pub fn step<P: Params, G: Params>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let grad_tensors = grads.tensors();
        if let Some((name, _)) = grad_tensors.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in tensor {name} at optimizer step {}",
                self.step_count + 1
            )));
        }
        let mut param_tensors = params.tensors_mut();
        if param_tensors.len() != grad_tensors.len()
            || param_tensors
                .iter()
                .zip(&grad_tensors)
                .any(|((_, p), (_, g))| p.len() != g.len())
        {
            return Err(Error::usage("gradient shapes do not match parameters"));
        }
        if self.first_moment.is_empty() {
            self.first_moment = grad_tensors.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }

        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step_count as i32);
        let bias2 = 1.0 - beta2.powi(self.step_count as i32);

        for (k, ((_, p), (_, g))) in param_tensors.iter_mut().zip(&grad_tensors).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
