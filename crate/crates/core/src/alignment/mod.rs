//! Alignment from per-sample binary feedback.
//!
//! Each reverse diffusion step is treated as an action whose implicit reward is the
//! log-ratio of the trained and reference policies. The utility objective pushes
//! `w · (β·log-ratio - Q_ref)` up through one of three value functions, with `Q_ref`
//! a clamped KL estimate on mismatched state/action pairs.

mod losses;
mod reward;
mod sampling;
mod train;
mod utility;

use serde::{Deserialize, Serialize};

use crate::nn::AdamConfig;
use crate::{Error, Result};

pub use losses::{
    csft_loss, dpo_pair_loss, dpo_pair_loss_on, draw_contexts, draw_pair_contexts, kto_loss, kto_loss_on, sft_loss,
    AlignLoss, KtoOptions,
};
pub use reward::{clamped_kl, kl_reference, mismatched, step_log_ratio, step_log_ratio_sq, StepContext};
pub use sampling::{biased_batch, biased_batch_from, LabelPools};
pub use train::{align_train, align_train_logged, LogRow, Objective, TrainLog};
pub use utility::{log_sigmoid, sigmoid, softplus, utility_derivative, utility_value, Utility, UtilityKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentConfig {
    pub beta: f64,
    /// Probability that a batch slot is filled from the desirable pool.
    pub gamma: f64,
    pub utility: UtilityKind,
    pub batch_size: usize,
    /// Mismatched pairs used for the `Q_ref` estimate, capped at the batch size.
    pub kl_batch: usize,
    pub steps: usize,
    pub lr: f64,
    /// Multiply the KL estimate by `β`.
    pub kl_beta_scaling: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            beta: 50.0,
            gamma: 0.8,
            utility: UtilityKind::KahnemanTversky,
            batch_size: 512,
            kl_batch: 512,
            steps: 2_000,
            lr: 3e-4,
            kl_beta_scaling: false,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.kl_batch < 2 {
            return Err(Error::config(format!(
                "kl_batch must be at least 2, got {}",
                self.kl_batch
            )));
        }
        AdamConfig::with_lr(self.lr).validate()
    }
}
