use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ddpm_loss, DenoiserModel};
use crate::nn::{AdamConfig, AdamState, Params};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 256,
            lr: 1e-3,
        }
    }
}

/// Fits `model` to `data` (one point per row) with the simple denoising loss.
///
/// Returns the per-step loss. On a non-finite loss or gradient the error is returned
/// and `model` holds the last finite parameters.
pub fn pretrain<R: Rng + ?Sized>(
    model: &mut DenoiserModel,
    data: ArrayView2<'_, f64>,
    config: &PretrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if data.nrows() == 0 {
        return Err(Error::usage("pretraining data is empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr))?;
    let mut losses = Vec::with_capacity(config.steps);
    let mut batch = Array2::zeros((config.batch_size, data.ncols()));
    for step in 0..config.steps {
        for mut row in batch.rows_mut() {
            row.assign(&data.row(rng.random_range(0..data.nrows())));
        }
        let out = ddpm_loss(model, batch.view(), rng).map_err(|e| annotate(e, step))?;
        if let Some(name) = out.grads.first_non_finite() {
            return Err(Error::Numerical(format!(
                "pretrain step {step}: non-finite gradient in {name}"
            )));
        }
        adam.step(model, &out.grads)?;
        losses.push(out.loss);
    }
    Ok(losses)
}

fn annotate(e: Error, step: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("pretrain step {step}: {msg}")),
        other => other,
    }
}
