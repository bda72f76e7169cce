//! DDPM machinery: schedule, closed-form noising, reverse-step Gaussians, the
//! ancestral sampler and the simple (uniformly weighted) denoising loss.

mod model;
mod sampler;
mod schedule;
mod train;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use model::{Cond, DenoiserCache, DenoiserGrads, DenoiserModel, ModelConfig};
pub use sampler::{sample, SAMPLE_CHUNK};
pub use schedule::{make_linear_schedule, NoiseSchedule, ScheduleSpec};
pub use train::{pretrain, PretrainConfig};

use crate::{Error, Result};

/// A scalar objective and its gradient with respect to the trained model.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: DenoiserGrads,
}

/// Closed-form marginal sample `x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·eps`. `t = 0` returns `x0`.
pub fn forward_noise(schedule: &NoiseSchedule, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
    if t > schedule.steps() {
        return Err(Error::usage(format!("step {t} outside 0..={}", schedule.steps())));
    }
    if x0.len() != eps.len() {
        return Err(Error::usage("x0 and eps differ in length"));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Mean of the forward posterior `q(x_{t-1} | x_t, x0)`.
pub fn posterior_mean(schedule: &NoiseSchedule, x0: &[f64], x_t: &[f64], t: usize) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    let (c0, c1) = (schedule.posterior_coef_x0(t), schedule.posterior_coef_xt(t));
    Ok(x0.iter().zip(x_t).map(|(a, b)| c0 * a + c1 * b).collect())
}

/// `μ = (x_t - β_t/√(1-ᾱ_t)·ε̂) / √α_t` for every row.
pub fn reverse_means(
    schedule: &NoiseSchedule,
    xs: ArrayView2<'_, f64>,
    ts: &[usize],
    eps_pred: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut mu = xs.to_owned();
    for (i, &t) in ts.iter().enumerate() {
        let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
        let k = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
        for (m, e) in mu.row_mut(i).iter_mut().zip(eps_pred.row(i)) {
            *m = (*m - k * e) * inv_sqrt_alpha;
        }
    }
    mu
}

/// Reverse-step mean `μ_θ(x_t, t)` for one point.
pub fn reverse_step_mean(model: &DenoiserModel, x_t: &[f64], t: usize, cond: Option<Cond>) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::usage("no reverse step below t = 1"));
    }
    model.schedule.check_step(t)?;
    let xs = ArrayView2::from_shape((1, x_t.len()), x_t).map_err(|e| Error::usage(e.to_string()))?;
    let conds = cond.map(|c| [c]);
    let eps = model.predict_eps(xs, &[t], conds.as_ref().map(|c| &c[..]))?;
    Ok(reverse_means(&model.schedule, xs, &[t], eps.view())
        .into_raw_vec_and_offset()
        .0)
}

/// Isotropic Gaussian log-density `log N(x; mean, std²·I)`.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], std: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::usage(format!("standard deviation must be positive, got {std}")));
    }
    if x.len() != mean.len() {
        return Err(Error::usage("x and mean differ in length"));
    }
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-0.5 * d * (2.0 * std::f64::consts::PI).ln() - d * std.ln() - sq / (2.0 * std * std))
}

pub(crate) fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Draws of `t ~ U{1..T}` and `eps ~ N(0, I)` for one batch, in row order.
pub(crate) fn draw_steps_and_noise<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> (Vec<usize>, Array2<f64>) {
    let mut ts = Vec::with_capacity(rows);
    let mut eps = Array2::zeros((rows, cols));
    for i in 0..rows {
        ts.push(rng.random_range(1..=schedule.steps()));
        for v in eps.row_mut(i).iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    }
    (ts, eps)
}

/// Row-wise closed-form noising.
pub(crate) fn noise_batch(
    schedule: &NoiseSchedule,
    x0: ArrayView2<'_, f64>,
    ts: &[usize],
    eps: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut xt = Array2::zeros(x0.raw_dim());
    for (i, &t) in ts.iter().enumerate() {
        let ab = schedule.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for ((o, x), e) in xt.row_mut(i).iter_mut().zip(x0.row(i)).zip(eps.row(i)) {
            *o = a * x + b * e;
        }
    }
    xt
}

/// Simple DDPM loss: mean over the batch of `‖eps - ε_θ(x_t, t)‖²`, λ(t) ≡ 1.
pub fn ddpm_loss<R: Rng + ?Sized>(model: &DenoiserModel, x0: ArrayView2<'_, f64>, rng: &mut R) -> Result<LossOutput> {
    ddpm_loss_cond(model, x0, None, rng)
}

/// [`ddpm_loss`] with an optional condition token per sample.
pub fn ddpm_loss_cond<R: Rng + ?Sized>(
    model: &DenoiserModel,
    x0: ArrayView2<'_, f64>,
    conds: Option<&[Cond]>,
    rng: &mut R,
) -> Result<LossOutput> {
    let n = x0.nrows();
    if n == 0 {
        return Err(Error::usage("empty batch"));
    }
    let (ts, eps) = draw_steps_and_noise(&model.schedule, n, x0.ncols(), rng);
    let xt = noise_batch(&model.schedule, x0, &ts, eps.view());
    let (pred, cache) = model.predict_eps_with_cache(xt.view(), &ts, conds)?;
    let (loss, upstream) = squared_error(pred.view(), eps.view());
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "denoising loss is {loss} on a batch of {n} (steps {:?}...)",
            &ts[..ts.len().min(8)]
        )));
    }
    let grads = model.backward(&cache, upstream.view())?;
    Ok(LossOutput { loss, grads })
}

/// Batch-mean squared error and its gradient with respect to `pred`.
pub(crate) fn squared_error(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
    let n = pred.nrows() as f64;
    let residual = &pred - &target;
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / n;
    (loss, residual * (2.0 / n))
}
