//! Per-step implicit reward.
//!
//! The "action" of a reverse step is `x_{t-1}` drawn from the forward posterior
//! `q(x_{t-1} | x_t, x0)`. Both policies are Gaussians with the schedule's shared
//! `σ_t`, so the log-ratio reduces to a difference of squared errors.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ddpm::{
    forward_noise, gaussian_logpdf, posterior_mean, reverse_means, reverse_step_mean, Cond, DenoiserCache,
    DenoiserModel, NoiseSchedule,
};
use crate::{Error, Result};

/// One sampled reverse transition of a training point.
#[derive(Debug, Clone, PartialEq)]
pub struct StepContext {
    pub x0: Vec<f64>,
    pub t: usize,
    pub eps: Vec<f64>,
    pub x_t: Vec<f64>,
    /// The action, drawn from the forward posterior.
    pub x_prev: Vec<f64>,
}

impl StepContext {
    /// Builds the context from explicit noise: `eps` noises `x0` to step `t`, `z`
    /// draws the posterior sample.
    pub fn from_noise(schedule: &NoiseSchedule, x0: &[f64], t: usize, eps: &[f64], z: &[f64]) -> Result<Self> {
        schedule.check_step(t)?;
        let x_t = forward_noise(schedule, x0, t, eps)?;
        let mean = posterior_mean(schedule, x0, &x_t, t)?;
        let sigma = schedule.sigma(t);
        let x_prev = mean.iter().zip(z).map(|(m, z)| m + sigma * z).collect();
        Ok(Self {
            x0: x0.to_vec(),
            t,
            eps: eps.to_vec(),
            x_t,
            x_prev,
        })
    }

    /// Draws `t ~ U{1..T}`, then `eps` and the posterior noise, in that order.
    pub fn draw<R: Rng + ?Sized>(schedule: &NoiseSchedule, x0: &[f64], rng: &mut R) -> Self {
        let t = rng.random_range(1..=schedule.steps());
        let d = x0.len();
        let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        Self::from_noise(schedule, x0, t, &eps, &z).expect("t drawn in range")
    }
}

/// Pairs the state of sample `i + 1` (cyclically) with the action of sample `i`.
pub fn mismatched(contexts: &[StepContext]) -> Vec<StepContext> {
    let n = contexts.len();
    (0..n)
        .map(|i| {
            let state = &contexts[(i + 1) % n];
            StepContext {
                x_prev: contexts[i].x_prev.clone(),
                ..state.clone()
            }
        })
        .collect()
}

/// `log π_θ(x_prev | x_t) - log π_ref(x_prev | x_t)` as a difference of log-densities.
pub fn step_log_ratio(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    ctx: &StepContext,
    cond: Option<Cond>,
) -> Result<f64> {
    theta.check_compatible(reference)?;
    let sigma = theta.schedule.sigma(ctx.t);
    let mu_theta = reverse_step_mean(theta, &ctx.x_t, ctx.t, cond)?;
    let mu_ref = reverse_step_mean(reference, &ctx.x_t, ctx.t, cond)?;
    Ok(gaussian_logpdf(&ctx.x_prev, &mu_theta, sigma)? - gaussian_logpdf(&ctx.x_prev, &mu_ref, sigma)?)
}

/// Same quantity as [`step_log_ratio`] via `(‖a - μ_ref‖² - ‖a - μ_θ‖²) / 2σ_t²`.
pub fn step_log_ratio_sq(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    ctx: &StepContext,
    cond: Option<Cond>,
) -> Result<f64> {
    theta.check_compatible(reference)?;
    let sigma = theta.schedule.sigma(ctx.t);
    let mu_theta = reverse_step_mean(theta, &ctx.x_t, ctx.t, cond)?;
    let mu_ref = reverse_step_mean(reference, &ctx.x_t, ctx.t, cond)?;
    Ok(sq_log_ratio(&ctx.x_prev, &mu_theta, &mu_ref, sigma))
}

#[inline]
pub(crate) fn sq_log_ratio<'a>(
    action: impl IntoIterator<Item = &'a f64>,
    mu_theta: impl IntoIterator<Item = &'a f64>,
    mu_ref: impl IntoIterator<Item = &'a f64>,
    sigma: f64,
) -> f64 {
    let mut acc = 0.0;
    for ((a, mt), mr) in action.into_iter().zip(mu_theta).zip(mu_ref) {
        acc += (a - mr) * (a - mr) - (a - mt) * (a - mt);
    }
    acc / (2.0 * sigma * sigma)
}

/// Clamped reference point from mismatched log-ratios:
/// `scale · max(0, mean(log_ratios))` where `scale` is `β` with `beta_scaling` on, 1 otherwise.
pub fn clamped_kl(log_ratios: &[f64], beta: f64, beta_scaling: bool) -> Result<f64> {
    if log_ratios.len() < 2 {
        return Err(Error::config(format!(
            "KL estimate needs at least 2 mismatched pairs, got {}",
            log_ratios.len()
        )));
    }
    let mean = log_ratios.iter().sum::<f64>() / log_ratios.len() as f64;
    let scale = if beta_scaling { beta } else { 1.0 };
    Ok(scale * mean.max(0.0))
}

/// Reference point `Q_ref` over a batch of mismatched contexts. No gradient is
/// propagated through it by any loss in this crate.
pub fn kl_reference(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    mismatch_batch: &[StepContext],
    beta: f64,
    beta_scaling: bool,
) -> Result<f64> {
    if mismatch_batch.len() < 2 {
        return Err(Error::config("KL estimate needs at least 2 mismatched pairs"));
    }
    let ratios = mismatch_batch
        .iter()
        .map(|ctx| step_log_ratio_sq(theta, reference, ctx, None))
        .collect::<Result<Vec<_>>>()?;
    clamped_kl(&ratios, beta, beta_scaling)
}

/// Batched state of a set of step contexts, ready for network evaluation.
pub(crate) struct StepBatch {
    pub ts: Vec<usize>,
    pub x_t: Array2<f64>,
    pub x_prev: Array2<f64>,
}

impl StepBatch {
    pub fn from_contexts(contexts: &[StepContext]) -> Self {
        let n = contexts.len();
        let d = contexts.first().map_or(0, |c| c.x_t.len());
        let mut x_t = Array2::zeros((n, d));
        let mut x_prev = Array2::zeros((n, d));
        for (i, c) in contexts.iter().enumerate() {
            x_t.row_mut(i).iter_mut().zip(&c.x_t).for_each(|(o, v)| *o = *v);
            x_prev.row_mut(i).iter_mut().zip(&c.x_prev).for_each(|(o, v)| *o = *v);
        }
        Self {
            ts: contexts.iter().map(|c| c.t).collect(),
            x_t,
            x_prev,
        }
    }
}

/// Reverse means of both policies on a batch; the `theta` cache allows backward.
pub(crate) struct PolicyMeans {
    pub theta: Array2<f64>,
    pub reference: Array2<f64>,
    pub cache: DenoiserCache,
}

pub(crate) fn policy_means(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    x_t: ArrayView2<'_, f64>,
    ts: &[usize],
    conds: Option<&[Cond]>,
) -> Result<PolicyMeans> {
    let (eps_theta, cache) = theta.predict_eps_with_cache(x_t, ts, conds)?;
    let eps_ref = reference.predict_eps(x_t, ts, conds)?;
    Ok(PolicyMeans {
        theta: reverse_means(&theta.schedule, x_t, ts, eps_theta.view()),
        reference: reverse_means(&reference.schedule, x_t, ts, eps_ref.view()),
        cache,
    })
}
