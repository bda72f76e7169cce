use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use rand::Rng;

use super::reward::{policy_means, sq_log_ratio, StepBatch, StepContext};
use super::utility::{sigmoid, softplus, Utility};
use super::AlignmentConfig;
use crate::datasets::{Label, LabeledSample, Point};
use crate::ddpm::{ddpm_loss_cond, Cond, DenoiserGrads, DenoiserModel, LossOutput, NoiseSchedule};
use crate::{Error, Result};

/// Loss, gradient and the diagnostics logged per training step.
#[derive(Debug, Clone)]
pub struct AlignLoss {
    pub loss: f64,
    pub grads: DenoiserGrads,
    /// Zero for objectives without a reference point.
    pub q_ref: f64,
    pub mean_log_ratio: f64,
}

/// Overrides for [`kto_loss_on`].
#[derive(Clone, Copy, Default)]
pub struct KtoOptions<'a> {
    /// Used in place of `cfg.utility`.
    pub utility: Option<&'a dyn Utility>,
    /// Used in place of the mismatched-pair estimate.
    pub fixed_q_ref: Option<f64>,
}

/// One step context per sample, drawn in batch order.
pub fn draw_contexts<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    batch: &[LabeledSample],
    rng: &mut R,
) -> Vec<StepContext> {
    batch.iter().map(|s| StepContext::draw(schedule, &s.x0, rng)).collect()
}

pub fn kto_loss<R: Rng + ?Sized>(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    batch: &[LabeledSample],
    cfg: &AlignmentConfig,
    rng: &mut R,
) -> Result<AlignLoss> {
    let contexts = draw_contexts(&theta.schedule, batch, rng);
    kto_loss_on(theta, reference, batch, &contexts, cfg, KtoOptions::default())
}

/// `-(1/B) Σ U(w_i (β r_i - Q_ref))` on fixed step contexts.
///
/// `Q_ref` is estimated on the first `min(kl_batch, B)` contexts, each action paired
/// with the state of its cyclic successor, and is treated as a constant.
pub fn kto_loss_on(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    batch: &[LabeledSample],
    contexts: &[StepContext],
    cfg: &AlignmentConfig,
    opts: KtoOptions<'_>,
) -> Result<AlignLoss> {
    theta.check_compatible(reference)?;
    let n = batch.len();
    if n == 0 {
        return Err(Error::usage("empty batch"));
    }
    if contexts.len() != n {
        return Err(Error::usage(format!(
            "{} step contexts for {n} samples",
            contexts.len()
        )));
    }
    let utility: &dyn Utility = opts.utility.unwrap_or(&cfg.utility);
    let schedule = &theta.schedule;
    let sb = StepBatch::from_contexts(contexts);
    let pm = policy_means(theta, reference, sb.x_t.view(), &sb.ts, None)?;
    let sigma = |i: usize| schedule.sigma(sb.ts[i]);
    let ratio = |action: usize, state: usize| {
        sq_log_ratio(
            sb.x_prev.row(action),
            pm.theta.row(state),
            pm.reference.row(state),
            sigma(state),
        )
    };
    let ratios: Vec<f64> = (0..n).map(|i| ratio(i, i)).collect();
    let q_ref = match opts.fixed_q_ref {
        Some(q) => q,
        None => {
            let m = cfg.kl_batch.min(n);
            let mismatched: Vec<f64> = (0..m).map(|i| ratio(i, (i + 1) % m)).collect();
            super::reward::clamped_kl(&mismatched, cfg.beta, cfg.kl_beta_scaling)?
        }
    };

    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut upstream = Array2::zeros(pm.theta.raw_dim());
    for i in 0..n {
        let w = batch[i].w.sign();
        let v = w * (cfg.beta * ratios[i] - q_ref);
        let u = utility.value(v);
        if !u.is_finite() {
            return Err(Error::Numerical(format!(
                "utility term {i} is {u}: t = {}, log-ratio = {}, Q_ref = {q_ref}, v = {v}",
                sb.ts[i], ratios[i]
            )));
        }
        loss -= scale * u;
        // dL/dr_i, then through μ_θ = (x_t - k ε̂)/√α.
        let dl_dr = -scale * utility.derivative(v) * w * cfg.beta;
        let t = sb.ts[i];
        ratio_to_eps_grad(
            dl_dr,
            schedule.eps_coef(t),
            sigma(i),
            sb.x_prev.row(i),
            pm.theta.row(i),
            upstream.row_mut(i),
        );
    }
    let grads = theta.backward(&pm.cache, upstream.view())?;
    check_grads(&grads, "kto")?;
    Ok(AlignLoss {
        loss,
        grads,
        q_ref,
        mean_log_ratio: ratios.iter().sum::<f64>() * scale,
    })
}

/// Writes `dL/dε̂ = dL/dr · (-k/σ²)(a - μ_θ)` given `dL/dr`.
fn ratio_to_eps_grad(
    dl_dr: f64,
    eps_coef: f64,
    sigma: f64,
    action: ArrayView1<'_, f64>,
    mu_theta: ArrayView1<'_, f64>,
    mut out: ArrayViewMut1<'_, f64>,
) {
    let c = -dl_dr * eps_coef / (sigma * sigma);
    for ((o, a), m) in out.iter_mut().zip(action).zip(mu_theta) {
        *o = c * (a - m);
    }
}

fn check_grads(grads: &DenoiserGrads, what: &str) -> Result<()> {
    use crate::nn::Params;
    match grads.first_non_finite() {
        Some(name) => Err(Error::Numerical(format!("{what} gradient is non-finite in {name}"))),
        None => Ok(()),
    }
}

/// Step contexts for winner and loser of each pair: shared `t`, independent noise.
pub fn draw_pair_contexts<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    pairs: &[(Point, Point)],
    rng: &mut R,
) -> (Vec<StepContext>, Vec<StepContext>) {
    use rand_distr::{Distribution, StandardNormal};
    let noise = |rng: &mut R| -> [f64; 2] { [StandardNormal.sample(rng), StandardNormal.sample(rng)] };
    let mut winners = Vec::with_capacity(pairs.len());
    let mut losers = Vec::with_capacity(pairs.len());
    for (xw, xl) in pairs {
        let t = rng.random_range(1..=schedule.steps());
        let (ew, zw, el, zl) = (noise(rng), noise(rng), noise(rng), noise(rng));
        winners.push(StepContext::from_noise(schedule, xw, t, &ew, &zw).expect("t in range"));
        losers.push(StepContext::from_noise(schedule, xl, t, &el, &zl).expect("t in range"));
    }
    (winners, losers)
}

pub fn dpo_pair_loss<R: Rng + ?Sized>(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    pairs: &[(Point, Point)],
    beta: f64,
    rng: &mut R,
) -> Result<AlignLoss> {
    let (w, l) = draw_pair_contexts(&theta.schedule, pairs, rng);
    dpo_pair_loss_on(theta, reference, &w, &l, beta)
}

/// `-(1/B) Σ log σ(β (r_w - r_l))` on fixed winner/loser contexts.
pub fn dpo_pair_loss_on(
    theta: &DenoiserModel,
    reference: &DenoiserModel,
    winners: &[StepContext],
    losers: &[StepContext],
    beta: f64,
) -> Result<AlignLoss> {
    theta.check_compatible(reference)?;
    let n = winners.len();
    if n == 0 {
        return Err(Error::usage("no preference pairs"));
    }
    if losers.len() != n {
        return Err(Error::usage(format!("{n} winners but {} losers", losers.len())));
    }
    let all: Vec<StepContext> = winners.iter().chain(losers).cloned().collect();
    let sb = StepBatch::from_contexts(&all);
    let pm = policy_means(theta, reference, sb.x_t.view(), &sb.ts, None)?;
    let schedule = &theta.schedule;
    let ratios: Vec<f64> = (0..2 * n)
        .map(|i| {
            sq_log_ratio(
                sb.x_prev.row(i),
                pm.theta.row(i),
                pm.reference.row(i),
                schedule.sigma(sb.ts[i]),
            )
        })
        .collect();

    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut upstream = Array2::zeros(pm.theta.raw_dim());
    for i in 0..n {
        let margin = beta * (ratios[i] - ratios[n + i]);
        let term = softplus(-margin);
        if !term.is_finite() {
            return Err(Error::Numerical(format!(
                "pair {i}: t = {}, winner log-ratio = {}, loser log-ratio = {}",
                sb.ts[i],
                ratios[i],
                ratios[n + i]
            )));
        }
        loss += scale * term;
        let dl_dw = -scale * beta * sigmoid(-margin);
        for (row, dl_dr) in [(i, dl_dw), (n + i, -dl_dw)] {
            let t = sb.ts[row];
            ratio_to_eps_grad(
                dl_dr,
                schedule.eps_coef(t),
                schedule.sigma(t),
                sb.x_prev.row(row),
                pm.theta.row(row),
                upstream.row_mut(row),
            );
        }
    }
    let grads = theta.backward(&pm.cache, upstream.view())?;
    check_grads(&grads, "dpo_pair")?;
    Ok(AlignLoss {
        loss,
        grads,
        q_ref: 0.0,
        mean_log_ratio: ratios.iter().sum::<f64>() / (2 * n) as f64,
    })
}

fn points(batch: &[LabeledSample]) -> Array2<f64> {
    Array2::from_shape_fn((batch.len(), 2), |(i, k)| batch[i].x0[k])
}

/// Denoising loss on a batch that must contain only desirable samples.
pub fn sft_loss<R: Rng + ?Sized>(theta: &DenoiserModel, batch: &[LabeledSample], rng: &mut R) -> Result<LossOutput> {
    if let Some(i) = batch.iter().position(|s| s.w == Label::Undesirable) {
        return Err(Error::usage(format!(
            "sft batch holds an undesirable sample at position {i}"
        )));
    }
    ddpm_loss_cond(theta, points(batch).view(), None, rng)
}

/// Denoising loss on every sample, conditioned on `good`/`bad` by its label.
pub fn csft_loss<R: Rng + ?Sized>(theta: &DenoiserModel, batch: &[LabeledSample], rng: &mut R) -> Result<LossOutput> {
    if theta.cond_table.is_none() {
        return Err(Error::config("csft needs a model with a condition table"));
    }
    let conds: Vec<Cond> = batch
        .iter()
        .map(|s| match s.w {
            Label::Desirable => Cond::Good,
            Label::Undesirable => Cond::Bad,
        })
        .collect();
    ddpm_loss_cond(theta, points(batch).view(), Some(&conds), rng)
}
