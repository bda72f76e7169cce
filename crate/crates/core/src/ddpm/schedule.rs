use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters a linear schedule is built from; stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            steps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_linear_schedule(self.steps, self.beta_start, self.beta_end)
    }
}

/// Precomputed DDPM constants for steps `1..=T`.
///
/// Accessors take the step `t` itself, not a zero-based index; `t = 0` denotes clean
/// data and only has `alpha_bar = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_coef_x0: Vec<f64>,
    posterior_coef_xt: Vec<f64>,
    posterior_variance: Vec<f64>,
    sigma: Vec<f64>,
}

/// Linearly spaced `β_t` from `beta_start` (t = 1) to `beta_end` (t = T).
pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::config(format!("schedule needs T >= 2, got {steps}")));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::config(format!(
            "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
        .collect();
    Ok(NoiseSchedule::from_betas(
        ScheduleSpec {
            steps,
            beta_start,
            beta_end,
        },
        beta,
    ))
}

impl NoiseSchedule {
    fn from_betas(spec: ScheduleSpec, beta: Vec<f64>) -> Self {
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let n = beta.len();
        let mut posterior_coef_x0 = Vec::with_capacity(n);
        let mut posterior_coef_xt = Vec::with_capacity(n);
        let mut posterior_variance = Vec::with_capacity(n);
        for i in 0..n {
            let ab = alpha_bar[i];
            let ab_prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
            posterior_coef_x0.push(beta[i] * ab_prev.sqrt() / (1.0 - ab));
            posterior_coef_xt.push(alpha[i].sqrt() * (1.0 - ab_prev) / (1.0 - ab));
            posterior_variance.push(beta[i] * (1.0 - ab_prev) / (1.0 - ab));
        }
        // β̃_1 is exactly zero; step 1 borrows β̃_2 so every reverse density is proper.
        let sigma = (0..n)
            .map(|i| posterior_variance[if i == 0 { 1 } else { i }].sqrt())
            .collect();
        Self {
            spec,
            beta,
            alpha,
            alpha_bar,
            posterior_coef_x0,
            posterior_coef_xt,
            posterior_variance,
            sigma,
        }
    }

    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    #[inline]
    fn idx(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.steps(), "step {t} outside 1..={}", self.steps());
        t - 1
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::usage(format!("step {t} outside 1..={}", self.steps())))
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[self.idx(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[self.idx(t)]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[self.idx(t)]
        }
    }

    pub fn posterior_coef_x0(&self, t: usize) -> f64 {
        self.posterior_coef_x0[self.idx(t)]
    }

    pub fn posterior_coef_xt(&self, t: usize) -> f64 {
        self.posterior_coef_xt[self.idx(t)]
    }

    /// Unclipped forward-posterior variance `β̃_t` (zero at t = 1).
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_variance[self.idx(t)]
    }

    /// Reverse-step standard deviation shared by every policy density.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[self.idx(t)]
    }

    /// Coefficient of `ε` in the reverse mean: `β_t / (√(1-ᾱ_t) √α_t)`.
    pub fn eps_coef(&self, t: usize) -> f64 {
        self.beta(t) / ((1.0 - self.alpha_bar(t)).sqrt() * self.alpha(t).sqrt())
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_products() {
        let s = make_linear_schedule(2, 0.1, 0.1).unwrap();
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(make_linear_schedule(1, 0.1, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.0, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.3, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn default_schedule_invariants() {
        let s = ScheduleSpec::default().build().unwrap();
        for t in 1..=s.steps() {
            assert!(s.alpha_bar(t) > 0.0 && s.alpha_bar(t) <= 1.0);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert!(s.sigma(t) > 0.0);
            // Zero-noise limit: the posterior mean maps √ᾱ_t·x0 to √ᾱ_{t-1}·x0.
            let recon =
                (s.posterior_coef_x0(t) + s.posterior_coef_xt(t) * s.alpha_bar(t).sqrt()) / s.alpha_bar(t - 1).sqrt();
            assert!((recon - 1.0).abs() < 1e-12, "t={t}: {recon}");
        }
        assert_eq!(s.posterior_variance(1), 0.0);
        assert_eq!(s.sigma(1), s.sigma(2));
    }

    #[test]
    fn default_final_alpha_bar_matches_independent_product() {
        // Computed beforehand with an independent script:
        // numpy.prod(1 - numpy.linspace(1e-4, 0.02, 100))
        let s = ScheduleSpec::default().build().unwrap();
        assert!((s.alpha_bar(100) - DEFAULT_ALPHA_BAR_T).abs() < 1e-12);
    }

    const DEFAULT_ALPHA_BAR_T: f64 = 0.3635632480554922;
}
