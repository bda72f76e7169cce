use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::losses::{csft_loss, dpo_pair_loss, kto_loss, sft_loss, AlignLoss};
use super::sampling::{biased_batch_from, LabelPools};
use super::utility::UtilityKind;
use super::AlignmentConfig;
use crate::datasets::{Label, LabeledSample, Point};
use crate::ddpm::{DenoiserModel, LossOutput};
use crate::nn::{AdamConfig, AdamState, Params};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Kto(UtilityKind),
    DpoPair,
    Sft,
    Csft,
}

impl Objective {
    /// Accepts `kto` (with `kto_utility`), a utility name, `dpo_pair`, `sft` or `csft`.
    pub fn parse(s: &str, kto_utility: UtilityKind) -> Result<Self> {
        match s {
            "kto" => Ok(Objective::Kto(kto_utility)),
            "dpo_pair" => Ok(Objective::DpoPair),
            "sft" => Ok(Objective::Sft),
            "csft" => Ok(Objective::Csft),
            other => other.parse().map(Objective::Kto).map_err(|_| {
                Error::usage(format!(
                    "unknown objective {other:?} (expected kto|loss_averse|risk_seeking|kahneman_tversky|dpo_pair|sft|csft)"
                ))
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Kto(k) => k.name(),
            Objective::DpoPair => "dpo_pair",
            Objective::Sft => "sft",
            Objective::Csft => "csft",
        }
    }

    /// Whether the trained model is sampled with the `good` condition.
    pub fn is_conditional(self) -> bool {
        self == Objective::Csft
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of the training log. The reference-point columns are empty for the
/// denoising objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub objective: String,
    pub loss: f64,
    pub q_ref: Option<f64>,
    pub mean_log_ratio: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub ref_checksum_before: String,
    pub ref_checksum_after: String,
    pub desirable_consumed: usize,
    pub undesirable_consumed: usize,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        for row in &self.rows {
            w.serialize(row).map_err(io)?;
        }
        if self.rows.is_empty() {
            w.write_record(["step", "objective", "loss", "q_ref", "mean_log_ratio", "grad_norm"])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Fine-tunes `theta` against the frozen `reference`; see [`align_train_logged`].
pub fn align_train<R: Rng + ?Sized>(
    theta: &mut DenoiserModel,
    reference: &DenoiserModel,
    dataset: &[LabeledSample],
    cfg: &AlignmentConfig,
    objective: Objective,
    rng: &mut R,
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    align_train_logged(theta, reference, dataset, cfg, objective, rng, &mut log)?;
    Ok(log)
}

/// Runs `cfg.steps` Adam steps, appending to `log` as it goes.
///
/// `theta` must start parameter-equal to `reference` (a conditional `theta` may add a
/// condition table). On divergence the error is returned before the offending update,
/// so `theta` holds the last finite parameters and `log` the rows so far.
pub fn align_train_logged<R: Rng + ?Sized>(
    theta: &mut DenoiserModel,
    reference: &DenoiserModel,
    dataset: &[LabeledSample],
    cfg: &AlignmentConfig,
    objective: Objective,
    rng: &mut R,
    log: &mut TrainLog,
) -> Result<()> {
    cfg.validate()?;
    if theta.schedule != reference.schedule || theta.mlp != reference.mlp {
        return Err(Error::config("theta must start as a copy of the reference model"));
    }
    if objective.is_conditional() != theta.cond_table.is_some() {
        return Err(Error::config(format!(
            "objective {objective} {} a condition table on theta",
            if objective.is_conditional() {
                "needs"
            } else {
                "does not use"
            }
        )));
    }
    let pools = LabelPools::new(dataset);
    let needs_undesirable = objective != Objective::Sft;
    if pools.desirable.is_empty() || (needs_undesirable && pools.undesirable.is_empty()) {
        return Err(Error::config(format!(
            "objective {objective} needs {} samples, dataset has {} desirable and {} undesirable",
            if needs_undesirable {
                "desirable and undesirable"
            } else {
                "desirable"
            },
            pools.desirable.len(),
            pools.undesirable.len()
        )));
    }

    log.ref_checksum_before = reference.checksum();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr))?;
    for step in 0..cfg.steps {
        let out = match objective {
            Objective::Kto(utility) => {
                let batch = biased_batch_from(dataset, &pools, cfg.gamma, cfg.batch_size, rng)?;
                count(log, &batch);
                let c = AlignmentConfig { utility, ..cfg.clone() };
                kto_loss(theta, reference, &batch, &c, rng)
            }
            Objective::DpoPair => {
                let pick = |pool: &[usize], rng: &mut R| dataset[pool[rng.random_range(0..pool.len())]].x0;
                let pairs: Vec<(Point, Point)> = (0..cfg.batch_size)
                    .map(|_| (pick(&pools.desirable, rng), pick(&pools.undesirable, rng)))
                    .collect();
                log.desirable_consumed += pairs.len();
                log.undesirable_consumed += pairs.len();
                dpo_pair_loss(theta, reference, &pairs, cfg.beta, rng)
            }
            Objective::Sft => {
                let batch: Vec<LabeledSample> = (0..cfg.batch_size)
                    .map(|_| dataset[pools.desirable[rng.random_range(0..pools.desirable.len())]])
                    .collect();
                count(log, &batch);
                sft_loss(theta, &batch, rng).map(denoising)
            }
            Objective::Csft => {
                let batch = biased_batch_from(dataset, &pools, cfg.gamma, cfg.batch_size, rng)?;
                count(log, &batch);
                csft_loss(theta, &batch, rng).map(denoising)
            }
        }
        .map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(format!("{objective} step {step}: {msg}")),
            other => other,
        })?;
        if !out.loss.is_finite() {
            return Err(Error::Numerical(format!(
                "{objective} step {step}: loss is {}",
                out.loss
            )));
        }
        if let Some(name) = out.grads.first_non_finite() {
            return Err(Error::Numerical(format!(
                "{objective} step {step}: non-finite gradient in {name}"
            )));
        }
        let grad_norm = out.grads.l2_norm();
        let is_denoising = matches!(objective, Objective::Sft | Objective::Csft);
        log.rows.push(LogRow {
            step,
            objective: objective.name().to_owned(),
            loss: out.loss,
            q_ref: (!is_denoising).then_some(out.q_ref),
            mean_log_ratio: (!is_denoising).then_some(out.mean_log_ratio),
            grad_norm,
        });
        adam.step(theta, &out.grads)?;
    }
    log.ref_checksum_after = reference.checksum();
    if log.ref_checksum_after != log.ref_checksum_before {
        return Err(Error::Numerical("reference model changed during training".into()));
    }
    Ok(())
}

fn denoising(out: LossOutput) -> AlignLoss {
    AlignLoss {
        loss: out.loss,
        grads: out.grads,
        q_ref: 0.0,
        mean_log_ratio: 0.0,
    }
}

fn count(log: &mut TrainLog, batch: &[LabeledSample]) {
    for s in batch {
        match s.w {
            Label::Desirable => log.desirable_consumed += 1,
            Label::Undesirable => log.undesirable_consumed += 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::test_support::{small_conditional_model, small_model};
    use crate::rng::seeded;

    fn data() -> Vec<LabeledSample> {
        let mut v: Vec<_> = (0..10)
            .map(|i| LabeledSample::new([0.3, 0.8 + 0.001 * i as f64], Label::Desirable))
            .collect();
        v.extend((0..10).map(|i| LabeledSample::new([0.3, 0.6 + 0.001 * i as f64], Label::Undesirable)));
        v
    }

    fn cfg(steps: usize) -> AlignmentConfig {
        AlignmentConfig {
            steps,
            batch_size: 8,
            kl_batch: 8,
            ..AlignmentConfig::default()
        }
    }

    #[test]
    fn zero_steps_leaves_theta_equal() {
        let reference = small_model(1);
        let mut theta = reference.clone();
        let log = align_train(
            &mut theta,
            &reference,
            &data(),
            &cfg(0),
            Objective::Kto(UtilityKind::KahnemanTversky),
            &mut seeded(1),
        )
        .unwrap();
        assert_eq!(theta, reference);
        assert!(log.rows.is_empty());
        assert_eq!(log.ref_checksum_before, log.ref_checksum_after);
    }

    #[test]
    fn every_objective_runs_and_logs() {
        let reference = small_model(1);
        for obj in [
            Objective::Kto(UtilityKind::LossAverse),
            Objective::Kto(UtilityKind::RiskSeeking),
            Objective::Kto(UtilityKind::KahnemanTversky),
            Objective::DpoPair,
            Objective::Sft,
            Objective::Csft,
        ] {
            let mut theta = if obj == Objective::Csft {
                let mut t = small_conditional_model(1);
                t.mlp = reference.mlp.clone();
                t
            } else {
                reference.clone()
            };
            let log = align_train(&mut theta, &reference, &data(), &cfg(5), obj, &mut seeded(2)).unwrap();
            assert_eq!(log.rows.len(), 5, "{obj}");
            assert!(log.rows.iter().all(|r| r.loss.is_finite() && r.objective == obj.name()));
            assert_ne!(theta.mlp, reference.mlp, "{obj}");
            if obj == Objective::Sft {
                assert_eq!(log.undesirable_consumed, 0);
                assert_eq!(log.desirable_consumed, 40);
            }
        }
    }

    #[test]
    fn reproducible_under_seed() {
        let reference = small_model(1);
        let run = || {
            let mut theta = reference.clone();
            let log = align_train(
                &mut theta,
                &reference,
                &data(),
                &cfg(3),
                Objective::DpoPair,
                &mut seeded(9),
            )
            .unwrap();
            (theta, log)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_theta_not_copied_from_reference() {
        let reference = small_model(1);
        let mut theta = small_model(2);
        let err = align_train(&mut theta, &reference, &data(), &cfg(1), Objective::Sft, &mut seeded(1));
        assert!(matches!(err, Err(Error::Config(_))));
        let mut plain = reference.clone();
        let err = align_train(
            &mut plain,
            &reference,
            &data(),
            &cfg(1),
            Objective::Csft,
            &mut seeded(1),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn objective_names_round_trip() {
        for s in [
            "loss_averse",
            "risk_seeking",
            "kahneman_tversky",
            "dpo_pair",
            "sft",
            "csft",
        ] {
            assert_eq!(Objective::parse(s, UtilityKind::LossAverse).unwrap().name(), s);
        }
        assert_eq!(
            Objective::parse("kto", UtilityKind::RiskSeeking).unwrap(),
            Objective::Kto(UtilityKind::RiskSeeking)
        );
        assert!(matches!(
            Objective::parse("ppo", UtilityKind::LossAverse),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn log_csv_has_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let reference = small_model(1);
        let mut theta = reference.clone();
        let log = align_train(&mut theta, &reference, &data(), &cfg(2), Objective::Sft, &mut seeded(1)).unwrap();
        log.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,objective,loss,q_ref,mean_log_ratio,grad_norm"));
        assert!(lines.next().unwrap().starts_with("0,sft,"));
    }
}
