//! End-to-end acceptance checks, one test per criterion.
//!
//! Each test writes a single `criterion N ... PASS|FAIL` line straight to stderr,
//! past the test harness capture, and then asserts. The 20k-step pretrained model is built once and
//! shared by the criteria that need it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use dkto_cli::commands::{cmd_pretrain, run_arm, RunOutcome};
use dkto_cli::RunConfig;
use dkto_core::alignment::{
    biased_batch, clamped_kl, csft_loss, dpo_pair_loss_on, draw_contexts, draw_pair_contexts, kl_reference,
    kto_loss_on, mismatched, sft_loss, step_log_ratio, step_log_ratio_sq, utility_derivative, utility_value,
    AlignmentConfig, KtoOptions, StepContext, Utility, UtilityKind,
};
use dkto_core::checkpoint::Checkpoint;
use dkto_core::datasets::{
    moments, partition_at_least_once, partition_win_only, BinaryFeedbackRecord, Label, LabeledSample, Point,
    PreferencePairRecord,
};
use dkto_core::ddpm::{ddpm_loss, reverse_step_mean, sample, DenoiserGrads, DenoiserModel, ModelConfig, ScheduleSpec};
use dkto_core::nn::Params;
use dkto_core::rng::seeded;
use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::Rng;

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    let line = format!(
        "criterion {n} {name}: {} ({detail})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

struct Pretrained {
    _dir: tempfile::TempDir,
    ckpt: PathBuf,
    model: DenoiserModel,
    final_loss: f64,
}

fn pretrained() -> &'static Pretrained {
    static CELL: OnceLock<Pretrained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_pretrain(&RunConfig::default(), dir.path()).unwrap();
        let model = Checkpoint::load(&out.checkpoint).unwrap().model;
        Pretrained {
            ckpt: out.checkpoint,
            model,
            final_loss: out.final_loss.unwrap(),
            _dir: dir,
        }
    })
}

// ---------------------------------------------------------------------------

const KT_WIN_FLOOR: f64 = 0.85;
const RS_SFT_WIN_GAP: f64 = 0.10;

#[test]
fn criterion_1_utility_comparison_on_the_toy_suite() {
    let pre = pretrained();
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig::default();
    let arms = ["sft", "loss_averse", "risk_seeking", "kahneman_tversky"];
    let results: Vec<(&str, Result<RunOutcome, String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = arms
            .iter()
            .map(|&arm| {
                let cfg = base.with("objective", arm).unwrap();
                let out = dir.path().join(arm);
                let ckpt = &pre.ckpt;
                s.spawn(move || (arm, run_arm(&cfg, ckpt, &out).map_err(|e| e.to_string())))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut win = BTreeMap::new();
    let mut dist_d = BTreeMap::new();
    for (arm, res) in &results {
        match res {
            Ok(run) => {
                println!(
                    "  {arm:<17} win {:.4}  score {:8.4}  dist_d {:.4}  dist_u {:.4}  mean ({:.3}, {:.3})",
                    run.report.win_fraction,
                    run.report.desirable_score_mean,
                    run.report.mean_dist_desirable,
                    run.report.mean_dist_undesirable,
                    run.report.sample_mean[0],
                    run.report.sample_mean[1]
                );
                win.insert(*arm, run.report.win_fraction);
                dist_d.insert(*arm, run.report.mean_dist_desirable);
            }
            Err(e) => println!("  {arm:<17} failed: {e}"),
        }
    }
    let kt = win.get("kahneman_tversky").copied();
    let a = kt.is_some() && win.len() == arms.len() && win.values().all(|&w| kt.unwrap() >= w);
    let b = matches!(
        (dist_d.get("loss_averse"), dist_d.get("kahneman_tversky")),
        (Some(la), Some(kt)) if la > kt
    );
    let c = matches!(
        (win.get("risk_seeking"), win.get("sft")),
        (Some(rs), Some(sft)) if (rs - sft).abs() <= RS_SFT_WIN_GAP
    );
    let d = kt.is_some_and(|w| w >= KT_WIN_FLOOR);
    let detail = format!("a={a} b={b} c={c} d={d}");
    verdict(1, "utility comparison", a && b && c && d, &detail);
    assert!(a && b && c && d, "{detail}; win {win:?}; dist_d {dist_d:?}");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_2_pretrained_cloud_matches_the_pretraining_gaussian() {
    let pre = pretrained();
    let cloud = sample(&pre.model, 3500, 0, None).unwrap();
    let points: Vec<Point> = cloud.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let (mean, var) = moments(&points);
    let mean_ok = (mean[0] - 0.5).abs() <= 0.03 && (mean[1] - 0.8).abs() <= 0.03;
    let var_ok = var.iter().all(|v| (v - 0.04).abs() <= 0.3 * 0.04);
    let detail = format!(
        "mean ({:.4}, {:.4}), variance ({:.4}, {:.4}), final loss {:.4}",
        mean[0], mean[1], var[0], var[1], pre.final_loss
    );
    verdict(2, "pretraining fidelity", mean_ok && var_ok, &detail);
    assert!(mean_ok && var_ok, "{detail}");
}

// ---------------------------------------------------------------------------

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-4;
const FD_PROBES: usize = 100;
const FD_SEEDS: [u64; 5] = [11, 22, 33, 44, 55];

fn small_model(seed: u64, conditional: bool) -> DenoiserModel {
    let cfg = ModelConfig {
        hidden: vec![16, 16],
        time_embed_dim: 8,
        conditional,
        ..ModelConfig::default()
    };
    let mut m = DenoiserModel::init(&cfg, &ScheduleSpec::default(), &mut seeded(seed)).unwrap();
    if let Some(t) = m.cond_table.as_mut() {
        let mut rng = seeded(seed ^ 0xc0de);
        t.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    m
}

fn perturbed(m: &DenoiserModel, scale: f64, seed: u64) -> DenoiserModel {
    let mut out = m.clone();
    let mut rng = seeded(seed);
    for (_, t) in out.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.random_range(-scale..scale));
    }
    out
}

fn mixed_batch(seed: u64, n: usize) -> Vec<LabeledSample> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|i| {
            let w = if i % 3 == 0 {
                Label::Undesirable
            } else {
                Label::Desirable
            };
            let y = if w == Label::Desirable { 0.8 } else { 0.6 };
            LabeledSample::new([0.3 + rng.random_range(-0.1..0.1), y + rng.random_range(-0.1..0.1)], w)
        })
        .collect()
}

/// Worst relative error over `FD_PROBES` random parameters.
fn fd_worst<F>(theta: &DenoiserModel, seed: u64, loss: F) -> f64
where
    F: Fn(&DenoiserModel) -> (f64, DenoiserGrads),
{
    let analytic = loss(theta).1.flatten();
    assert_eq!(analytic.len(), theta.num_params());
    let mut worst: f64 = 0.0;
    for idx in sample_indices(&mut seeded(seed), theta.num_params(), FD_PROBES) {
        let mut plus = theta.clone();
        *plus.scalar_mut(idx).unwrap() += FD_STEP;
        let mut minus = theta.clone();
        *minus.scalar_mut(idx).unwrap() -= FD_STEP;
        let fd = (loss(&plus).0 - loss(&minus).0) / (2.0 * FD_STEP);
        let a = analytic[idx];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    worst
}

#[test]
fn criterion_3_every_loss_matches_finite_differences() {
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut record = |name: &str, w: f64| {
        let slot = worst.entry(name.to_owned()).or_insert(0.0);
        *slot = slot.max(w);
    };
    for seed in FD_SEEDS {
        let b = mixed_batch(seed, 12);

        let theta = small_model(seed, false);
        let x0 = Array2::from_shape_fn((b.len(), 2), |(i, k)| b[i].x0[k]);
        record(
            "ddpm",
            fd_worst(&theta, seed, |m| {
                let out = ddpm_loss(m, x0.view(), &mut seeded(seed + 1)).unwrap();
                (out.loss, out.grads)
            }),
        );

        let reference = small_model(seed, false);
        let theta = perturbed(&reference, 0.05, seed + 7);
        let contexts = draw_contexts(&theta.schedule, &b, &mut seeded(seed + 2));
        for kind in UtilityKind::ALL {
            let cfg = AlignmentConfig {
                utility: kind,
                batch_size: b.len(),
                kl_batch: b.len(),
                ..AlignmentConfig::default()
            };
            // Q_ref is a constant of the objective, frozen at its value for theta.
            let q = kto_loss_on(&theta, &reference, &b, &contexts, &cfg, KtoOptions::default())
                .unwrap()
                .q_ref;
            let opts = KtoOptions {
                fixed_q_ref: Some(q),
                ..Default::default()
            };
            record(
                &format!("kto/{}", kind.name()),
                fd_worst(&theta, seed, |m| {
                    let out = kto_loss_on(m, &reference, &b, &contexts, &cfg, opts).unwrap();
                    (out.loss, out.grads)
                }),
            );
        }

        let pairs: Vec<(Point, Point)> = b.chunks(2).map(|c| (c[0].x0, c[1].x0)).collect();
        let (w, l) = draw_pair_contexts(&theta.schedule, &pairs, &mut seeded(seed + 4));
        record(
            "dpo_pair",
            fd_worst(&theta, seed, |m| {
                let out = dpo_pair_loss_on(m, &reference, &w, &l, 50.0).unwrap();
                (out.loss, out.grads)
            }),
        );

        let good: Vec<_> = b.iter().copied().filter(|s| s.w == Label::Desirable).collect();
        let plain = small_model(seed, false);
        record(
            "sft",
            fd_worst(&plain, seed, |m| {
                let out = sft_loss(m, &good, &mut seeded(seed + 5)).unwrap();
                (out.loss, out.grads)
            }),
        );

        let conditional = small_model(seed, true);
        record(
            "csft",
            fd_worst(&conditional, seed, |m| {
                let out = csft_loss(m, &b, &mut seeded(seed + 6)).unwrap();
                (out.loss, out.grads)
            }),
        );
    }
    let ok = worst.len() == 7 && worst.values().all(|&w| w < FD_TOL);
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(3, "gradient suite", ok, &format!("worst relative error: {detail}"));
    assert!(ok, "{detail}");
}

// ---------------------------------------------------------------------------

/// A utility offset by a constant, with the same derivative.
struct Shifted(UtilityKind, f64);

impl Utility for Shifted {
    fn value(&self, v: f64) -> f64 {
        utility_value(self.0, v) + self.1
    }
    fn derivative(&self, v: f64) -> f64 {
        utility_derivative(self.0, v)
    }
}

#[test]
fn criterion_4_utility_properties() {
    let grid: Vec<f64> = (-20_000..=20_000).map(|k| k as f64 * 1e-3).collect();
    let mut failures = Vec::new();
    for kind in UtilityKind::ALL {
        let name = kind.name();
        let u: Vec<f64> = grid.iter().map(|&v| utility_value(kind, v)).collect();
        if utility_value(kind, 0.0) != 0.0 {
            failures.push(format!("{name}: U(0) = {}", utility_value(kind, 0.0)));
        }
        if let Some(i) = (1..u.len()).find(|&i| u[i] <= u[i - 1]) {
            failures.push(format!("{name}: not increasing at v = {}", grid[i]));
        }
        // Second differences are compared against the rounding error of the values.
        let tol = 8.0 * f64::EPSILON * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut pos = false;
        let mut neg = false;
        for i in 1..u.len() - 1 {
            let d2 = u[i + 1] - 2.0 * u[i] + u[i - 1];
            let v = grid[i];
            let bad = match kind {
                UtilityKind::LossAverse => d2 > tol,
                UtilityKind::RiskSeeking => d2 < -tol,
                UtilityKind::KahnemanTversky => (v < 0.0 && d2 < -tol) || (v > 0.0 && d2 > tol),
            };
            if bad {
                failures.push(format!("{name}: wrong curvature at v = {v} ({d2:e})"));
                break;
            }
            pos |= v < 0.0 && d2 > tol;
            neg |= v > 0.0 && d2 < -tol;
        }
        if kind == UtilityKind::KahnemanTversky && !(pos && neg) {
            failures.push(format!("{name}: curvature does not change sign at 0"));
        }
        let h = 1e-5;
        let worst = grid
            .iter()
            .step_by(10)
            .map(|&v| {
                let fd = (utility_value(kind, v + h) - utility_value(kind, v - h)) / (2.0 * h);
                (fd - utility_derivative(kind, v)).abs()
            })
            .fold(0.0f64, f64::max);
        if worst >= 1e-8 {
            failures.push(format!("{name}: derivative off by {worst:e}"));
        }
    }

    // Shifting U by a constant leaves every parameter gradient bit-identical.
    let reference = small_model(3, false);
    let theta = perturbed(&reference, 0.05, 4);
    let b = mixed_batch(5, 16);
    let contexts = draw_contexts(&theta.schedule, &b, &mut seeded(6));
    for kind in UtilityKind::ALL {
        let cfg = AlignmentConfig {
            utility: kind,
            batch_size: b.len(),
            kl_batch: b.len(),
            ..AlignmentConfig::default()
        };
        let base = kto_loss_on(&theta, &reference, &b, &contexts, &cfg, KtoOptions::default()).unwrap();
        let shifted_u = Shifted(kind, 7.3);
        let opts = KtoOptions {
            utility: Some(&shifted_u),
            ..Default::default()
        };
        let shifted = kto_loss_on(&theta, &reference, &b, &contexts, &cfg, opts).unwrap();
        let same = base
            .grads
            .flatten()
            .iter()
            .zip(shifted.grads.flatten())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            failures.push(format!("{}: gradients change under a constant shift", kind.name()));
        }
        if ((base.loss - shifted.loss) - 7.3).abs() > 1e-9 {
            failures.push(format!("{}: loss did not shift by the constant", kind.name()));
        }
    }
    let ok = failures.is_empty();
    verdict(
        4,
        "utility properties",
        ok,
        &if ok { "all kinds".into() } else { failures.join("; ") },
    );
    assert!(ok, "{failures:?}");
}

// ---------------------------------------------------------------------------

fn random_context(m: &DenoiserModel, rng: &mut impl Rng) -> StepContext {
    let x0 = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
    StepContext::draw(&m.schedule, &x0, rng)
}

#[test]
fn criterion_5_implicit_reward_oracle() {
    let mut rng = seeded(500);
    let mut worst: f64 = 0.0;
    let mut antisym = true;
    let mut identity = true;
    for k in 0..1000u64 {
        let reference = small_model(k % 7, false);
        let theta = perturbed(&reference, 0.1, k);
        let ctx = random_context(&theta, &mut rng);
        let dens = step_log_ratio(&theta, &reference, &ctx, None).unwrap();
        let sq = step_log_ratio_sq(&theta, &reference, &ctx, None).unwrap();
        worst = worst.max((dens - sq).abs() / sq.abs().max(1.0));
        antisym &= step_log_ratio_sq(&reference, &theta, &ctx, None).unwrap() == -sq;
        identity &= step_log_ratio_sq(&theta, &theta, &ctx, None).unwrap() == 0.0
            && step_log_ratio(&theta, &theta, &ctx, None).unwrap() == 0.0;
    }
    let model = small_model(1, false);
    let pairs: Vec<(Point, Point)> = (0..8)
        .map(|i| ([0.1 * i as f64, 0.8], [0.3, 0.05 * i as f64]))
        .collect();
    let (w, l) = draw_pair_contexts(&model.schedule, &pairs, &mut seeded(9));
    let dpo = dpo_pair_loss_on(&model, &model, &w, &l, 50.0).unwrap().loss;
    let log2 = dpo == std::f64::consts::LN_2;
    let ok = worst <= 1e-10 && antisym && identity && log2;
    let detail = format!(
        "density vs squared path {worst:.1e}, antisymmetric {antisym}, zero at identity {identity}, dpo at identity {dpo}"
    );
    verdict(5, "implicit reward", ok, &detail);
    assert!(ok, "{detail}");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_6_reference_point_contract() {
    let mut rng = seeded(600);
    let mut nonneg = true;
    let mut zero_at_identity = true;
    for k in 0..1000u64 {
        let reference = small_model(k % 5, false);
        let theta = perturbed(&reference, 0.1, k);
        let ctxs: Vec<_> = (0..4).map(|_| random_context(&theta, &mut rng)).collect();
        let mm = mismatched(&ctxs);
        let scaling = k % 2 == 0;
        nonneg &= kl_reference(&theta, &reference, &mm, 50.0, scaling).unwrap() >= 0.0;
        zero_at_identity &= kl_reference(&theta, &theta, &mm, 50.0, scaling).unwrap() == 0.0;
    }

    // Every mismatched state is identical and every action sits on μ_θ, so each
    // log-ratio equals c = ‖μ_θ - μ_ref‖² / 2σ².
    let reference = small_model(4, false);
    let theta = perturbed(&reference, 0.05, 11);
    let t = 40;
    let x_t = vec![0.1, 0.2];
    let mu_theta = reverse_step_mean(&theta, &x_t, t, None).unwrap();
    let mu_ref = reverse_step_mean(&reference, &x_t, t, None).unwrap();
    let ctxs: Vec<_> = (0..6)
        .map(|_| StepContext {
            x0: vec![0.0, 0.0],
            t,
            eps: vec![0.0, 0.0],
            x_t: x_t.clone(),
            x_prev: mu_theta.clone(),
        })
        .collect();
    let sigma = theta.schedule.sigma(t);
    let c: f64 = mu_theta.iter().zip(&mu_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * sigma * sigma);
    let beta = 50.0;
    let q = kl_reference(&theta, &reference, &mismatched(&ctxs), beta, true).unwrap();
    let constant = c > 0.0 && (q - beta * c).abs() <= 1e-12 * q && clamped_kl(&[c; 6], beta, true).unwrap() == beta * c;

    // Gradients are unchanged when Q_ref is replaced by its numeric value.
    let b = mixed_batch(7, 16);
    let contexts = draw_contexts(&theta.schedule, &b, &mut seeded(8));
    let mut detached = true;
    for scaling in [false, true] {
        let cfg = AlignmentConfig {
            batch_size: b.len(),
            kl_batch: b.len(),
            kl_beta_scaling: scaling,
            ..AlignmentConfig::default()
        };
        let live = kto_loss_on(&theta, &reference, &b, &contexts, &cfg, KtoOptions::default()).unwrap();
        let opts = KtoOptions {
            fixed_q_ref: Some(live.q_ref),
            ..Default::default()
        };
        let frozen = kto_loss_on(&theta, &reference, &b, &contexts, &cfg, opts).unwrap();
        detached &= live.loss.to_bits() == frozen.loss.to_bits()
            && live
                .grads
                .flatten()
                .iter()
                .zip(frozen.grads.flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let ok = nonneg && zero_at_identity && constant && detached;
    let detail = format!(
        "non-negative {nonneg}, zero at identity {zero_at_identity}, beta*c fixture {constant}, detached {detached}"
    );
    verdict(6, "reference point", ok, &detail);
    assert!(ok, "{detail}");
}

// ---------------------------------------------------------------------------

/// Labels recounted from scratch: sets of winners and losers over all ids.
fn brute_force(pairs: &[PreferencePairRecord]) -> (BTreeSet<String>, BTreeSet<String>, BTreeSet<String>) {
    let mut all = BTreeSet::new();
    let mut won = BTreeSet::new();
    let mut lost = BTreeSet::new();
    for p in pairs {
        all.insert(p.winner_id.clone());
        all.insert(p.loser_id.clone());
        won.insert(p.winner_id.clone());
        lost.insert(p.loser_id.clone());
    }
    let at_least_once: BTreeSet<String> = won.clone();
    let win_only: BTreeSet<String> = won.difference(&lost).cloned().collect();
    (all, at_least_once, win_only)
}

fn split(records: &[BinaryFeedbackRecord]) -> (BTreeSet<String>, BTreeSet<String>, usize) {
    let pos = records
        .iter()
        .filter(|r| r.w == Label::Desirable)
        .map(|r| r.sample_id.clone())
        .collect();
    let all = records.iter().map(|r| r.sample_id.clone()).collect();
    (all, pos, records.len())
}

#[test]
fn criterion_7_partition_rules_match_a_brute_force_recount() {
    let mut rng = seeded(700);
    let mut mismatches = 0;
    let mut not_subset = 0;
    for _ in 0..200 {
        let n_samples = rng.random_range(2..=50);
        let n_pairs = rng.random_range(1..=120);
        let pairs: Vec<_> = (0..n_pairs)
            .map(|k| {
                let a = rng.random_range(0..n_samples);
                let mut b = rng.random_range(0..n_samples - 1);
                if b >= a {
                    b += 1;
                }
                PreferencePairRecord::new(format!("q{k}"), format!("s{a}"), format!("s{b}")).unwrap()
            })
            .collect();
        let (all, alo_expected, wo_expected) = brute_force(&pairs);
        let (alo_all, alo_pos, alo_len) = split(&partition_at_least_once(&pairs));
        let (wo_all, wo_pos, wo_len) = split(&partition_win_only(&pairs));
        let ok = alo_all == all
            && wo_all == all
            && alo_len == all.len()
            && wo_len == all.len()
            && alo_pos == alo_expected
            && wo_pos == wo_expected;
        mismatches += usize::from(!ok);
        not_subset += usize::from(!wo_pos.is_subset(&alo_pos));
    }
    let ok = mismatches == 0 && not_subset == 0;
    let detail = format!("200 fixtures, {mismatches} mismatches, {not_subset} subset violations");
    verdict(7, "partition oracle", ok, &detail);
    assert!(ok, "{detail}");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_8_biased_batches_hit_gamma() {
    let data: Vec<_> = (0..10)
        .map(|i| {
            LabeledSample::new(
                [i as f64, 0.0],
                if i < 3 { Label::Desirable } else { Label::Undesirable },
            )
        })
        .collect();
    let batches = 10_000;
    let batch_size = 16;
    let mut parts = Vec::new();
    let mut ok = true;
    for gamma in [0.5, 0.8, 1.0] {
        let mut rng = seeded(800);
        let mut desirable = 0usize;
        for _ in 0..batches {
            desirable += biased_batch(&data, gamma, batch_size, &mut rng)
                .unwrap()
                .iter()
                .filter(|s| s.w == Label::Desirable)
                .count();
        }
        let n = (batches * batch_size) as f64;
        let frac = desirable as f64 / n;
        let sd = (gamma * (1.0 - gamma) / n).sqrt();
        let within = (frac - gamma).abs() <= 3.0 * sd;
        ok &= within;
        parts.push(format!("gamma {gamma}: {frac:.5} (3 sd {:.5})", 3.0 * sd));
    }
    let detail = parts.join(", ");
    verdict(8, "sampler bias", ok, &detail);
    assert!(ok, "{detail}");
}

// ---------------------------------------------------------------------------

fn dkto(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_dkto"))
        .args(args)
        .env_remove("DKTO_CONFIG")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "dkto {args:?} exited with {}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline(dir: &Path) -> Vec<u8> {
    let d = |name: &str| dir.join(name).to_str().unwrap().to_owned();
    let config = d("run.toml");
    std::fs::write(
        &config,
        "seed = 17\nobjective = \"kto\"\n[pretrain]\nsteps = 1500\n[align]\nsteps = 100\nbatch_size = 128\nkl_batch = 128\n",
    )
    .unwrap();
    dkto(&["--config", &config, "pretrain", "--out", &d("pre")]);
    dkto(&[
        "--config",
        &config,
        "align",
        "--ckpt",
        &d("pre/pretrain.ckpt.json"),
        "--out",
        &d("kto"),
    ]);
    dkto(&[
        "--config",
        &config,
        "sample",
        "--ckpt",
        &d("kto/aligned.ckpt.json"),
        "--out",
        &d("cloud.csv"),
    ]);
    dkto(&[
        "--config",
        &config,
        "eval",
        "--cloud",
        &d("cloud.csv"),
        "--out",
        &d("metrics.json"),
    ]);
    std::fs::read(dir.join("metrics.json")).unwrap()
}

#[test]
fn criterion_9_pipeline_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = std::thread::scope(|s| {
        let ha = s.spawn(|| pipeline(a.path()));
        let hb = s.spawn(|| pipeline(b.path()));
        (ha.join().unwrap(), hb.join().unwrap())
    });
    let ckpt = |d: &Path| std::fs::read(d.join("kto/aligned.ckpt.json")).unwrap();
    let same = ra == rb && ckpt(a.path()) == ckpt(b.path());
    verdict(9, "determinism", same, &format!("{} byte report", ra.len()));
    assert!(same);
}
