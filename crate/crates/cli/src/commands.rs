use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dkto_core::alignment::{align_train_logged, Objective, TrainLog};
use dkto_core::checkpoint::Checkpoint;
use dkto_core::datasets::{
    label_samples, make_suite, read_points, synthetic_preferences, write_points, LabeledSample, Point, SuiteParams,
};
use dkto_core::ddpm::{pretrain, sample, Cond, DenoiserModel};
use dkto_core::eval::{
    compare_runs, comparison_csv, emit_scatter, eval_cloud, utility_table, MetricsReport, Reference,
};
use dkto_core::rng::substream;
use dkto_core::{Error, Result};
use ndarray::Array2;

use crate::config::RunConfig;
use crate::manifest::RunManifest;

pub const PRETRAIN_CKPT: &str = "pretrain.ckpt.json";
pub const PRETRAIN_LOSS: &str = "pretrain_loss.csv";
pub const ALIGNED_CKPT: &str = "aligned.ckpt.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const SAMPLES: &str = "samples.csv";
pub const METRICS: &str = "metrics.json";
pub const COMPARISON: &str = "comparison.csv";
pub const SCATTER: &str = "scatter.svg";

/// Losses averaged for the reported final training loss.
const LOSS_TAIL: usize = 500;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn tail_mean(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> Option<f64> {
    let n = values.len().min(LOSS_TAIL);
    (n > 0).then(|| values.rev().take(n).sum::<f64>() / n as f64)
}

/// Runs `body` with a manifest that is written to `out` whether or not it succeeds.
fn with_manifest<T>(
    command: &str,
    cfg: &RunConfig,
    out: &Path,
    body: impl FnOnce(&mut RunManifest) -> Result<T>,
) -> Result<T> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut manifest = RunManifest::start(command, cfg);
    let result = body(&mut manifest);
    let written = manifest.finish(out, result.as_ref().err());
    let value = result?;
    written?;
    Ok(value)
}

/// Feedback-labeled training data for alignment, regenerated from the run seed.
pub fn alignment_data(cfg: &RunConfig) -> Result<Vec<LabeledSample>> {
    let labeled = make_suite(&cfg.data, cfg.seed)?.labeled();
    let Some(rule) = cfg.feedback.source.partition_rule() else {
        return Ok(labeled);
    };
    let table: Vec<(String, Point)> = labeled
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("s{i}"), s.x0))
        .collect();
    let pairs = synthetic_preferences(
        &table,
        cfg.data.desirable_mean,
        cfg.data.undesirable_mean,
        cfg.feedback.pairs,
        &mut substream(cfg.seed, "preferences"),
    )?;
    label_samples(&rule.apply(&pairs), &table)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: PathBuf,
    /// Mean loss over the last steps; `None` when no step was taken.
    pub final_loss: Option<f64>,
}

/// Fits a fresh denoiser to the pretraining Gaussian.
///
/// Writes `pretrain.ckpt.json`, `pretrain_loss.csv` and `manifest.json` into `out`.
pub fn cmd_pretrain(cfg: &RunConfig, out: &Path) -> Result<PretrainOutcome> {
    with_manifest("pretrain", cfg, out, |m| {
        if cfg.model.conditional {
            return Err(Error::Config(
                "pretraining is unconditional; set model.conditional = false".into(),
            ));
        }
        let suite = make_suite(&cfg.data, cfg.seed)?;
        let data = Array2::from_shape_fn((suite.pretrain.len(), 2), |(i, j)| suite.pretrain[i][j]);
        let mut model = DenoiserModel::init(&cfg.model, &cfg.schedule, &mut substream(cfg.seed, "init"))?;
        let losses = pretrain(
            &mut model,
            data.view(),
            &cfg.pretrain,
            &mut substream(cfg.seed, "pretrain"),
        )?;

        let loss_path = out.join(PRETRAIN_LOSS);
        let mut csv = String::from("step,loss\n");
        for (step, loss) in losses.iter().enumerate() {
            csv.push_str(&format!("{step},{loss}\n"));
        }
        std::fs::write(&loss_path, csv).map_err(|e| io_err(&loss_path, e))?;
        m.output("loss", &loss_path);

        let checkpoint = out.join(PRETRAIN_CKPT);
        Checkpoint::new(model, cfg.seed, losses.len() as u64).save(&checkpoint)?;
        m.output("checkpoint", &checkpoint);

        let final_loss = tail_mean(losses.iter().copied());
        if let Some(l) = final_loss {
            m.metrics.insert("final_loss".into(), l);
        }
        m.metrics.insert("steps".into(), losses.len() as f64);
        Ok(PretrainOutcome { checkpoint, final_loss })
    })
}

fn load_reference(ckpt: &Path) -> Result<DenoiserModel> {
    let model = Checkpoint::load(ckpt)?.model;
    if model.cond_table.is_some() {
        return Err(Error::Config(format!(
            "{} is conditional; alignment starts from an unconditional model",
            ckpt.display()
        )));
    }
    Ok(model)
}

fn align_into(cfg: &RunConfig, ckpt: &Path, out: &Path, m: &mut RunManifest) -> Result<(DenoiserModel, TrainLog)> {
    m.input("checkpoint", ckpt);
    let objective = Objective::parse(&cfg.objective, cfg.align.utility)?;
    let reference = load_reference(ckpt)?;
    let dataset = alignment_data(cfg)?;
    let mut theta = reference.clone();
    if objective.is_conditional() {
        theta.cond_table = Some(Array2::zeros((2, theta.embedding.dim)));
    }
    let mut log = TrainLog::default();
    let trained = align_train_logged(
        &mut theta,
        &reference,
        &dataset,
        &cfg.align,
        objective,
        &mut substream(cfg.seed, "align"),
        &mut log,
    );
    // The log is kept on failure: it is the divergence diagnostic.
    let log_path = out.join(TRAIN_LOG);
    log.write_csv(&log_path)?;
    m.output("train_log", &log_path);
    m.metrics
        .insert("desirable_consumed".into(), log.desirable_consumed as f64);
    m.metrics
        .insert("undesirable_consumed".into(), log.undesirable_consumed as f64);
    if let Some(l) = tail_mean(log.rows.iter().map(|r| r.loss)) {
        m.metrics.insert("final_loss".into(), l);
    }
    trained?;

    let checkpoint = out.join(ALIGNED_CKPT);
    Checkpoint::new(theta.clone(), cfg.seed, log.rows.len() as u64).save(&checkpoint)?;
    m.output("checkpoint", &checkpoint);
    Ok((theta, log))
}

#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub checkpoint: PathBuf,
    pub log: TrainLog,
}

/// Fine-tunes the checkpoint at `ckpt` with `cfg.objective`.
///
/// Writes `aligned.ckpt.json`, `train_log.csv` and `manifest.json` into `out`.
pub fn cmd_align(cfg: &RunConfig, ckpt: &Path, out: &Path) -> Result<AlignOutcome> {
    with_manifest("align", cfg, out, |m| {
        let (_, log) = align_into(cfg, ckpt, out, m)?;
        Ok(AlignOutcome {
            checkpoint: out.join(ALIGNED_CKPT),
            log,
        })
    })
}

fn sample_points(model: &DenoiserModel, n: usize, seed: u64, cond: Option<Cond>) -> Result<Vec<Point>> {
    let cond = match (model.cond_table.is_some(), cond) {
        (true, c) => Some(c.unwrap_or(Cond::Good)),
        (false, None) => None,
        (false, Some(_)) => return Err(Error::Usage("--cond needs a conditional checkpoint".into())),
    };
    let cloud = sample(model, n, seed, cond)?;
    Ok(cloud.rows().into_iter().map(|r| [r[0], r[1]]).collect())
}

/// Draws `n` points from a checkpoint into a CSV file. Conditional models default to
/// the `good` condition.
pub fn cmd_sample(ckpt: &Path, n: usize, seed: u64, cond: Option<Cond>, out_csv: &Path) -> Result<Vec<Point>> {
    let model = Checkpoint::load(ckpt)?.model;
    let points = sample_points(&model, n, seed, cond)?;
    write_points(out_csv, &points)?;
    Ok(points)
}

/// Scores a point cloud against the suite's reference Gaussians.
pub fn cmd_eval(cloud_csv: &Path, suite: &SuiteParams, out_json: &Path) -> Result<MetricsReport> {
    let points = read_points(cloud_csv)?;
    let report = eval_cloud(&points, &Reference::from_suite(suite))?;
    report.write_json(out_json)?;
    Ok(report)
}

pub fn cmd_utility_table(v_min: f64, v_max: f64, step: f64, out_csv: &Path) -> Result<()> {
    utility_table(v_min, v_max, step)?.write_csv(out_csv)
}

/// One full arm: align, sample `cfg.sample.n` points, evaluate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub points: Vec<Point>,
    pub log: TrainLog,
}

/// Align, sample and evaluate into `out` under a single manifest.
pub fn run_arm(cfg: &RunConfig, ckpt: &Path, out: &Path) -> Result<RunOutcome> {
    with_manifest("run", cfg, out, |m| {
        let (theta, log) = align_into(cfg, ckpt, out, m)?;
        let points = sample_points(&theta, cfg.sample.n, cfg.seed, None)?;
        let samples = out.join(SAMPLES);
        write_points(&samples, &points)?;
        m.output("samples", &samples);
        let report = eval_cloud(&points, &Reference::from_suite(&cfg.data))?;
        let metrics = out.join(METRICS);
        report.write_json(&metrics)?;
        m.output("metrics", &metrics);
        m.metrics.insert("win_fraction".into(), report.win_fraction);
        m.metrics
            .insert("desirable_score_mean".into(), report.desirable_score_mean);
        Ok(RunOutcome { report, points, log })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Utility,
    Gamma,
    Beta,
    Partition,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Utility => "utility",
            Axis::Gamma => "gamma",
            Axis::Beta => "beta",
            Axis::Partition => "partition",
        }
    }

    /// The config key each value is written to.
    pub fn key(self) -> &'static str {
        match self {
            Axis::Utility => "align.utility",
            Axis::Gamma => "align.gamma",
            Axis::Beta => "align.beta",
            Axis::Partition => "feedback.source",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "utility" => Ok(Axis::Utility),
            "gamma" => Ok(Axis::Gamma),
            "beta" => Ok(Axis::Beta),
            "partition" => Ok(Axis::Partition),
            other => Err(Error::Usage(format!(
                "unknown axis {other:?} (expected utility|gamma|beta|partition)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblateOutcome {
    /// Successful runs, best first.
    pub ranked: Vec<(String, MetricsReport)>,
    /// Failed runs with their error messages.
    pub failed: Vec<(String, String)>,
}

/// One aligned run per value of `axis`, all sharing the seed, plus a ranking table
/// and a scatter figure. A failing run is recorded in the table without stopping the
/// others; the command itself fails only when every run does.
pub fn cmd_ablate(cfg: &RunConfig, ckpt: &Path, axis: Axis, values: &[String], out: &Path) -> Result<AblateOutcome> {
    if values.is_empty() {
        return Err(Error::Usage("ablate needs at least one value".into()));
    }
    if values.iter().collect::<BTreeSet<_>>().len() != values.len() {
        return Err(Error::Usage("ablate values must be distinct".into()));
    }
    let base = if axis == Axis::Utility {
        cfg.with("objective", "kto")?
    } else {
        cfg.clone()
    };
    let arms = values
        .iter()
        .map(|v| {
            let arm = base
                .with(axis.key(), v)
                .map_err(|e| Error::Usage(format!("{axis}={v}: {e}")))?;
            let tag = format!("{axis}={v}");
            let dir = out.join(format!("{axis}-{v}"));
            Ok((tag, arm, dir))
        })
        .collect::<Result<Vec<_>>>()?;

    with_manifest("ablate", cfg, out, |m| {
        m.input("checkpoint", ckpt);
        let results: Vec<Result<RunOutcome>> = std::thread::scope(|s| {
            let handles: Vec<_> = arms
                .iter()
                .map(|(_, arm, dir)| s.spawn(move || run_arm(arm, ckpt, dir)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Numerical("run panicked".into())))
                })
                .collect()
        });

        let mut reports = Vec::new();
        let mut clouds = Vec::new();
        let mut failed = Vec::new();
        let mut first_err = None;
        for ((tag, _, dir), res) in arms.iter().zip(results) {
            m.output(&format!("{tag}/manifest"), &dir.join(crate::manifest::MANIFEST_FILE));
            match res {
                Ok(run) => {
                    m.output(&format!("{tag}/metrics"), &dir.join(METRICS));
                    m.metrics.insert(format!("{tag}/win_fraction"), run.report.win_fraction);
                    m.metrics
                        .insert(format!("{tag}/desirable_score_mean"), run.report.desirable_score_mean);
                    reports.push((tag.clone(), run.report));
                    clouds.push((tag.clone(), run.points));
                }
                Err(e) => {
                    failed.push((tag.clone(), e.to_string()));
                    first_err.get_or_insert(e);
                }
            }
        }
        if reports.is_empty() {
            return Err(first_err.unwrap_or_else(|| Error::Numerical("no runs".into())));
        }
        let ranked = if reports.len() >= 2 {
            compare_runs(&reports)?
        } else {
            reports
        };

        let table = out.join(COMPARISON);
        std::fs::write(&table, comparison_csv(&ranked, &failed)).map_err(|e| io_err(&table, e))?;
        m.output("comparison", &table);
        let figure = out.join(SCATTER);
        emit_scatter(&clouds, &Reference::from_suite(&cfg.data), &figure)?;
        m.output("scatter", &figure);
        Ok(AblateOutcome { ranked, failed })
    })
}
