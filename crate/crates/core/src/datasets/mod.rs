//! The two-dimensional Gaussian suite, pairwise-to-binary feedback conversion and
//! CSV persistence.

mod io;
mod partition;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::{Error, Result};

pub use io::{
    read_labeled, read_pairs, read_points, read_sample_table, write_labeled, write_pairs, write_points,
    write_sample_table,
};
pub use partition::{
    label_samples, partition_at_least_once, partition_win_only, synthetic_preferences, BinaryFeedbackRecord,
    PartitionRule, PreferencePairRecord,
};

pub type Point = [f64; 2];

/// Smallest variance used when generating, so degenerate specs stay finite.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Binary feedback `w(x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Desirable,
    Undesirable,
}

impl Label {
    /// `+1` or `-1`.
    pub fn w(self) -> i8 {
        match self {
            Label::Desirable => 1,
            Label::Undesirable => -1,
        }
    }

    pub fn sign(self) -> f64 {
        f64::from(self.w())
    }

    pub fn from_w(w: i64) -> Option<Self> {
        match w {
            1 => Some(Label::Desirable),
            -1 => Some(Label::Undesirable),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x0: Point,
    pub w: Label,
}

impl LabeledSample {
    pub fn new(x0: Point, w: Label) -> Self {
        Self { x0, w }
    }
}

/// Isotropic Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Point,
    pub variance: f64,
    pub count: usize,
    pub seed: u64,
}

pub fn gen_gaussian(spec: &GaussianSpec) -> Result<Vec<Point>> {
    if !(spec.variance > 0.0) || !spec.variance.is_finite() {
        return Err(Error::config(format!(
            "variance must be positive, got {}",
            spec.variance
        )));
    }
    let std = spec.variance.max(VARIANCE_FLOOR).sqrt();
    let mut rng = substream(spec.seed, "gaussian");
    Ok((0..spec.count)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [spec.mean[0] + std * a, spec.mean[1] + std * b]
        })
        .collect())
}

/// Parameters of the synthetic alignment suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteParams {
    pub pretrain_mean: Point,
    pub pretrain_variance: f64,
    pub desirable_mean: Point,
    pub undesirable_mean: Point,
    /// Shared by the desirable and undesirable Gaussians.
    pub preference_variance: f64,
    pub pretrain_count: usize,
    pub desirable_count: usize,
    pub undesirable_count: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            pretrain_mean: [0.5, 0.8],
            pretrain_variance: 0.04,
            desirable_mean: [0.3, 0.8],
            undesirable_mean: [0.3, 0.6],
            preference_variance: 0.01,
            pretrain_count: 20_000,
            desirable_count: 5_000,
            undesirable_count: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub pretrain: Vec<Point>,
    pub desirable: Vec<LabeledSample>,
    pub undesirable: Vec<LabeledSample>,
}

impl SyntheticSuite {
    /// Desirable samples followed by undesirable ones.
    pub fn labeled(&self) -> Vec<LabeledSample> {
        self.desirable.iter().chain(&self.undesirable).copied().collect()
    }
}

pub fn make_synthetic_suite(seed: u64) -> Result<SyntheticSuite> {
    make_suite(&SuiteParams::default(), seed)
}

pub fn make_suite(params: &SuiteParams, seed: u64) -> Result<SyntheticSuite> {
    let mut seeds = substream(seed, "data");
    let mut spec = |mean, variance, count| GaussianSpec {
        mean,
        variance,
        count,
        seed: seeds.random(),
    };
    let pretrain = spec(params.pretrain_mean, params.pretrain_variance, params.pretrain_count);
    let desirable = spec(
        params.desirable_mean,
        params.preference_variance,
        params.desirable_count,
    );
    let undesirable = spec(
        params.undesirable_mean,
        params.preference_variance,
        params.undesirable_count,
    );
    let label = |points: Vec<Point>, w| points.into_iter().map(|x0| LabeledSample { x0, w }).collect();
    Ok(SyntheticSuite {
        pretrain: gen_gaussian(&pretrain)?,
        desirable: label(gen_gaussian(&desirable)?, Label::Desirable),
        undesirable: label(gen_gaussian(&undesirable)?, Label::Undesirable),
    })
}

/// Per-coordinate sample mean and (unbiased) variance.
pub fn moments(points: &[Point]) -> (Point, Point) {
    let n = points.len() as f64;
    let mut mean = [0.0; 2];
    for p in points {
        mean[0] += p[0] / n;
        mean[1] += p[1] / n;
    }
    let mut var = [0.0; 2];
    for p in points {
        var[0] += (p[0] - mean[0]).powi(2) / (n - 1.0);
        var[1] += (p[1] - mean[1]).powi(2) / (n - 1.0);
    }
    (mean, var)
}
