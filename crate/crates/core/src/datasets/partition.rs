use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledSample, Point};
use crate::{Error, Result};

/// One pairwise comparison: `winner` was preferred over `loser` for `prompt_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePairRecord {
    pub prompt_id: String,
    pub winner_id: String,
    pub loser_id: String,
}

impl PreferencePairRecord {
    pub fn new(
        prompt_id: impl Into<String>,
        winner_id: impl Into<String>,
        loser_id: impl Into<String>,
    ) -> Result<Self> {
        let rec = Self {
            prompt_id: prompt_id.into(),
            winner_id: winner_id.into(),
            loser_id: loser_id.into(),
        };
        if rec.winner_id == rec.loser_id {
            return Err(Error::config(format!(
                "sample {:?} compared with itself",
                rec.winner_id
            )));
        }
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryFeedbackRecord {
    pub sample_id: String,
    pub w: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRule {
    /// Desirable if preferred in at least one comparison.
    AtLeastOnce,
    /// Desirable only if preferred in every comparison it took part in.
    WinOnly,
}

impl PartitionRule {
    pub fn name(self) -> &'static str {
        match self {
            PartitionRule::AtLeastOnce => "at_least_once",
            PartitionRule::WinOnly => "win_only",
        }
    }

    pub fn apply(self, pairs: &[PreferencePairRecord]) -> Vec<BinaryFeedbackRecord> {
        match self {
            PartitionRule::AtLeastOnce => partition_at_least_once(pairs),
            PartitionRule::WinOnly => partition_win_only(pairs),
        }
    }
}

impl std::str::FromStr for PartitionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "at_least_once" => Ok(PartitionRule::AtLeastOnce),
            "win_only" => Ok(PartitionRule::WinOnly),
            other => Err(Error::usage(format!(
                "unknown partition rule {other:?} (expected at_least_once|win_only)"
            ))),
        }
    }
}

/// Referenced ids in order of first appearance.
fn referenced(pairs: &[PreferencePairRecord]) -> Vec<&str> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in pairs {
        for id in [&p.winner_id, &p.loser_id] {
            if seen.insert(id.as_str()) {
                out.push(id.as_str());
            }
        }
    }
    out
}

fn label_by(pairs: &[PreferencePairRecord], desirable: impl Fn(&str) -> bool) -> Vec<BinaryFeedbackRecord> {
    referenced(pairs)
        .into_iter()
        .map(|id| BinaryFeedbackRecord {
            sample_id: id.to_owned(),
            w: if desirable(id) {
                Label::Desirable
            } else {
                Label::Undesirable
            },
        })
        .collect()
}

/// `+1` for every sample that won at least one comparison, `-1` for the rest.
/// Samples are listed in order of first appearance.
pub fn partition_at_least_once(pairs: &[PreferencePairRecord]) -> Vec<BinaryFeedbackRecord> {
    let winners: HashSet<&str> = pairs.iter().map(|p| p.winner_id.as_str()).collect();
    label_by(pairs, |id| winners.contains(id))
}

/// `+1` only for samples that won at least once and never lost.
pub fn partition_win_only(pairs: &[PreferencePairRecord]) -> Vec<BinaryFeedbackRecord> {
    let winners: HashSet<&str> = pairs.iter().map(|p| p.winner_id.as_str()).collect();
    let losers: HashSet<&str> = pairs.iter().map(|p| p.loser_id.as_str()).collect();
    label_by(pairs, |id| winners.contains(id) && !losers.contains(id))
}

/// Joins feedback records with a sample table.
pub fn label_samples(feedback: &[BinaryFeedbackRecord], table: &[(String, Point)]) -> Result<Vec<LabeledSample>> {
    let index: HashMap<&str, Point> = table.iter().map(|(id, p)| (id.as_str(), *p)).collect();
    feedback
        .iter()
        .map(|f| {
            index
                .get(f.sample_id.as_str())
                .map(|&x0| LabeledSample { x0, w: f.w })
                .ok_or_else(|| Error::config(format!("sample {:?} missing from the sample table", f.sample_id)))
        })
        .collect()
}

/// Random comparisons between samples of `pool`, each decided in favor of the point
/// closer to `mu_d` relative to `mu_u`; ties go to the first-drawn sample.
pub fn synthetic_preferences<R: Rng + ?Sized>(
    pool: &[(String, Point)],
    mu_d: Point,
    mu_u: Point,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<PreferencePairRecord>> {
    if pool.len() < 2 {
        return Err(Error::config("need at least two samples to compare"));
    }
    let margin = |x: &Point| {
        let du = (x[0] - mu_u[0]).powi(2) + (x[1] - mu_u[1]).powi(2);
        let dd = (x[0] - mu_d[0]).powi(2) + (x[1] - mu_d[1]).powi(2);
        du - dd
    };
    (0..n_pairs)
        .map(|k| {
            let i = rng.random_range(0..pool.len());
            let mut j = rng.random_range(0..pool.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (&pool[i], &pool[j]);
            let (w, l) = if margin(&a.1) >= margin(&b.1) { (a, b) } else { (b, a) };
            PreferencePairRecord::new(format!("p{k}"), w.0.clone(), l.0.clone())
        })
        .collect()
}
