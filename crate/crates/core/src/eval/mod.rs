//! Scoring of sampled point clouds against the desirable/undesirable Gaussians,
//! utility tables, SVG scatter panels and run ranking.

mod scatter;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{utility_derivative, utility_value, UtilityKind};
use crate::datasets::{Point, SuiteParams};
use crate::{Error, Result};

pub use scatter::{emit_scatter, render_scatter};

/// The two reference Gaussians a cloud is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub mu_d: Point,
    pub mu_u: Point,
    pub var: f64,
}

impl Reference {
    pub fn from_suite(p: &SuiteParams) -> Self {
        Self {
            mu_d: p.desirable_mean,
            mu_u: p.undesirable_mean,
            var: p.preference_variance,
        }
    }
}

impl Default for Reference {
    fn default() -> Self {
        Self::from_suite(&SuiteParams::default())
    }
}

/// `log N(x; μ_d, var·I) - log N(x; μ_u, var·I)`, evaluated as
/// `(μ_d - μ_u)·(x - (μ_d + μ_u)/2) / var`.
pub fn desirable_score(x: Point, mu_d: Point, mu_u: Point, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::usage(format!("variance must be positive, got {var}")));
    }
    Ok(score_unchecked(x, mu_d, mu_u, var))
}

#[inline]
fn score_unchecked(x: Point, mu_d: Point, mu_u: Point, var: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..2 {
        acc += (mu_d[k] - mu_u[k]) * (x[k] - (mu_d[k] + mu_u[k]) / 2.0);
    }
    acc / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub desirable_score_mean: f64,
    /// Fraction of points with a positive desirable score.
    pub win_fraction: f64,
    pub mean_dist_desirable: f64,
    pub mean_dist_undesirable: f64,
    pub sample_mean: Point,
    /// Unbiased; zero for a single point.
    pub sample_cov: [[f64; 2]; 2],
    pub n: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: Some(path.to_path_buf()),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn eval_cloud(points: &[Point], reference: &Reference) -> Result<MetricsReport> {
    let Reference { mu_d, mu_u, var } = *reference;
    if points.is_empty() {
        return Err(Error::usage("cannot evaluate an empty cloud"));
    }
    if !(var > 0.0) {
        return Err(Error::usage(format!("variance must be positive, got {var}")));
    }
    let n = points.len();
    let nf = n as f64;
    let (mut score, mut wins, mut dd, mut du) = (0.0, 0usize, 0.0, 0.0);
    let mut mean = [0.0; 2];
    for &p in points {
        let s = score_unchecked(p, mu_d, mu_u, var);
        score += s;
        wins += usize::from(s > 0.0);
        dd += dist(p, mu_d);
        du += dist(p, mu_u);
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean = [mean[0] / nf, mean[1] / nf];
    let mut cov = [[0.0; 2]; 2];
    if n > 1 {
        for &p in points {
            let c = [p[0] - mean[0], p[1] - mean[1]];
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += c[i] * c[j];
                }
            }
        }
        cov.iter_mut().flatten().for_each(|v| *v /= nf - 1.0);
    }
    Ok(MetricsReport {
        desirable_score_mean: score / nf,
        win_fraction: wins as f64 / nf,
        mean_dist_desirable: dd / nf,
        mean_dist_undesirable: du / nf,
        sample_mean: mean,
        sample_cov: cov,
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityRow {
    pub v: f64,
    /// `(value, derivative)` per kind, in [`UtilityKind::ALL`] order.
    pub columns: [(f64, f64); 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    pub rows: Vec<UtilityRow>,
}

/// Utility values and derivatives at every multiple of `step` in `[v_min, v_max]`.
pub fn utility_table(v_min: f64, v_max: f64, step: f64) -> Result<UtilityTable> {
    if !(step > 0.0) || !v_min.is_finite() || !v_max.is_finite() || v_min > v_max {
        return Err(Error::usage(format!("invalid grid [{v_min}, {v_max}] step {step}")));
    }
    // Integer multiples keep v = 0 exact whenever the range covers it.
    let tol = 1e-9;
    let lo = (v_min / step - tol).ceil() as i64;
    let hi = (v_max / step + tol).floor() as i64;
    if lo > hi {
        return Err(Error::usage(format!(
            "grid [{v_min}, {v_max}] step {step} has no points"
        )));
    }
    let rows = (lo..=hi)
        .map(|k| {
            let v = k as f64 * step;
            UtilityRow {
                v,
                columns: UtilityKind::ALL.map(|kind| (utility_value(kind, v), utility_derivative(kind, v))),
            }
        })
        .collect();
    Ok(UtilityTable { rows })
}

impl UtilityTable {
    pub fn header() -> Vec<String> {
        let mut h = vec!["v".to_owned()];
        for k in UtilityKind::ALL {
            h.push(k.name().to_owned());
            h.push(format!("{}_derivative", k.name()));
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header().join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.v.to_string());
            for (u, d) in r.columns {
                out.push_str(&format!(",{u},{d}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reports sorted by `desirable_score_mean`, highest first; ties keep input order.
pub fn compare_runs(reports: &[(String, MetricsReport)]) -> Result<Vec<(String, MetricsReport)>> {
    if reports.len() < 2 {
        return Err(Error::usage(format!(
            "need at least 2 reports to compare, got {}",
            reports.len()
        )));
    }
    let mut ranked = reports.to_vec();
    ranked.sort_by(|a, b| b.1.desirable_score_mean.total_cmp(&a.1.desirable_score_mean));
    Ok(ranked)
}

/// Ranking table; `failed` runs are appended with empty metric cells.
pub fn comparison_csv(ranked: &[(String, MetricsReport)], failed: &[(String, String)]) -> String {
    let mut out = String::from(
        "rank,run,status,desirable_score_mean,win_fraction,mean_dist_desirable,mean_dist_undesirable,\
         mean_x,mean_y,cov_xx,cov_xy,cov_yy,n\n",
    );
    for (i, (tag, r)) in ranked.iter().enumerate() {
        out.push_str(&format!(
            "{},{tag},ok,{},{},{},{},{},{},{},{},{},{}\n",
            i + 1,
            r.desirable_score_mean,
            r.win_fraction,
            r.mean_dist_desirable,
            r.mean_dist_undesirable,
            r.sample_mean[0],
            r.sample_mean[1],
            r.sample_cov[0][0],
            r.sample_cov[0][1],
            r.sample_cov[1][1],
            r.n
        ));
    }
    for (tag, err) in failed {
        let err = err.replace(['\n', ','], " ");
        out.push_str(&format!(",{tag},failed: {err},,,,,,,,,,\n"));
    }
    out
}
