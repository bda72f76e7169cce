//! Versioned JSON checkpoints.
//!
//! ```text
//! {
//!   "format": "dkto-checkpoint",
//!   "version": 1,
//!   "model": { data_dim, hidden, activation, time_embed_dim, max_period, conditional },
//!   "schedule": { steps, beta_start, beta_end },
//!   "seed": u64,
//!   "step": u64,
//!   "layers": [ { "in_dim", "out_dim", "weights": [row-major out×in], "biases": [out] }, ... ],
//!   "cond_table": null | [[f64; embed_dim]; 2]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores bit-identical
//! parameters.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::ddpm::{DenoiserModel, ModelConfig, ScheduleSpec};
use crate::nn::{DenseLayer, MlpParams, TimeEmbedding};
use crate::{Error, Result};

pub const FORMAT: &str = "dkto-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    format: String,
    version: u32,
    model: ModelConfig,
    schedule: ScheduleSpec,
    seed: u64,
    step: u64,
    layers: Vec<LayerRecord>,
    cond_table: Option<Vec<Vec<f64>>>,
}

/// A model with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DenoiserModel,
    pub seed: u64,
    /// Optimizer steps taken to reach `model`.
    pub step: u64,
}

impl Checkpoint {
    pub fn new(model: DenoiserModel, seed: u64, step: u64) -> Self {
        Self { model, seed, step }
    }

    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let record = Record {
            format: FORMAT.into(),
            version: VERSION,
            model: m.config(),
            schedule: m.schedule.spec(),
            seed: self.seed,
            step: self.step,
            layers: m
                .mlp
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
            cond_table: m
                .cond_table
                .as_ref()
                .map(|t| t.rows().into_iter().map(|r| r.to_vec()).collect()),
        };
        if let Some(name) = crate::nn::Params::first_non_finite(m) {
            return Err(Error::Numerical(format!(
                "refusing to save non-finite parameters in {name}"
            )));
        }
        serde_json::to_string_pretty(&record).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn from_json(text: &str, path: Option<&Path>) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.map(Path::to_path_buf),
            line,
            message,
        };
        let rec: Record = serde_json::from_str(text).map_err(|e| parse_err(e.line() as u64, e.to_string()))?;
        if rec.format != FORMAT {
            return Err(parse_err(0, format!("format {:?}, expected {FORMAT:?}", rec.format)));
        }
        if rec.version != VERSION {
            return Err(parse_err(0, format!("unsupported checkpoint version {}", rec.version)));
        }
        let layers = rec
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let weights = Array2::from_shape_vec((l.out_dim, l.in_dim), l.weights)
                    .map_err(|e| Error::config(format!("layer {k}: {e}")))?;
                Ok(DenseLayer {
                    weights,
                    biases: Array1::from(l.biases),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = &rec.model;
        let embedding = TimeEmbedding::new(cfg.time_embed_dim, cfg.max_period)?;
        let mlp = MlpParams::new(layers, cfg.activation)?;
        if mlp.input_dim() != cfg.data_dim + embedding.dim || mlp.output_dim() != cfg.data_dim {
            return Err(Error::config(format!(
                "layers map {} → {} but the model header implies {} → {}",
                mlp.input_dim(),
                mlp.output_dim(),
                cfg.data_dim + embedding.dim,
                cfg.data_dim
            )));
        }
        let cond_table = match (cfg.conditional, rec.cond_table) {
            (true, Some(rows)) => {
                if rows.len() != 2 || rows.iter().any(|r| r.len() != embedding.dim) {
                    return Err(Error::config("condition table must be 2 rows of the embedding width"));
                }
                Some(Array2::from_shape_fn((2, embedding.dim), |(i, j)| rows[i][j]))
            }
            (false, None) => None,
            _ => {
                return Err(Error::config(
                    "condition table presence disagrees with the model header",
                ))
            }
        };
        let model = DenoiserModel {
            mlp,
            embedding,
            cond_table,
            schedule: rec.schedule.build()?,
            data_dim: cfg.data_dim,
        };
        if model.config() != rec.model {
            return Err(Error::config("hidden layer widths disagree with the model header"));
        }
        Ok(Self {
            model,
            seed: rec.seed,
            step: rec.step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, Some(path))
    }
}
