use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NoiseSchedule, ScheduleSpec};
use crate::nn::{Activation, MlpCache, MlpParams, Params, TimeEmbedding};
use crate::{Error, Result};

/// Condition token for the conditional (CSFT) baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cond {
    Good,
    Bad,
}

impl Cond {
    pub fn index(self) -> usize {
        match self {
            Cond::Good => 0,
            Cond::Bad => 1,
        }
    }
}

impl std::str::FromStr for Cond {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "good" => Ok(Cond::Good),
            "bad" => Ok(Cond::Bad),
            other => Err(Error::usage(format!("unknown condition {other:?} (expected good|bad)"))),
        }
    }
}

/// Shape of a denoiser: everything needed to rebuild one from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_embed_dim: usize,
    pub max_period: f64,
    /// Adds a learned two-entry condition table.
    pub conditional: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            data_dim: 2,
            hidden: vec![128, 128, 128],
            activation: Activation::Silu,
            time_embed_dim: 32,
            max_period: 10_000.0,
            conditional: false,
        }
    }
}

/// ε-prediction network `ε_θ(x_t, t[, c])` bound to a noise schedule.
///
/// The network input is `[x_t, e(t) + c_emb]`: the condition embedding, when present,
/// is added onto the time embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub mlp: MlpParams,
    pub embedding: TimeEmbedding,
    /// Shape `(2, embedding.dim)`, rows indexed by [`Cond::index`].
    pub cond_table: Option<Array2<f64>>,
    pub schedule: NoiseSchedule,
    pub data_dim: usize,
}

/// Gradient of a scalar with respect to every [`DenoiserModel`] parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserGrads {
    pub mlp: MlpParams,
    pub cond_table: Option<Array2<f64>>,
}

pub struct DenoiserCache {
    mlp: MlpCache,
    conds: Option<Vec<Cond>>,
}

impl DenoiserModel {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, schedule: &ScheduleSpec, rng: &mut R) -> Result<Self> {
        let embedding = TimeEmbedding::new(config.time_embed_dim, config.max_period)?;
        if config.data_dim == 0 {
            return Err(Error::config("data_dim must be positive"));
        }
        let mlp = MlpParams::init(
            config.data_dim + embedding.dim,
            &config.hidden,
            config.data_dim,
            config.activation,
            rng,
        )?;
        let cond_table = config.conditional.then(|| Array2::zeros((2, embedding.dim)));
        Ok(Self {
            mlp,
            embedding,
            cond_table,
            schedule: schedule.build()?,
            data_dim: config.data_dim,
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            data_dim: self.data_dim,
            hidden: self.mlp.layers()[..self.mlp.layers().len() - 1]
                .iter()
                .map(|l| l.out_dim())
                .collect(),
            activation: self.mlp.activation(),
            time_embed_dim: self.embedding.dim,
            max_period: self.embedding.max_period,
            conditional: self.cond_table.is_some(),
        }
    }

    pub fn zero_grads(&self) -> DenoiserGrads {
        DenoiserGrads {
            mlp: self.mlp.zeros_like(),
            cond_table: self.cond_table.as_ref().map(|c| Array2::zeros(c.raw_dim())),
        }
    }

    /// Checks that `other` can serve as the reference policy for `self`.
    pub fn check_compatible(&self, other: &DenoiserModel) -> Result<()> {
        if self.schedule != other.schedule {
            return Err(Error::config("models use different noise schedules"));
        }
        if self.config() != other.config() {
            return Err(Error::config("models have different architectures"));
        }
        Ok(())
    }

    fn build_input(&self, xs: ArrayView2<'_, f64>, ts: &[usize], conds: Option<&[Cond]>) -> Result<Array2<f64>> {
        let n = xs.nrows();
        if xs.ncols() != self.data_dim {
            return Err(Error::config(format!(
                "points have {} coordinates, model expects {}",
                xs.ncols(),
                self.data_dim
            )));
        }
        if ts.len() != n {
            return Err(Error::usage(format!("{} steps for {n} points", ts.len())));
        }
        if let Some(&t) = ts.iter().find(|&&t| t > self.schedule.steps()) {
            return Err(Error::usage(format!("step {t} exceeds T = {}", self.schedule.steps())));
        }
        let table = match conds {
            Some(c) => {
                if c.len() != n {
                    return Err(Error::usage(format!("{} conditions for {n} points", c.len())));
                }
                Some(
                    self.cond_table
                        .as_ref()
                        .ok_or_else(|| Error::config("model has no condition table but a condition was given"))?,
                )
            }
            None => None,
        };
        let d = self.data_dim;
        let e = self.embedding.dim;
        let mut input = Array2::zeros((n, d + e));
        input.slice_mut(s![.., ..d]).assign(&xs);
        for (i, &t) in ts.iter().enumerate() {
            let mut row = input.row_mut(i);
            let emb = row.as_slice_mut().expect("row-major");
            self.embedding.write(t, &mut emb[d..]);
            if let (Some(table), Some(c)) = (table, conds) {
                let crow = table.row(c[i].index());
                for (dst, src) in emb[d..].iter_mut().zip(crow.iter()) {
                    *dst += src;
                }
            }
        }
        Ok(input)
    }

    /// Predicted noise for a batch of noisy points.
    pub fn predict_eps(&self, xs: ArrayView2<'_, f64>, ts: &[usize], conds: Option<&[Cond]>) -> Result<Array2<f64>> {
        self.predict_eps_with_cache(xs, ts, conds).map(|(o, _)| o)
    }

    pub fn predict_eps_with_cache(
        &self,
        xs: ArrayView2<'_, f64>,
        ts: &[usize],
        conds: Option<&[Cond]>,
    ) -> Result<(Array2<f64>, DenoiserCache)> {
        let input = self.build_input(xs, ts, conds)?;
        let (out, mlp) = self.mlp.forward_batch(input.view())?;
        Ok((
            out,
            DenoiserCache {
                mlp,
                conds: conds.map(<[Cond]>::to_vec),
            },
        ))
    }

    /// Parameter gradient given ∂L/∂ε̂ for the batch recorded in `cache`.
    pub fn backward(&self, cache: &DenoiserCache, upstream: ArrayView2<'_, f64>) -> Result<DenoiserGrads> {
        let (mlp, input_grad) = self.mlp.backward_batch(&cache.mlp, upstream)?;
        let cond_table = match (&self.cond_table, &cache.conds) {
            (Some(table), Some(conds)) => {
                let mut g = Array2::zeros(table.raw_dim());
                for (i, c) in conds.iter().enumerate() {
                    let src = input_grad.slice(s![i, self.data_dim..]);
                    let mut dst = g.row_mut(c.index());
                    dst += &src;
                }
                Some(g)
            }
            (Some(table), None) => Some(Array2::zeros(table.raw_dim())),
            (None, _) => None,
        };
        Ok(DenoiserGrads { mlp, cond_table })
    }

    /// SHA-256 over every parameter's bit pattern, for before/after immutability checks.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (name, t) in self.tensors() {
            h.update(name.as_bytes());
            for v in t {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Params for DenoiserModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.mlp.tensors();
        if let Some(c) = &self.cond_table {
            out.push(("cond_table".to_owned(), c.as_slice().expect("standard layout")));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.mlp.tensors_mut();
        if let Some(c) = &mut self.cond_table {
            out.push(("cond_table".to_owned(), c.as_slice_mut().expect("standard layout")));
        }
        out
    }
}

impl Params for DenoiserGrads {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.mlp.tensors();
        if let Some(c) = &self.cond_table {
            out.push(("cond_table".to_owned(), c.as_slice().expect("standard layout")));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.mlp.tensors_mut();
        if let Some(c) = &mut self.cond_table {
            out.push(("cond_table".to_owned(), c.as_slice_mut().expect("standard layout")));
        }
        out
    }
}
