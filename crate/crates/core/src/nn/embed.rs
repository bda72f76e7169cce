use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sinusoidal embedding of an integer diffusion step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub max_period: f64,
}

impl TimeEmbedding {
    pub fn new(dim: usize, max_period: f64) -> Result<Self> {
        let spec = Self { dim, max_period };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(Error::config(format!(
                "time embedding dim must be even and positive, got {}",
                self.dim
            )));
        }
        if !(self.max_period > 1.0) || !self.max_period.is_finite() {
            return Err(Error::config("time embedding max_period must exceed 1"));
        }
        Ok(())
    }

    /// Writes the embedding of `t` into `out` (length `dim`). The first half holds
    /// sines, the second half cosines, at geometrically spaced frequencies starting at 1.
    pub(crate) fn write(&self, t: usize, out: &mut [f64]) {
        let half = self.dim / 2;
        let t = t as f64;
        for k in 0..half {
            let freq = (-(self.max_period.ln()) * k as f64 / half as f64).exp();
            let angle = t * freq;
            out[k] = angle.sin();
            out[half + k] = angle.cos();
        }
    }
}

/// Embedding of step `t`; entries lie in `[-1, 1]`.
pub fn time_embed(t: usize, spec: &TimeEmbedding) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = vec![0.0; spec.dim];
    spec.write(t, &mut out);
    Ok(out)
}
