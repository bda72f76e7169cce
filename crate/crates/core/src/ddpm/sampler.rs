use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{reverse_means, standard_normal_matrix, Cond, DenoiserModel};
use crate::rng::indexed_substream;
use crate::{Error, Result};

/// Chains per independent RNG stream.
pub const SAMPLE_CHUNK: usize = 512;

/// Ancestral sampling of `n` points: `x_T ~ N(0, I)`, then
/// `x_{t-1} = μ_θ(x_t, t) + σ_t z` with no noise on the final step.
///
/// Fails with a numerical error if any chain ends non-finite.
///
/// Chains are processed in chunks of [`SAMPLE_CHUNK`], chunk `k` drawing from its own
/// substream of `seed`; chunks are independent and concatenated in order.
pub fn sample(model: &DenoiserModel, n: usize, seed: u64, cond: Option<Cond>) -> Result<Array2<f64>> {
    let d = model.data_dim;
    let mut out = Array2::zeros((n, d));
    let mut start = 0;
    let mut chunk = 0u64;
    while start < n {
        let len = SAMPLE_CHUNK.min(n - start);
        let mut rng = indexed_substream(seed, "sample-chains", chunk);
        let cloud = sample_chunk(model, len, cond, &mut rng)?;
        out.slice_mut(s![start..start + len, ..]).assign(&cloud);
        start += len;
        chunk += 1;
    }
    Ok(out)
}

fn sample_chunk<R: Rng + ?Sized>(
    model: &DenoiserModel,
    n: usize,
    cond: Option<Cond>,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let schedule = &model.schedule;
    let conds = cond.map(|c| vec![c; n]);
    let mut x = standard_normal_matrix(n, model.data_dim, rng);
    for t in (1..=schedule.steps()).rev() {
        let ts = vec![t; n];
        let eps = model.predict_eps(x.view(), &ts, conds.as_deref())?;
        let mut mu = reverse_means(schedule, x.view(), &ts, eps.view());
        if t > 1 {
            let sigma = schedule.sigma(t);
            mu.mapv_inplace(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sigma * z
            });
        }
        x = mu;
    }
    if let Some(bad) = x.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numerical(format!("sampled chain {bad} is non-finite")));
    }
    Ok(x)
}
