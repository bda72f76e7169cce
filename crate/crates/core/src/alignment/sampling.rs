use rand::Rng;

use crate::datasets::{Label, LabeledSample};
use crate::{Error, Result};

/// Desirable and undesirable indices of a dataset.
#[derive(Debug, Clone)]
pub struct LabelPools {
    pub desirable: Vec<usize>,
    pub undesirable: Vec<usize>,
}

impl LabelPools {
    pub fn new(dataset: &[LabeledSample]) -> Self {
        let (mut desirable, mut undesirable) = (Vec::new(), Vec::new());
        for (i, s) in dataset.iter().enumerate() {
            match s.w {
                Label::Desirable => desirable.push(i),
                Label::Undesirable => undesirable.push(i),
            }
        }
        Self { desirable, undesirable }
    }

    fn require_both(&self) -> Result<()> {
        if self.desirable.is_empty() || self.undesirable.is_empty() {
            return Err(Error::config(format!(
                "dataset needs both labels, has {} desirable and {} undesirable",
                self.desirable.len(),
                self.undesirable.len()
            )));
        }
        Ok(())
    }
}

/// Each slot is desirable with probability `gamma`, then drawn uniformly (with
/// replacement) from that label's pool.
pub fn biased_batch<R: Rng + ?Sized>(
    dataset: &[LabeledSample],
    gamma: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<LabeledSample>> {
    biased_batch_from(dataset, &LabelPools::new(dataset), gamma, batch_size, rng)
}

/// [`biased_batch`] with precomputed pools.
pub fn biased_batch_from<R: Rng + ?Sized>(
    dataset: &[LabeledSample],
    pools: &LabelPools,
    gamma: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<LabeledSample>> {
    pools.require_both()?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok((0..batch_size)
        .map(|_| {
            let pool = if rng.random_bool(gamma) {
                &pools.desirable
            } else {
                &pools.undesirable
            };
            dataset[pool[rng.random_range(0..pool.len())]]
        })
        .collect())
}
