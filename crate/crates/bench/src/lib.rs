//! Fixtures shared by the benchmarks.

use dkto_core::datasets::{make_suite, LabeledSample, SuiteParams};
use dkto_core::ddpm::{DenoiserModel, ModelConfig, ScheduleSpec};
use dkto_core::nn::Params;
use dkto_core::rng::substream;
use ndarray::Array2;

/// A default-sized denoiser and a slightly moved copy of it.
pub fn model_pair(seed: u64) -> (DenoiserModel, DenoiserModel) {
    let reference = DenoiserModel::init(
        &ModelConfig::default(),
        &ScheduleSpec::default(),
        &mut substream(seed, "init"),
    )
    .unwrap();
    let mut theta = reference.clone();
    for (_, t) in theta.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= 1.01);
    }
    (theta, reference)
}

pub fn labeled(seed: u64, per_class: usize) -> Vec<LabeledSample> {
    let params = SuiteParams {
        pretrain_count: 1,
        desirable_count: per_class,
        undesirable_count: per_class,
        ..SuiteParams::default()
    };
    make_suite(&params, seed).unwrap().labeled()
}

pub fn points(samples: &[LabeledSample]) -> Array2<f64> {
    Array2::from_shape_fn((samples.len(), 2), |(i, j)| samples[i].x0[j])
}
