//! Diffusion-model alignment from per-sample binary feedback.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a small MLP with hand-written backpropagation and Adam.
//! - [`ddpm`]: noise schedule, closed-form noising, reverse-step Gaussians, sampler
//!   and the simple denoising loss.
//! - [`alignment`]: utility functions, per-step implicit reward, the clamped KL
//!   reference point, the utility-maximization objective and the SFT / CSFT /
//!   paired-preference baselines, plus the training loop.
//! - [`datasets`]: the two-dimensional Gaussian suite, pairwise-to-binary feedback
//!   conversion and CSV persistence.
//! - [`eval`]: point-cloud scoring, utility tables, SVG scatter panels and run ranking.
//! - [`checkpoint`]: versioned JSON checkpoints.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod checkpoint;
pub mod datasets;
pub mod ddpm;
mod error;
pub mod eval;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
