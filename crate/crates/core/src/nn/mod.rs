//! Minimal feed-forward network with hand-written reverse-mode gradients.
//!
//! The architecture is fixed-shape (dense layers with one shared hidden activation and
//! a linear output layer), so backpropagation is written layer by layer rather than
//! through a general tape.

mod adam;
mod embed;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use embed::{time_embed, TimeEmbedding};
pub use mlp::{mlp_backward, mlp_forward, Activation, DenseLayer, MlpCache, MlpParams};

/// A collection of named parameter tensors, visited in a fixed order.
///
/// Gradient containers implement the same trait with the same ordering as the
/// parameters they differentiate, which is what lets [`AdamState`] pair them up.
pub trait Params {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Euclidean norm over every tensor.
    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Name of the first tensor holding a NaN or infinity.
    fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    /// Flattened copy of all parameters, in visiting order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    /// Mutable access to the `index`-th scalar in visiting order.
    fn scalar_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for (_, t) in self.tensors_mut() {
            if index < t.len() {
                return Some(&mut t[index]);
            }
            index -= t.len();
        }
        None
    }
}
