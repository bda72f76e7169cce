//! Dense layers and the MLP built from them.
//!
//! Every hidden layer computes `act(W a + b)`; the last layer is affine. Weights are
//! stored row-major with shape `(out, in)`. Batches are row-major matrices with one
//! sample per row, so a layer evaluates `Z = A Wᵀ + 1 bᵀ`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::Params;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `z · σ(z)`
    Silu,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Shape `(out, in)`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
        }
    }

    /// He-style scaled-uniform weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || dist.sample(rng));
        Self {
            weights,
            biases: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
    activation: Activation,
}

impl MlpParams {
    pub fn new(layers: Vec<DenseLayer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.biases.len() != layer.out_dim() {
                return Err(Error::config(format!(
                    "layer {k}: {} biases for {} outputs",
                    layer.biases.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::config(format!("layer {k} has a zero dimension")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::config(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let params = Self { layers, activation };
        if let Some(name) = params.first_non_finite() {
            return Err(Error::config(format!("non-finite initial values in {name}")));
        }
        Ok(params)
    }

    /// Randomly initialized network `input_dim → hidden... → output_dim`.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = layer_dims(input_dim, hidden, output_dim);
        let layers = dims
            .windows(2)
            .map(|d| DenseLayer::he_uniform(d[0], d[1], rng))
            .collect();
        Self::new(layers, activation)
    }

    /// All-zero network with the given shape.
    pub fn zeros(input_dim: usize, hidden: &[usize], output_dim: usize, activation: Activation) -> Result<Self> {
        let dims = layer_dims(input_dim, hidden, output_dim);
        let layers = dims.windows(2).map(|d| DenseLayer::zeros(d[0], d[1])).collect();
        Self::new(layers, activation)
    }

    /// Zero-valued container with this network's shape, used for gradients.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Evaluates a batch (one sample per row) and records what backward needs.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpCache)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::config(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut a = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases;
            layer_inputs.push(a);
            if k < last {
                let act = self.activation;
                a = z.mapv(|v| act.apply(v));
                pre_activations.push(z);
            } else {
                a = z;
            }
        }
        let cache = MlpCache {
            layer_inputs,
            pre_activations,
        };
        Ok((a, cache))
    }

    /// Reverse pass for the batch recorded in `cache`.
    ///
    /// `upstream` holds ∂L/∂output row by row. Returns the parameter gradient and
    /// ∂L/∂input.
    pub fn backward_batch(&self, cache: &MlpCache, upstream: ArrayView2<'_, f64>) -> Result<(MlpParams, Array2<f64>)> {
        let n_layers = self.layers.len();
        if cache.layer_inputs.len() != n_layers || cache.pre_activations.len() + 1 != n_layers {
            return Err(Error::usage(
                "backward called without a cache from the matching forward pass",
            ));
        }
        let batch = cache.layer_inputs[0].nrows();
        if upstream.nrows() != batch || upstream.ncols() != self.output_dim() {
            return Err(Error::usage(format!(
                "upstream gradient has shape {:?}, expected ({batch}, {})",
                upstream.shape(),
                self.output_dim()
            )));
        }

        let mut grads = self.zeros_like();
        let mut delta = upstream.to_owned();
        for k in (0..n_layers).rev() {
            let layer = &self.layers[k];
            grads.layers[k].weights = delta.t().dot(&cache.layer_inputs[k]);
            grads.layers[k].biases = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&layer.weights);
            if k > 0 {
                let act = self.activation;
                back.zip_mut_with(&cache.pre_activations[k - 1], |d, &z| *d *= act.derivative(z));
            }
            delta = back;
        }
        Ok((grads, delta))
    }
}

fn layer_dims(input_dim: usize, hidden: &[usize], output_dim: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    dims
}

/// Activations recorded by [`MlpParams::forward_batch`].
///
/// A default (empty) cache is rejected by backward.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    layer_inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Params for MlpParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            out.push((
                format!("layer{k}.weights"),
                l.weights.as_slice().expect("standard layout"),
            ));
            out.push((
                format!("layer{k}.biases"),
                l.biases.as_slice().expect("standard layout"),
            ));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter_mut().enumerate() {
            out.push((
                format!("layer{k}.weights"),
                l.weights.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("layer{k}.biases"),
                l.biases.as_slice_mut().expect("standard layout"),
            ));
        }
        out
    }
}

/// Single-sample forward pass on `[x, t_embed, cond_embed]`.
pub fn mlp_forward(params: &MlpParams, x: &[f64], t_embed: &[f64], cond_embed: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut input: Vec<f64> = Vec::with_capacity(params.input_dim());
    input.extend_from_slice(x);
    input.extend_from_slice(t_embed);
    if let Some(c) = cond_embed {
        input.extend_from_slice(c);
    }
    let n = input.len();
    let row = Array2::from_shape_vec((1, n), input).expect("one row");
    let (out, _) = params.forward_batch(row.view())?;
    Ok(out.into_raw_vec_and_offset().0)
}

/// Parameter gradient for the batch recorded in `cache`, given ∂L/∂output.
pub fn mlp_backward(params: &MlpParams, upstream_grad: ArrayView2<'_, f64>, cache: &MlpCache) -> Result<MlpParams> {
    params.backward_batch(cache, upstream_grad).map(|(g, _)| g)
}
