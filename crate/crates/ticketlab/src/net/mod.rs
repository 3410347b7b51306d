//! Dense feed-forward networks with per-weight binary masks.
//!
//! Only the MLP topology is supported: a stack of linear layers with ReLU or
//! tanh on the hidden layers and a linear output. Softmax heads are applied
//! inside loss functions, never in `forward`. All numerics are f64.
//!
//! A masked forward pass computes `activation((W ⊙ M) x + b)` per layer, so a
//! pruned weight contributes exactly zero, and gradients at pruned positions
//! are forced to zero so they never move.

pub mod adam;
pub mod init;
pub mod loss;

pub use adam::Adam;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Linear,
    /// Logits consumed by a softmax inside the loss.
    SoftmaxLogits,
}

/// Architecture description: `layer_sizes` runs input dim, hidden dims,
/// output dim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub output_head: OutputHead,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, output_head: OutputHead) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("network needs at least 2 layer sizes"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("all layer sizes must be >= 1"));
        }
        Ok(NetworkSpec { layer_sizes, activation, output_head })
    }

    /// Convenience: input -> hidden... -> output with ReLU hidden layers.
    pub fn relu(layer_sizes: Vec<usize>) -> Result<Self> {
        Self::new(layer_sizes, Activation::Relu, OutputHead::Linear)
    }

    pub fn n_linear_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// Weights and biases of one linear layer. `weight` has shape
/// `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All trainable arrays of one network, addressable per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<LayerParams>,
}

impl ParamSet {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| LayerParams {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        ParamSet { layers }
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        let layers = other
            .layers
            .iter()
            .map(|l| LayerParams {
                weight: Array2::zeros(l.weight.raw_dim()),
                bias: Array1::zeros(l.bias.raw_dim()),
            })
            .collect();
        ParamSet { layers }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Total number of weight-matrix entries (biases excluded).
    pub fn n_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len()).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.n_layers() == other.n_layers()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.raw_dim() == b.weight.raw_dim() && a.bias.raw_dim() == b.bias.raw_dim()
            })
    }

    /// Euclidean norm over all weight and bias entries.
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for l in &self.layers {
            acc += l.weight.iter().map(|v| v * v).sum::<f64>();
            acc += l.bias.iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    /// Scales every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.mapv_inplace(|v| v * factor);
            l.bias.mapv_inplace(|v| v * factor);
        }
    }

    /// Zeroes weights at masked positions in place.
    pub fn apply_mask(&mut self, masks: &MaskSet) {
        for (l, m) in self.layers.iter_mut().zip(&masks.layers) {
            l.weight *= m;
        }
    }
}

/// Per-layer binary masks aligned with a [`ParamSet`]; entries are 0.0 or 1.0
/// and biases are never masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub layers: Vec<Array2<f64>>,
}

impl MaskSet {
    pub fn ones_like(params: &ParamSet) -> Self {
        MaskSet {
            layers: params.layers.iter().map(|l| Array2::ones(l.weight.raw_dim())).collect(),
        }
    }

    pub fn ones(spec: &NetworkSpec) -> Self {
        MaskSet {
            layers: spec
                .layer_sizes
                .windows(2)
                .map(|w| Array2::ones((w[1], w[0])))
                .collect(),
        }
    }

    pub fn n_weights(&self) -> usize {
        self.layers.iter().map(|m| m.len()).sum()
    }

    pub fn alive_count(&self) -> usize {
        self.layers.iter().map(|m| m.iter().filter(|&&v| v != 0.0).count()).sum()
    }

    pub fn alive_count_layer(&self, layer: usize) -> usize {
        self.layers[layer].iter().filter(|&&v| v != 0.0).count()
    }

    /// Fraction of weights still alive, in [0, 1].
    pub fn remaining_fraction(&self) -> f64 {
        self.alive_count() as f64 / self.n_weights() as f64
    }

    pub fn is_binary(&self) -> bool {
        self.layers.iter().all(|m| m.iter().all(|&v| v == 0.0 || v == 1.0))
    }

    pub fn same_shape(&self, params: &ParamSet) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(m, l)| m.raw_dim() == l.weight.raw_dim())
    }
}

/// Frozen copy of a [`ParamSet`] at initialization: the rewind target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSnapshot {
    pub params: ParamSet,
    pub seed: u64,
}

fn apply_activation(z: &mut Array2<f64>, act: Activation) {
    match act {
        Activation::Relu => z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 }),
        Activation::Tanh => z.mapv_inplace(f64::tanh),
    }
}

/// Intermediate values of one batched forward pass, consumed by [`backward`].
pub struct ForwardCache {
    /// Post-activation values per layer boundary: `acts[0]` is the input
    /// batch, `acts[l]` the activations after hidden layer `l`.
    acts: Vec<Array2<f64>>,
    /// Effective (masked) weight per layer.
    masked_weights: Vec<Array2<f64>>,
    activation: Activation,
}

fn check_shapes(params: &ParamSet, masks: &MaskSet, in_dim: usize) -> Result<()> {
    if !masks.same_shape(params) {
        return Err(Error::invalid("mask shapes do not match parameter shapes"));
    }
    if in_dim != params.input_dim() {
        return Err(Error::invalid(format!(
            "input dim {} does not match network input dim {}",
            in_dim,
            params.input_dim()
        )));
    }
    Ok(())
}

/// Batched masked forward pass keeping the cache needed for [`backward`].
/// `x` has shape `(batch, input_dim)`; hidden activation comes from `act`.
pub fn forward_cached(
    params: &ParamSet,
    masks: &MaskSet,
    act: Activation,
    x: ArrayView2<f64>,
) -> Result<(Array2<f64>, ForwardCache)> {
    check_shapes(params, masks, x.ncols())?;
    let n_layers = params.n_layers();
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    let mut masked_weights: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    acts.push(x.to_owned());

    let mut out = None;
    for (i, (layer, mask)) in params.layers.iter().zip(&masks.layers).enumerate() {
        let wm = &layer.weight * mask;
        let mut z = acts.last().unwrap().dot(&wm.t());
        z += &layer.bias;
        masked_weights.push(wm);
        if i + 1 < n_layers {
            apply_activation(&mut z, act);
            acts.push(z);
        } else {
            out = Some(z);
        }
    }
    let out = out.unwrap();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite network output"));
    }
    Ok((out, ForwardCache { acts, masked_weights, activation: act }))
}

/// Batched masked forward pass without a cache.
pub fn forward_batch(
    params: &ParamSet,
    masks: &MaskSet,
    act: Activation,
    x: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    Ok(forward_cached(params, masks, act, x)?.0)
}

/// Single-input forward pass.
pub fn forward(
    params: &ParamSet,
    masks: &MaskSet,
    act: Activation,
    x: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let x2 = x.insert_axis(Axis(0));
    let out = forward_batch(params, masks, act, x2)?;
    Ok(out.index_axis(Axis(0), 0).to_owned())
}

/// Reverse-mode gradients for a batched pass, given `dL/dy` at the output.
/// Gradient entries at masked positions are forced to zero.
pub fn backward(
    params: &ParamSet,
    masks: &MaskSet,
    cache: &ForwardCache,
    dl_dy: ArrayView2<f64>,
) -> Result<ParamSet> {
    let n_layers = params.n_layers();
    let mut grads = ParamSet::zeros_like(params);
    let mut delta = dl_dy.to_owned();

    for l in (0..n_layers).rev() {
        let a_in = &cache.acts[l];
        let mut gw = delta.t().dot(a_in);
        gw *= &masks.layers[l];
        let gb = delta.sum_axis(Axis(0));
        if gw.iter().any(|v| !v.is_finite()) || gb.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient at layer {l}")));
        }
        grads.layers[l].weight = gw;
        grads.layers[l].bias = gb;
        if l > 0 {
            let mut d_prev = delta.dot(&cache.masked_weights[l]);
            // Activation derivative from the stored post-activation values.
            match cache.activation {
                Activation::Relu => {
                    d_prev.zip_mut_with(&cache.acts[l], |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
                }
                Activation::Tanh => {
                    d_prev.zip_mut_with(&cache.acts[l], |d, &a| *d *= 1.0 - a * a);
                }
            }
            delta = d_prev;
        }
    }
    Ok(grads)
}

/// Gradient of a scalar batch loss with respect to all parameters.
///
/// `loss` maps the batched network output to a loss value and `dL/dy`.
pub fn grad_batch<F>(
    params: &ParamSet,
    masks: &MaskSet,
    act: Activation,
    x: ArrayView2<f64>,
    loss: F,
) -> Result<(f64, ParamSet)>
where
    F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
{
    let (out, cache) = forward_cached(params, masks, act, x)?;
    let (loss_value, dl_dy) = loss(&out);
    let grads = backward(params, masks, &cache, dl_dy.view())?;
    Ok((loss_value, grads))
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
