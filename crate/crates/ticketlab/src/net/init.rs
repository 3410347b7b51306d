//! Weight initialization: Kaiming-uniform and Xavier-uniform with an optional
//! rescale factor applied to the input layer only.
//!
//! Kaiming-uniform samples `Uniform(-b, b)` with `b = sqrt(6 / fan_in)`;
//! Xavier-uniform uses `b = sqrt(6 / (fan_in + fan_out))`. Biases start at
//! zero. Dividing the input layer by a rescale factor (e.g. 10) counters the
//! fan-in bias of global magnitude pruning on low-dimensional inputs.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

use super::{InitSnapshot, NetworkSpec, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    KaimingUniform,
    XavierUniform,
}

impl InitScheme {
    /// Uniform bound for a layer with the given fan-in/out.
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::KaimingUniform => (6.0 / fan_in as f64).sqrt(),
            InitScheme::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }
}

/// Initializes a network and freezes the rewind target.
pub fn init_network(
    spec: &NetworkSpec,
    scheme: InitScheme,
    input_layer_rescale: f64,
    seed: u64,
) -> Result<(ParamSet, InitSnapshot)> {
    if !(input_layer_rescale > 0.0) {
        return Err(Error::invalid("input_layer_rescale must be positive"));
    }
    let mut rng = rng::stream(seed, &[tag::INIT]);
    let mut params = ParamSet::zeros(spec);
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let (fan_out, fan_in) = layer.weight.dim();
        let mut b = scheme.bound(fan_in, fan_out);
        if i == 0 {
            b /= input_layer_rescale;
        }
        layer.weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-b..b));
        // biases stay zero
    }
    let snapshot = InitSnapshot { params: params.clone(), seed };
    Ok((params, snapshot))
}
