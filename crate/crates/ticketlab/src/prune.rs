//! Global magnitude pruning, rewinding and the four sparsity-generating
//! baseline conditions.
//!
//! "Prunable" always means the weight matrices; biases are neither masked nor
//! counted toward sparsity. Ties at equal magnitude break deterministically by
//! (layer index, row-major position) ascending.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::init::{init_network, InitScheme};
use crate::net::{InitSnapshot, MaskSet, NetworkSpec, ParamSet};
use crate::rng::{self, tag};

/// The four sparsity-generating IMP variants, differing in which of
/// {initial weights, mask, layer-wise pruning ratio} survive an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// The winning-ticket condition: keep mask and initial weights.
    MaskWeights,
    /// Keep the mask, permute surviving initial weights within each layer.
    MaskPermuted,
    /// Permute mask and weights within each layer (ratios retained).
    PermutedPermuted,
    /// Fresh init and a globally random sparsity-matched mask each iteration.
    RandomReinit,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::MaskWeights,
        Condition::MaskPermuted,
        Condition::PermutedPermuted,
        Condition::RandomReinit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::MaskWeights => "mask_weights",
            Condition::MaskPermuted => "mask_permuted",
            Condition::PermutedPermuted => "permuted_permuted",
            Condition::RandomReinit => "random_reinit",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask_weights" => Ok(Condition::MaskWeights),
            "mask_permuted" => Ok(Condition::MaskPermuted),
            "permuted_permuted" => Ok(Condition::PermutedPermuted),
            "random_reinit" => Ok(Condition::RandomReinit),
            other => Err(Error::invalid(format!("unknown condition '{other}'"))),
        }
    }
}

/// Accounting record for one prune step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneReport {
    pub iteration: usize,
    pub global_remaining: f64,
    pub per_layer_remaining: Vec<f64>,
    pub newly_pruned_count: usize,
}

/// Prunes `round(fraction * alive)` currently-alive weights with smallest
/// `|trained|` across all layers. Previously pruned positions stay pruned.
pub fn global_magnitude_prune(
    trained: &ParamSet,
    masks: &MaskSet,
    fraction: f64,
) -> Result<MaskSet> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("prune fraction must be in (0, 1)"));
    }
    if !masks.same_shape(trained) {
        return Err(Error::invalid("mask/param shape mismatch"));
    }
    // (magnitude, layer, row-major index) of alive weights
    let mut alive: Vec<(f64, usize, usize)> = Vec::new();
    for (li, (layer, mask)) in trained.layers.iter().zip(&masks.layers).enumerate() {
        let w = layer.weight.as_slice().unwrap();
        let m = mask.as_slice().unwrap();
        for (idx, (&wv, &mv)) in w.iter().zip(m.iter()).enumerate() {
            if mv != 0.0 {
                alive.push((wv.abs(), li, idx));
            }
        }
    }
    let n_prune = ((fraction * alive.len() as f64) + 0.5).floor() as usize;
    alive.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut out = masks.clone();
    for &(_, li, idx) in alive.iter().take(n_prune) {
        out.layers[li].as_slice_mut().unwrap()[idx] = 0.0;
    }
    Ok(out)
}

/// Resets alive weights to their snapshot values; masked positions become
/// exactly zero; biases take snapshot values.
pub fn rewind(snapshot: &InitSnapshot, masks: &MaskSet) -> Result<ParamSet> {
    if !masks.same_shape(&snapshot.params) {
        return Err(Error::invalid("mask/snapshot shape mismatch"));
    }
    let mut params = snapshot.params.clone();
    params.apply_mask(masks);
    Ok(params)
}

/// `mask/permuted`: redistributes the snapshot values at alive positions by a
/// uniform permutation within each layer. The mask itself is untouched.
pub fn permute_surviving_weights(
    snapshot: &InitSnapshot,
    masks: &MaskSet,
    seed: u64,
) -> Result<ParamSet> {
    if !masks.same_shape(&snapshot.params) {
        return Err(Error::invalid("mask/snapshot shape mismatch"));
    }
    let mut rng = rng::stream(seed, &[tag::PERMUTE]);
    let mut params = snapshot.params.clone();
    for (layer, mask) in params.layers.iter_mut().zip(&masks.layers) {
        let w = layer.weight.as_slice_mut().unwrap();
        let m = mask.as_slice().unwrap();
        let alive_idx: Vec<usize> =
            m.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
        let mut values: Vec<f64> = alive_idx.iter().map(|&i| w[i]).collect();
        values.shuffle(&mut rng);
        for wv in w.iter_mut() {
            *wv = 0.0;
        }
        for (&i, &v) in alive_idx.iter().zip(values.iter()) {
            w[i] = v;
        }
    }
    Ok(params)
}

/// `permuted/permuted`: resamples each layer's alive positions uniformly with
/// the alive count preserved exactly, then permutes the snapshot's alive
/// values into the new positions.
pub fn permute_mask_and_weights(
    snapshot: &InitSnapshot,
    masks: &MaskSet,
    seed: u64,
) -> Result<(ParamSet, MaskSet)> {
    if !masks.same_shape(&snapshot.params) {
        return Err(Error::invalid("mask/snapshot shape mismatch"));
    }
    let mut rng = rng::stream(seed, &[tag::PERMUTE, 1]);
    let mut params = snapshot.params.clone();
    let mut new_masks = masks.clone();
    for ((layer, mask), new_mask) in
        params.layers.iter_mut().zip(&masks.layers).zip(&mut new_masks.layers)
    {
        let w = layer.weight.as_slice_mut().unwrap();
        let m = mask.as_slice().unwrap();
        let alive_count = m.iter().filter(|&&v| v != 0.0).count();
        let mut values: Vec<f64> = m
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| w[i])
            .collect();
        values.shuffle(&mut rng);
        let mut positions: Vec<usize> = (0..m.len()).collect();
        positions.shuffle(&mut rng);
        positions.truncate(alive_count);

        let nm = new_mask.as_slice_mut().unwrap();
        for v in nm.iter_mut() {
            *v = 0.0;
        }
        for wv in w.iter_mut() {
            *wv = 0.0;
        }
        for (&pos, &v) in positions.iter().zip(values.iter()) {
            nm[pos] = 1.0;
            w[pos] = v;
        }
    }
    Ok((params, new_masks))
}

/// `random/re-init`: fresh initialization plus a mask whose alive positions
/// are a uniform random subset of ALL prunable positions globally; layer-wise
/// ratios are not constrained.
pub fn random_reinit(
    spec: &NetworkSpec,
    target_global_sparsity: f64,
    scheme: InitScheme,
    input_layer_rescale: f64,
    seed: u64,
) -> Result<(ParamSet, InitSnapshot, MaskSet)> {
    if !(0.0..1.0).contains(&target_global_sparsity) {
        return Err(Error::invalid("target_global_sparsity must be in [0, 1)"));
    }
    let (params, snapshot) =
        init_network(spec, scheme, input_layer_rescale, rng::derive(seed, &[tag::REINIT]))?;
    let total = params.n_weights();
    let n_alive = (((1.0 - target_global_sparsity) * total as f64) + 0.5).floor() as usize;
    let masks = random_mask_like(&params, n_alive, seed);
    let mut params = params;
    params.apply_mask(&masks);
    Ok((params, snapshot, masks))
}

/// Mask shaped like `params` with exactly `n_alive` alive positions drawn
/// uniformly over ALL prunable positions globally; layer-wise ratios are not
/// constrained.
pub fn random_mask_like(params: &ParamSet, n_alive: usize, seed: u64) -> MaskSet {
    let mut masks = MaskSet::ones_like(params);
    let total = masks.n_weights();

    // Floyd-style reservoir over global positions would also work; a full
    // shuffle of the index range is simpler at these sizes.
    let mut rng = rng::stream(seed, &[tag::REINIT, 1]);
    let mut global: Vec<usize> = (0..total).collect();
    for i in (1..global.len()).rev() {
        let j = rng.gen_range(0..=i);
        global.swap(i, j);
    }
    let dead: &[usize] = &global[n_alive.min(total)..];

    // layer offsets into the flattened global index space
    let mut offsets = Vec::with_capacity(masks.layers.len());
    let mut acc = 0;
    for m in &masks.layers {
        offsets.push(acc);
        acc += m.len();
    }
    for &g in dead {
        let li = match offsets.binary_search(&g) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        masks.layers[li].as_slice_mut().unwrap()[g - offsets[li]] = 0.0;
    }
    masks
}

/// Pure accounting: global and per-layer remaining fractions.
pub fn sparsity_stats(masks: &MaskSet) -> (f64, Vec<f64>) {
    let per_layer: Vec<f64> = masks
        .layers
        .iter()
        .map(|m| m.iter().filter(|&&v| v != 0.0).count() as f64 / m.len() as f64)
        .collect();
    (masks.remaining_fraction(), per_layer)
}
