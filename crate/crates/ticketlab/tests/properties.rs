//! Property-based invariants for pruning, mask application, advantage
//! estimation and the seeding scheme.

use std::collections::HashMap;

use proptest::prelude::*;

use ticketlab::agents::gae;
use ticketlab::net::init::{init_network, InitScheme};
use ticketlab::net::{Activation, MaskSet, NetworkSpec, OutputHead, ParamSet};
use ticketlab::prune::{
    global_magnitude_prune, permute_mask_and_weights, permute_surviving_weights,
    random_mask_like, rewind,
};
use ticketlab::rng;

fn small_net(seed: u64) -> (NetworkSpec, ParamSet, ticketlab::net::InitSnapshot) {
    let spec =
        NetworkSpec::new(vec![5, 12, 7, 3], Activation::Tanh, OutputHead::Linear).unwrap();
    let (params, snapshot) = init_network(&spec, InitScheme::KaimingUniform, 1.0, seed).unwrap();
    (spec, params, snapshot)
}

/// A partially pruned mask derived deterministically from `seed`.
fn some_mask(params: &ParamSet, seed: u64, keep: f64) -> MaskSet {
    let n = params.n_weights();
    random_mask_like(params, ((n as f64) * keep).round().max(1.0) as usize, seed)
}

fn layer_multiset(values: &ndarray::Array2<f64>, mask: &ndarray::Array2<f64>) -> Vec<u64> {
    let mut v: Vec<u64> = values
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m != 0.0)
        .map(|(&w, _)| w.to_bits())
        .collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn magnitude_prune_invariants(seed in 0u64..1_000_000, frac in 0.05f64..0.6) {
        let (_, params, _) = small_net(seed);
        let masks = some_mask(&params, seed ^ 0xabcd, 0.8);
        let alive_before = masks.alive_count();
        let next = global_magnitude_prune(&params, &masks, frac).unwrap();

        prop_assert!(next.is_binary());
        // Monotone: pruning only removes.
        for (m, pm) in next.layers.iter().zip(&masks.layers) {
            for (&a, &b) in m.iter().zip(pm.iter()) {
                prop_assert!(a == 0.0 || b != 0.0);
            }
        }
        // Exactly round(frac * alive) weights removed.
        let expected_removed = (frac * alive_before as f64).round() as usize;
        prop_assert_eq!(next.alive_count(), alive_before - expected_removed);

        // Global threshold property: every removed weight has magnitude at
        // most that of every kept weight (ties broken arbitrarily).
        let mut removed_max = f64::NEG_INFINITY;
        let mut kept_min = f64::INFINITY;
        for ((pl, ml), nl) in params.layers.iter().zip(&masks.layers).zip(&next.layers) {
            for ((&w, &was), &is) in pl.weight.iter().zip(ml.iter()).zip(nl.iter()) {
                if was != 0.0 && is == 0.0 {
                    removed_max = removed_max.max(w.abs());
                } else if is != 0.0 {
                    kept_min = kept_min.min(w.abs());
                }
            }
        }
        if removed_max.is_finite() && kept_min.is_finite() {
            prop_assert!(removed_max <= kept_min);
        }
    }

    #[test]
    fn rewind_is_a_masked_projection(seed in 0u64..1_000_000) {
        let (_, params, snapshot) = small_net(seed);
        let masks = some_mask(&params, seed ^ 1, 0.5);
        let rewound = rewind(&snapshot, &masks).unwrap();
        for ((rl, sl), ml) in rewound.layers.iter().zip(&snapshot.params.layers).zip(&masks.layers) {
            for ((&w, &w0), &m) in rl.weight.iter().zip(sl.weight.iter()).zip(ml.iter()) {
                if m == 0.0 {
                    prop_assert_eq!(w, 0.0);
                } else {
                    prop_assert_eq!(w, w0);
                }
            }
        }
        // Idempotent under re-masking.
        let mut again = rewound.clone();
        again.apply_mask(&masks);
        for (a, b) in again.layers.iter().zip(&rewound.layers) {
            prop_assert_eq!(&a.weight, &b.weight);
            prop_assert_eq!(&a.bias, &b.bias);
        }
    }

    #[test]
    fn weight_permutation_preserves_layer_multisets(seed in 0u64..1_000_000) {
        let (_, params, snapshot) = small_net(seed);
        let masks = some_mask(&params, seed ^ 2, 0.5);
        let permuted = permute_surviving_weights(&snapshot, &masks, seed).unwrap();
        for ((pl, sl), ml) in permuted.layers.iter().zip(&snapshot.params.layers).zip(&masks.layers) {
            prop_assert_eq!(
                layer_multiset(&pl.weight, ml),
                layer_multiset(&sl.weight, ml)
            );
            for (&w, &m) in pl.weight.iter().zip(ml.iter()) {
                if m == 0.0 {
                    prop_assert_eq!(w, 0.0);
                }
            }
            // Biases are not permuted.
            prop_assert_eq!(&pl.bias, &sl.bias);
        }
    }

    #[test]
    fn full_permutation_preserves_counts_and_values(seed in 0u64..1_000_000) {
        let (_, params, snapshot) = small_net(seed);
        let masks = some_mask(&params, seed ^ 3, 0.5);
        let (permuted, new_masks) = permute_mask_and_weights(&snapshot, &masks, seed).unwrap();
        prop_assert!(new_masks.is_binary());
        for (li, (nl, ol)) in new_masks.layers.iter().zip(&masks.layers).enumerate() {
            let new_count = nl.iter().filter(|&&v| v != 0.0).count();
            let old_count = ol.iter().filter(|&&v| v != 0.0).count();
            prop_assert_eq!(new_count, old_count, "layer {} count changed", li);
            // Values at the new positions are a permutation of the snapshot
            // values at the old positions.
            let got = layer_multiset(&permuted.layers[li].weight, nl);
            let want = layer_multiset(&snapshot.params.layers[li].weight, ol);
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn random_mask_hits_exact_count(seed in 0u64..1_000_000, keep in 0.05f64..0.95) {
        let (_, params, _) = small_net(seed);
        let n = params.n_weights();
        let target = ((n as f64) * keep).round().max(1.0) as usize;
        let mask = random_mask_like(&params, target, seed);
        prop_assert!(mask.is_binary());
        prop_assert_eq!(mask.alive_count(), target);
    }

    #[test]
    fn gae_lambda_one_is_discounted_monte_carlo(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..30),
        gamma in 0.5f64..1.0,
    ) {
        let n = rewards.len();
        // Single episode ending in a terminal: lambda = 1 advantages are the
        // full discounted return-to-go minus the value baseline.
        let values: Vec<f64> = (0..=n).map(|t| (t as f64 * 0.37).sin()).collect();
        let mut dones = vec![false; n];
        dones[n - 1] = true;
        let (adv, rets) = gae(&rewards, &values, &dones, gamma, 1.0);
        let mut g = 0.0;
        for t in (0..n).rev() {
            g = rewards[t] + gamma * g;
            prop_assert!((adv[t] - (g - values[t])).abs() < 1e-9);
            prop_assert!((rets[t] - g).abs() < 1e-9);
        }
    }

    #[test]
    fn gae_lambda_zero_is_one_step_td(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..30),
        gamma in 0.5f64..1.0,
    ) {
        let n = rewards.len();
        let values: Vec<f64> = (0..=n).map(|t| (t as f64 * 0.71).cos()).collect();
        let dones = vec![false; n];
        let (adv, _) = gae(&rewards, &values, &dones, gamma, 0.0);
        for t in 0..n {
            let td = rewards[t] + gamma * values[t + 1] - values[t];
            prop_assert!((adv[t] - td).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_is_blind_past_episode_boundaries(
        prefix in prop::collection::vec(-5.0f64..5.0, 1..10),
        suffix_a in prop::collection::vec(-5.0f64..5.0, 1..10),
        suffix_b in prop::collection::vec(-5.0f64..5.0, 1..10),
    ) {
        // Everything after a terminal transition cannot influence the
        // advantages before it.
        let build = |suffix: &[f64]| {
            let mut rewards = prefix.clone();
            rewards.extend_from_slice(suffix);
            let n = rewards.len();
            let values: Vec<f64> = (0..=n).map(|t| (t as f64 * 0.53).sin()).collect();
            let mut dones = vec![false; n];
            dones[prefix.len() - 1] = true;
            dones[n - 1] = true;
            gae(&rewards, &values, &dones, 0.99, 0.8).0
        };
        let a = build(&suffix_a);
        let b = build(&suffix_b);
        for t in 0..prefix.len() {
            prop_assert_eq!(a[t], b[t]);
        }
    }

    #[test]
    fn seed_derivation_separates_tag_paths(seed in 0u64..u64::MAX, a in 0u64..64, b in 0u64..64) {
        prop_assert_eq!(rng::derive(seed, &[a]), rng::derive(seed, &[a]));
        if a != b {
            prop_assert_ne!(rng::derive(seed, &[a]), rng::derive(seed, &[b]));
            prop_assert_ne!(rng::derive(seed, &[a, b]), rng::derive(seed, &[b, a]));
        }
    }
}

#[test]
fn repeated_pruning_never_duplicates_positions() {
    // Book-keeping check: across 10 successive prunes the set of removed
    // positions is disjoint and the union of removed + alive is everything.
    let (_, params, _) = small_net(17);
    let mut masks = MaskSet::ones_like(&params);
    let mut removed: HashMap<(usize, usize), usize> = HashMap::new();
    for it in 0..10 {
        let next = global_magnitude_prune(&params, &masks, 0.2).unwrap();
        for (li, (nl, ol)) in next.layers.iter().zip(&masks.layers).enumerate() {
            for (j, (&a, &b)) in nl.iter().zip(ol.iter()).enumerate() {
                if b != 0.0 && a == 0.0 {
                    assert!(removed.insert((li, j), it).is_none());
                }
            }
        }
        masks = next;
    }
    assert_eq!(removed.len() + masks.alive_count(), params.n_weights());
}
