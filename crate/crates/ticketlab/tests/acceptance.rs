//! End-to-end acceptance suite. Each numbered criterion prints one PASS/FAIL
//! line; the test fails if any criterion fails.
//!
//! Training-scale criteria run through an on-disk result cache under
//! `target/acceptance_cache`, keyed by the full run configuration, so
//! repeated invocations reuse finished runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;

use ticketlab::agents::{ExpertCheckpoint, ExpertPolicy, TrainSettings};
use ticketlab::analysis::{channel_ratio, input_column_stats, mask_transfer_train};
use ticketlab::config::ExperimentConfig;
use ticketlab::env::maze::{Channel, CELLS, CHANNELS};
use ticketlab::env::{Encoding, Environment, Layout, MazeGrid};
use ticketlab::imp::{run_imp_cached, run_imp_observed, ImpConfig, ImpRunReport};
use ticketlab::net::init::{init_network, InitScheme};
use ticketlab::net::loss::{cross_entropy_probs, mse};
use ticketlab::net::{self, Activation, MaskSet, NetworkSpec, OutputHead, ParamSet};
use ticketlab::prune::{global_magnitude_prune, Condition};
use ticketlab::rng::{self, tag};

/// Bump to invalidate all cached training runs.
const CACHE_EPOCH: &str = ";cache-epoch:1";

fn cache_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance_cache");
    std::fs::create_dir_all(&dir).expect("cache dir");
    dir
}

fn run_cached(cfg: &ExperimentConfig, condition: Condition, seed: u64) -> ImpRunReport {
    let env_spec = cfg.env_spec().expect("env spec");
    let trainer = cfg.build_trainer(&env_spec).expect("trainer");
    let mut imp_cfg: ImpConfig = cfg.imp_config(condition, seed).expect("imp config");
    imp_cfg.trainer_fingerprint.push_str(CACHE_EPOCH);
    run_imp_cached(trainer.as_ref(), &env_spec, &imp_cfg, &cache_dir()).expect("imp run")
}

/// Mean normalized return per iteration over a set of same-condition reports.
fn mean_curve(reports: &[ImpRunReport]) -> Vec<(f64, f64)> {
    let n_iters = reports.iter().map(|r| r.records.len()).min().unwrap();
    (0..n_iters)
        .map(|i| {
            let frac = reports[0].records[i].frac_remaining;
            let m = reports.iter().map(|r| r.records[i].normalized_return).sum::<f64>()
                / reports.len() as f64;
            (frac, m)
        })
        .collect()
}

fn first_below(curve: &[(f64, f64)], threshold: f64) -> Option<usize> {
    curve.iter().position(|&(_, m)| m < threshold)
}

/// Smallest remaining fraction at which the curve is still at or above the
/// threshold.
fn min_frac_at_or_above(curve: &[(f64, f64)], threshold: f64) -> Option<f64> {
    curve
        .iter()
        .filter(|&&(_, m)| m >= threshold)
        .map(|&(f, _)| f)
        .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.min(f))))
}

// ---------------------------------------------------------------------------
// Shared experiment configurations
// ---------------------------------------------------------------------------

const SEEDS5: [u64; 5] = [1, 2, 3, 4, 5];
const SEEDS3: [u64; 3] = [1, 2, 3];

fn cartpole_ppo_cfg(input_rescale: f64, iterations: usize) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        r#"
[run]
env = "cartpole"
algorithm = "ppo"
iterations = {iterations}

[network]
hidden = [64, 64]
activation = "tanh"
init = "kaiming"
input_rescale = {input_rescale}

[training]
budget = 80000
eval_every = 4000
eval_episodes = 20

[ppo]
lambda = 0.8
entropy_coeff = 0.001
"#
    ))
    .expect("config")
}

fn cartpole_bc_cfg(expert_path: &str, iterations: usize) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        r#"
[run]
env = "cartpole"
algorithm = "bc"
iterations = {iterations}

[network]
hidden = [64, 64]
activation = "tanh"
init = "kaiming"
input_rescale = 1.0

[training]
budget = 10000
eval_every = 1000
eval_episodes = 20

[bc]
lr = 0.001
expert_path = "{expert_path}"
"#
    ))
    .expect("config")
}

fn acrobot_ppo_cfg() -> ExperimentConfig {
    ExperimentConfig::parse(
        r#"
[run]
env = "acrobot"
algorithm = "ppo"
iterations = 10

[network]
hidden = [64, 64]
activation = "tanh"
init = "kaiming"
input_rescale = 10.0

[training]
budget = 500000
eval_every = 25000
eval_episodes = 20

[ppo]
lambda = 0.95
entropy_coeff = 0.01
"#,
    )
    .expect("config")
}

fn mazegrid_dqn_cfg() -> ExperimentConfig {
    ExperimentConfig::parse(
        r#"
[run]
env = "mazegrid"
algorithm = "dqn"
encoding = "object_map"
iterations = 10

[network]
hidden = [64, 64]
activation = "relu"
init = "kaiming"
input_rescale = 1.0

[training]
budget = 500000
eval_every = 25000
eval_episodes = 10

[dqn]
buffer_capacity = 20000
"#,
    )
    .expect("config")
}

/// Trains (once) and caches the dense Cart-Pole expert used by the BC runs.
fn ensure_cartpole_expert() -> PathBuf {
    let path = cache_dir().join("cartpole_expert_v1.json");
    if path.exists() {
        if ExpertCheckpoint::load(&path).is_ok() {
            return path;
        }
    }
    let cfg = cartpole_ppo_cfg(1.0, 1);
    let env_spec = cfg.env_spec().unwrap();
    let trainer = cfg.build_trainer(&env_spec).unwrap();
    let (params, _) = trainer.init(rng::derive(101, &[tag::INIT])).unwrap();
    let masks = MaskSet::ones_like(&params);
    let settings = TrainSettings {
        budget: 80_000,
        eval_every: 4_000,
        eval_episodes: 20,
        seed: 101,
        eval_seed: 202,
        checkpoint_steps: vec![],
    };
    let outcome = trainer.train(&params, &masks, &settings).unwrap();
    assert!(
        outcome.best_return >= 195.0,
        "expert failed to solve the task: {}",
        outcome.best_return
    );
    let spec = cfg.network_spec(&env_spec).unwrap();
    let ckpt = ExpertCheckpoint::new(ExpertPolicy { spec, params: outcome.best_params }).unwrap();
    ckpt.save(&path).unwrap();
    path
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

type CriterionResult = Result<(), String>;

fn fail(msg: impl Into<String>) -> CriterionResult {
    Err(msg.into())
}

/// 1: analytic gradients match central finite differences.
fn criterion_gradients() -> CriterionResult {
    let mut rng = rng::stream(40, &[1]);
    let mut max_rel = 0.0f64;
    for trial in 0..50 {
        let n_layers = rng.gen_range(2..=3);
        let mut sizes = Vec::new();
        for _ in 0..=n_layers {
            sizes.push(rng.gen_range(2..=6));
        }
        let activation = if trial % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let head = if trial % 3 == 0 { OutputHead::SoftmaxLogits } else { OutputHead::Linear };
        let spec = NetworkSpec::new(sizes.clone(), activation, head).unwrap();
        let (params, _) =
            init_network(&spec, InitScheme::KaimingUniform, 1.0, rng.gen()).unwrap();
        let mut masks = MaskSet::ones_like(&params);
        for m in &mut masks.layers {
            for v in m.iter_mut() {
                if rng.gen::<f64>() < 0.4 {
                    *v = 0.0;
                }
            }
        }
        let batch = rng.gen_range(1..=8);
        let x = Array2::from_shape_fn((batch, spec.input_dim()), |_| rng.gen_range(-1.0..1.0));
        let out_dim = spec.output_dim();
        let loss_target: Array2<f64> = match head {
            OutputHead::Linear => {
                Array2::from_shape_fn((batch, out_dim), |_| rng.gen_range(-1.0..1.0))
            }
            OutputHead::SoftmaxLogits => {
                let mut t =
                    Array2::from_shape_fn((batch, out_dim), |_| rng.gen_range(0.1..1.0));
                for mut row in t.rows_mut() {
                    let s = row.sum();
                    row.mapv_inplace(|v| v / s);
                }
                t
            }
        };
        let loss_of = |p: &ParamSet| -> f64 {
            let out = net::forward_batch(p, &masks, activation, x.view()).unwrap();
            match head {
                OutputHead::Linear => mse(&out, loss_target.view()).0,
                OutputHead::SoftmaxLogits => cross_entropy_probs(&out, loss_target.view()).0,
            }
        };
        let (_, analytic) = net::grad_batch(&params, &masks, activation, x.view(), |out| {
            match head {
                OutputHead::Linear => mse(out, loss_target.view()),
                OutputHead::SoftmaxLogits => cross_entropy_probs(out, loss_target.view()),
            }
        })
        .unwrap();

        let h = 1e-6;
        for li in 0..params.n_layers() {
            let shape = params.layers[li].weight.dim();
            for r in 0..shape.0 {
                for c in 0..shape.1 {
                    let mut plus = params.clone();
                    plus.layers[li].weight[[r, c]] += h;
                    let mut minus = params.clone();
                    minus.layers[li].weight[[r, c]] -= h;
                    let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                    let a = analytic.layers[li].weight[[r, c]];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                    max_rel = max_rel.max(rel);
                }
            }
            for b in 0..params.layers[li].bias.len() {
                let mut plus = params.clone();
                plus.layers[li].bias[b] += h;
                let mut minus = params.clone();
                minus.layers[li].bias[b] -= h;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let a = analytic.layers[li].bias[b];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                max_rel = max_rel.max(rel);
            }
        }
    }
    if max_rel <= 1e-4 {
        Ok(())
    } else {
        fail(format!("max relative gradient error {max_rel:.2e} > 1e-4"))
    }
}

/// 2: 25 prune steps at fraction 0.2 follow 0.8^k within rounding.
fn criterion_schedule() -> CriterionResult {
    let spec =
        NetworkSpec::new(vec![8, 32, 32, 4], Activation::Relu, OutputHead::Linear).unwrap();
    let (params, _) = init_network(&spec, InitScheme::KaimingUniform, 1.0, 99).unwrap();
    let total = params.n_weights() as f64;
    let mut masks = MaskSet::ones_like(&params);
    for k in 1..=25usize {
        masks = global_magnitude_prune(&params, &masks, 0.2)
            .map_err(|e| format!("prune failed at {k}: {e}"))?;
        let frac = masks.remaining_fraction();
        let target = 0.8f64.powi(k as i32);
        let tol = (k as f64 + 1.0) / total;
        if (frac - target).abs() > tol {
            return fail(format!(
                "iteration {k}: remaining {frac:.6} vs 0.8^{k}={target:.6} (tol {tol:.6})"
            ));
        }
    }
    Ok(())
}

/// 3: Table-1 condition contracts hold across seeded short runs.
fn criterion_condition_contracts() -> CriterionResult {
    let cfg = ExperimentConfig::parse(
        r#"
[run]
env = "cartpole"
algorithm = "ppo"
iterations = 5

[network]
hidden = [16, 16]
input_rescale = 1.0

[training]
budget = 2000
eval_every = 1000
eval_episodes = 2
random_policy_episodes = 3
"#,
    )
    .unwrap();
    let env_spec = cfg.env_spec().unwrap();

    let sorted_alive = |layer: &Array2<f64>, mask: &Array2<f64>| -> Vec<f64> {
        let mut v: Vec<f64> = layer
            .iter()
            .zip(mask.iter())
            .filter(|(_, &m)| m != 0.0)
            .map(|(&w, _)| w)
            .collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let is_submultiset = |small: &[f64], big: &[f64]| -> bool {
        let mut counts: HashMap<u64, i64> = HashMap::new();
        for &v in big {
            *counts.entry(v.to_bits()).or_default() += 1;
        }
        small.iter().all(|v| {
            let c = counts.entry(v.to_bits()).or_default();
            *c -= 1;
            *c >= 0
        })
    };

    for seed in 1..=10u64 {
        for condition in Condition::ALL {
            let trainer = cfg.build_trainer(&env_spec).unwrap();
            let mut imp_cfg = cfg.imp_config(condition, seed).unwrap();
            imp_cfg.run_id = format!("contract_{}_{}", condition.name(), seed);
            let snapshot = trainer.init(rng::derive(seed, &[tag::INIT])).unwrap().1;
            let mut captured: Vec<(ParamSet, MaskSet)> = Vec::new();
            run_imp_observed(trainer.as_ref(), &env_spec, &imp_cfg, &mut |_, p, m| {
                captured.push((p.clone(), m.clone()));
            })
            .map_err(|e| format!("run failed: {e}"))?;

            let total = snapshot.params.n_weights() as f64;
            for (k, (params, masks)) in captured.iter().enumerate() {
                if !masks.is_binary() {
                    return fail(format!("{condition:?} s{seed} iter {k}: non-binary mask"));
                }
                // Masked positions are exactly zero in the starting params.
                for (pl, ml) in params.layers.iter().zip(&masks.layers) {
                    for (&w, &m) in pl.weight.iter().zip(ml.iter()) {
                        if m == 0.0 && w != 0.0 {
                            return fail(format!(
                                "{condition:?} s{seed} iter {k}: live weight at masked position"
                            ));
                        }
                    }
                }
                let target = 0.8f64.powi(k as i32);
                let frac = masks.remaining_fraction();
                if (frac - target).abs() > (k as f64 + 1.0) / total {
                    return fail(format!(
                        "{condition:?} s{seed} iter {k}: fraction {frac:.4} off schedule"
                    ));
                }
                if k == 0 {
                    continue;
                }
                let prev_masks = &captured[k - 1].1;
                let subset = masks
                    .layers
                    .iter()
                    .zip(&prev_masks.layers)
                    .all(|(m, pm)| m.iter().zip(pm.iter()).all(|(&a, &b)| a == 0.0 || b != 0.0));
                match condition {
                    Condition::MaskWeights => {
                        if !subset {
                            return fail(format!("mask_weights s{seed} iter {k}: mask not monotone"));
                        }
                        for (li, (pl, ml)) in
                            params.layers.iter().zip(&masks.layers).enumerate()
                        {
                            let sl = &snapshot.params.layers[li];
                            for ((&w, &w0), &m) in
                                pl.weight.iter().zip(sl.weight.iter()).zip(ml.iter())
                            {
                                if m != 0.0 && w != w0 {
                                    return fail(format!(
                                        "mask_weights s{seed} iter {k}: rewound weight differs"
                                    ));
                                }
                            }
                        }
                    }
                    Condition::MaskPermuted => {
                        if !subset {
                            return fail(format!("mask_permuted s{seed} iter {k}: mask not monotone"));
                        }
                        for (li, (pl, ml)) in
                            params.layers.iter().zip(&masks.layers).enumerate()
                        {
                            let got = sorted_alive(&pl.weight, ml);
                            let want =
                                sorted_alive(&snapshot.params.layers[li].weight, ml);
                            if got != want {
                                return fail(format!(
                                    "mask_permuted s{seed} iter {k}: layer {li} value multiset changed"
                                ));
                            }
                        }
                    }
                    Condition::PermutedPermuted => {
                        for (li, (pl, ml)) in
                            params.layers.iter().zip(&masks.layers).enumerate()
                        {
                            let prev_count = prev_masks.layers[li]
                                .iter()
                                .filter(|&&v| v != 0.0)
                                .count();
                            let count = ml.iter().filter(|&&v| v != 0.0).count();
                            if count > prev_count {
                                return fail(format!(
                                    "permuted_permuted s{seed} iter {k}: layer {li} alive count grew"
                                ));
                            }
                            let got = sorted_alive(&pl.weight, ml);
                            let mut all: Vec<f64> = snapshot.params.layers[li]
                                .weight
                                .iter()
                                .copied()
                                .collect();
                            all.sort_by(f64::total_cmp);
                            if got.len() != count || !is_submultiset(&got, &all) {
                                return fail(format!(
                                    "permuted_permuted s{seed} iter {k}: layer {li} values not drawn from the snapshot"
                                ));
                            }
                        }
                    }
                    Condition::RandomReinit => {
                        // Only the global alive count is retained; weights are
                        // freshly drawn, so they should not match the snapshot.
                        let same = params
                            .layers
                            .iter()
                            .zip(&snapshot.params.layers)
                            .zip(&masks.layers)
                            .all(|((pl, sl), ml)| {
                                pl.weight
                                    .iter()
                                    .zip(sl.weight.iter())
                                    .zip(ml.iter())
                                    .all(|((&w, &w0), &m)| m == 0.0 || w == w0)
                            });
                        if same {
                            return fail(format!(
                                "random_reinit s{seed} iter {k}: weights equal the snapshot"
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// 4: Cart-Pole condition ordering at the mask_weights 0.9-crossing.
fn criterion_cartpole_ordering() -> CriterionResult {
    let expert = ensure_cartpole_expert();
    let ppo = cartpole_ppo_cfg(1.0, 20);
    let bc = cartpole_bc_cfg(expert.to_str().unwrap(), 30);
    for (name, cfg) in [("ppo", &ppo), ("bc", &bc)] {
        let mut curves = HashMap::new();
        for condition in Condition::ALL {
            let reports: Vec<ImpRunReport> =
                SEEDS5.iter().map(|&s| run_cached(cfg, condition, s)).collect();
            curves.insert(condition, mean_curve(&reports));
        }
        let mw = &curves[&Condition::MaskWeights];
        let mp = &curves[&Condition::MaskPermuted];
        let pp = &curves[&Condition::PermutedPermuted];
        let k = first_below(mw, 0.9).ok_or_else(|| {
            format!("{name}: mask_weights never drops below 0.9 within the run")
        })?;
        if !(mw[k].1 >= mp[k].1 && mp[k].1 > pp[k].1) {
            return fail(format!(
                "{name}: ordering violated at iteration {k}: mw={:.3} mp={:.3} pp={:.3}",
                mw[k].1, mp[k].1, pp[k].1
            ));
        }
        let k_pp = first_below(pp, 0.9)
            .ok_or_else(|| format!("{name}: permuted_permuted never drops below 0.9"))?;
        if k_pp >= k {
            return fail(format!(
                "{name}: permuted_permuted first drop at iteration {k_pp}, not before {k}"
            ));
        }
    }
    Ok(())
}

/// 5: BC keeps normalized return >= 0.9 to strictly higher sparsity than PPO.
fn criterion_bc_vs_ppo() -> CriterionResult {
    let expert = ensure_cartpole_expert();
    let ppo = cartpole_ppo_cfg(1.0, 20);
    let bc = cartpole_bc_cfg(expert.to_str().unwrap(), 30);
    let curve_of = |cfg: &ExperimentConfig| {
        let reports: Vec<ImpRunReport> =
            SEEDS5.iter().map(|&s| run_cached(cfg, Condition::MaskWeights, s)).collect();
        mean_curve(&reports)
    };
    let frac_ppo = min_frac_at_or_above(&curve_of(&ppo), 0.9)
        .ok_or("ppo never reaches 0.9 normalized return")?;
    let frac_bc = min_frac_at_or_above(&curve_of(&bc), 0.9)
        .ok_or("bc never reaches 0.9 normalized return")?;
    if frac_bc < frac_ppo {
        Ok(())
    } else {
        fail(format!(
            "bc supports 0.9 down to {frac_bc:.4} remaining, ppo down to {frac_ppo:.4}"
        ))
    }
}

/// 6: Cart-Pole tickets with rescaled input init eliminate exactly
/// {cart position, cart velocity} at some well-performing iteration.
fn criterion_cartpole_minimal_representation() -> CriterionResult {
    let cfg = cartpole_ppo_cfg(10.0, 8);
    let mut hits = 0;
    let mut detail = Vec::new();
    for &seed in &SEEDS5 {
        let report = run_cached(&cfg, Condition::MaskWeights, seed);
        let hit = report
            .records
            .iter()
            .any(|r| r.normalized_return >= 0.9 && r.eliminated_inputs == vec![0, 1]);
        if hit {
            hits += 1;
        } else {
            detail.push(format!(
                "s{seed}: {:?}",
                report
                    .records
                    .iter()
                    .map(|r| (r.iteration, r.eliminated_inputs.clone()))
                    .collect::<Vec<_>>()
            ));
        }
    }
    if hits >= 4 {
        Ok(())
    } else {
        fail(format!("only {hits}/5 seeds isolate the pole dimensions; {detail:?}"))
    }
}

/// 7: Acrobot tickets retain exactly the two angular velocities.
fn criterion_acrobot_minimal_representation() -> CriterionResult {
    let cfg = acrobot_ppo_cfg();
    let mut hits = 0;
    let mut detail = Vec::new();
    for &seed in &SEEDS5 {
        let report = run_cached(&cfg, Condition::MaskWeights, seed);
        let hit = report
            .records
            .iter()
            .any(|r| r.normalized_return >= 0.9 && r.eliminated_inputs == vec![0, 1, 2, 3]);
        if hit {
            hits += 1;
        } else {
            detail.push(format!(
                "s{seed}: {:?}",
                report
                    .records
                    .iter()
                    .map(|r| (r.iteration, r.eliminated_inputs.clone()))
                    .collect::<Vec<_>>()
            ));
        }
    }
    if hits >= 3 {
        Ok(())
    } else {
        fail(format!("only {hits}/5 seeds isolate the angular velocities; {detail:?}"))
    }
}

/// 8: a dense agent restricted to {pole angle, angular velocity} trains to
/// dense-level returns.
fn criterion_mask_transfer() -> CriterionResult {
    #[derive(serde::Serialize, serde::Deserialize)]
    struct TransferResult {
        dense_best: f64,
        transfer_best: f64,
    }
    let cfg = cartpole_ppo_cfg(1.0, 1);
    let env_spec = cfg.env_spec().unwrap();
    let mut dense_sum = 0.0;
    let mut transfer_sum = 0.0;
    for &seed in &SEEDS5 {
        let path = cache_dir().join(format!("cartpole_transfer_s{seed}_v2.json"));
        let result: TransferResult = if let Some(r) =
            std::fs::read_to_string(&path).ok().and_then(|j| serde_json::from_str(&j).ok())
        {
            r
        } else {
            let trainer = cfg.build_trainer(&env_spec).unwrap();
            let settings = TrainSettings {
                budget: 200_000,
                eval_every: 4_000,
                eval_episodes: 20,
                seed: rng::derive(seed, &[tag::TRAIN]),
                eval_seed: rng::derive(seed, &[tag::EVAL]),
                checkpoint_steps: vec![],
            };
            let init_seed = rng::derive(seed, &[tag::INIT]);
            let (params, _) = trainer.init(init_seed).unwrap();
            let masks = MaskSet::ones_like(&params);
            let dense = trainer.train(&params, &masks, &settings).unwrap();
            let transfer =
                mask_transfer_train(trainer.as_ref(), &[2, 3], &settings, init_seed).unwrap();
            let transfer_best =
                transfer.iter().map(|e| e.mean_return).fold(f64::NEG_INFINITY, f64::max);
            let r = TransferResult { dense_best: dense.best_return, transfer_best };
            std::fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
            r
        };
        dense_sum += result.dense_best;
        transfer_sum += result.transfer_best;
    }
    let dense = dense_sum / SEEDS5.len() as f64;
    let transfer = transfer_sum / SEEDS5.len() as f64;
    if transfer >= 0.95 * dense {
        Ok(())
    } else {
        fail(format!("transfer mean best {transfer:.1} < 0.95 * dense mean best {dense:.1}"))
    }
}

/// 9: MazeGrid desk-scale structural findings.
fn criterion_mazegrid_structure() -> CriterionResult {
    let cfg = mazegrid_dqn_cfg();
    let mut input_wins = 0;
    let mut agent_wins = 0;
    for &seed in &SEEDS3 {
        let report = run_cached(&cfg, Condition::MaskWeights, seed);
        let last = report.records.last().ok_or("empty report")?;
        let input = last.layer_remaining[0];
        if last.layer_remaining[1..].iter().all(|&r| input < r) {
            input_wins += 1;
        }
        let masks = report.final_masks.as_ref().ok_or("missing final mask")?;
        let params = report.final_best_params.as_ref().ok_or("missing final params")?;
        let summary = input_column_stats(params, masks, Some((CHANNELS, CELLS)))
            .map_err(|e| e.to_string())?;
        let ratios = channel_ratio(&summary, masks.layers[0].nrows()).map_err(|e| e.to_string())?;
        let agent = ratios[Channel::Agent as usize];
        if ratios
            .iter()
            .enumerate()
            .all(|(i, &r)| i == Channel::Agent as usize || agent > r)
        {
            agent_wins += 1;
        }
    }
    if input_wins >= 2 && agent_wins >= 2 {
        Ok(())
    } else {
        fail(format!(
            "input layer most pruned in {input_wins}/3 seeds, agent channel least pruned in {agent_wins}/3 seeds"
        ))
    }
}

/// 10: MazeGrid determinism and bounds over 1,000 seeded episodes.
fn criterion_mazegrid_determinism() -> CriterionResult {
    let layout = Layout::default_layout();
    let bounds = layout.patrol_bounds;
    let start_rows = [layout.enemy_starts[0].0, layout.enemy_starts[1].0];
    let mut rng = rng::stream(7, &[42]);
    for ep in 0..1000u64 {
        let mut env = MazeGrid::new(layout.clone(), Encoding::ObjectMap, layout.entangle_seed);
        env.reset(ep);
        let mut actions = Vec::new();
        let mut observations = Vec::new();
        let mut total = 0.0;
        loop {
            for (i, &(r, c)) in env.enemies().iter().enumerate() {
                if r != start_rows[i] || c < bounds[i].0 || c > bounds[i].1 {
                    return fail(format!(
                        "episode {ep}: enemy {i} left its patrol segment at ({r},{c})"
                    ));
                }
            }
            let a = rng.gen_range(0..4);
            actions.push(a);
            let step = env.step(a).map_err(|e| e.to_string())?;
            total += step.reward;
            observations.push(step.obs.clone());
            if step.done {
                break;
            }
        }
        if !(-12.0..=42.0).contains(&total) {
            return fail(format!("episode {ep}: return {total} out of [-12, 42]"));
        }
        // Bit-identical replay.
        let mut env2 = MazeGrid::new(layout.clone(), Encoding::ObjectMap, layout.entangle_seed);
        env2.reset(ep);
        for (a, obs) in actions.iter().zip(&observations) {
            let step = env2.step(*a).map_err(|e| e.to_string())?;
            if &step.obs != obs {
                return fail(format!("episode {ep}: replay diverged"));
            }
        }
    }
    Ok(())
}

/// Cache-warming helpers: run the slow training blocks individually, e.g.
/// `cargo test --test acceptance -- --ignored warm_mazegrid`.
#[test]
#[ignore = "cache warming helper"]
fn warm_mazegrid() {
    criterion_mazegrid_structure().unwrap();
}

#[test]
#[ignore = "cache warming helper"]
fn warm_acrobot() {
    criterion_acrobot_minimal_representation().unwrap();
}

#[test]
#[ignore = "cache warming helper"]
fn warm_cartpole() {
    let r4 = criterion_cartpole_ordering();
    let r5 = criterion_bc_vs_ppo();
    let r6 = criterion_cartpole_minimal_representation();
    let r8 = criterion_mask_transfer();
    println!("4: {r4:?}\n5: {r5:?}\n6: {r6:?}\n8: {r8:?}");
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(usize, &str, fn() -> CriterionResult)> = vec![
        (1, "gradient correctness vs finite differences", criterion_gradients),
        (2, "global pruning follows the 0.8^k schedule", criterion_schedule),
        (3, "condition contracts (retained artifacts)", criterion_condition_contracts),
        (10, "maze determinism, bounds and patrol limits", criterion_mazegrid_determinism),
        (6, "cart-pole minimal representation", criterion_cartpole_minimal_representation),
        (8, "mask transfer trains dense agents on the subset", criterion_mask_transfer),
        (4, "cart-pole condition ordering at the 0.9 crossing", criterion_cartpole_ordering),
        (5, "bc prunable to higher sparsity than ppo", criterion_bc_vs_ppo),
        (7, "acrobot minimal representation", criterion_acrobot_minimal_representation),
        (9, "mazegrid structural findings at desk scale", criterion_mazegrid_structure),
    ];
    let mut results: Vec<(usize, &str, CriterionResult)> = criteria
        .into_iter()
        .map(|(n, desc, f)| (n, desc, f()))
        .collect();
    results.sort_by_key(|r| r.0);
    let mut all_ok = true;
    for (n, desc, result) in &results {
        match result {
            Ok(()) => println!("ACCEPTANCE {n:2} PASS: {desc}"),
            Err(msg) => {
                all_ok = false;
                println!("ACCEPTANCE {n:2} FAIL: {desc} — {msg}");
            }
        }
    }
    assert!(all_ok, "one or more acceptance criteria failed");
}
