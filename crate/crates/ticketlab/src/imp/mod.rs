//! The iterative magnitude pruning harness.
//!
//! One run fixes a (condition, seed) pair and loops train -> evaluate ->
//! prune -> rewind/permute/re-init for a configured number of iterations,
//! pruning the weights of the best evaluation checkpoint of each iteration.
//! Conditions share environment seed streams at equal iteration index, so
//! condition comparisons are paired. Reports are serializable and a content
//! hash of the configuration keys an on-disk result cache.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::Instant;

use crate::agents::{random_policy_return, EnvSpec, EvalPoint, TrainOutcome, TrainSettings, Trainer};
use crate::error::{Error, Result};
use crate::net::{InitSnapshot, MaskSet, ParamSet};
use crate::prune::{
    self, global_magnitude_prune, permute_mask_and_weights, permute_surviving_weights, rewind,
    Condition,
};
use crate::rng::{self, tag};

/// Harness-level knobs for one (condition, seed) run. The trainer carries the
/// algorithm, network and environment; everything here is condition-agnostic
/// except `condition` itself. `trainer_fingerprint` must identify the trainer
/// setup (algorithm, hyperparameters, network, environment) so that the
/// config hash keys the cache correctly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpConfig {
    pub run_id: String,
    pub condition: Condition,
    pub seed: u64,
    /// Number of IMP iterations after the dense iteration 0.
    pub iterations: usize,
    pub prune_fraction: f64,
    /// Training budget per iteration (environment steps, or samples for BC).
    pub budget: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Episodes used to pin the random-policy return for normalization.
    pub random_policy_episodes: usize,
    /// Late rewinding: rewind target becomes the iteration-0 checkpoint at
    /// this step instead of the initialization. 0 means standard rewind.
    pub rewind_step: usize,
    /// Caller-provided description of the trainer (hashed into the cache key).
    pub trainer_fingerprint: String,
}

impl ImpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if self.budget == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::invalid("budgets and evaluation settings must be positive"));
        }
        if !(0.0..1.0).contains(&self.prune_fraction) || self.prune_fraction <= 0.0 {
            return Err(Error::invalid("prune_fraction must be in (0, 1)"));
        }
        if self.rewind_step > self.budget {
            return Err(Error::Precondition(format!(
                "rewind_step {} exceeds the per-iteration budget {}",
                self.rewind_step, self.budget
            )));
        }
        Ok(())
    }

    /// Content hash over every field, used as the cache key.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialization cannot fail");
        hex::encode(Sha256::digest(&json))
    }
}

/// One completed IMP iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Global fraction of weights remaining during this iteration's training.
    pub frac_remaining: f64,
    pub layer_remaining: Vec<f64>,
    pub best_return: f64,
    pub best_step: usize,
    /// (best - random) / (dense_best - random).
    pub normalized_return: f64,
    /// Input dimensions whose first-layer mask column is entirely zero.
    pub eliminated_inputs: Vec<usize>,
    pub evals: Vec<EvalPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpRunReport {
    pub run_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub config_hash: String,
    pub layout_hash: String,
    pub random_policy_return: f64,
    /// Best return of the dense iteration 0 (normalization reference).
    pub dense_best: f64,
    pub records: Vec<IterationRecord>,
    /// Mask of the last completed iteration (post-hoc input/channel analysis).
    #[serde(default)]
    pub final_masks: Option<MaskSet>,
    /// Best checkpoint of the last completed iteration.
    #[serde(default)]
    pub final_best_params: Option<ParamSet>,
    /// Set when a numeric failure aborted the run; `records` is then partial.
    pub failed_iteration: Option<usize>,
    pub failure: Option<String>,
    pub wall_clock_secs: f64,
}

/// Input dimensions invisible to the network: first-layer mask columns that
/// are entirely zero.
pub fn eliminated_inputs(masks: &MaskSet) -> Vec<usize> {
    let first = &masks.layers[0];
    (0..first.ncols()).filter(|&j| first.column(j).iter().all(|&m| m == 0.0)).collect()
}

/// Artifacts handed to a per-iteration observer before training starts:
/// the parameters and mask the iteration will train under.
pub type IterationObserver<'a> = &'a mut dyn FnMut(usize, &ParamSet, &MaskSet);

pub fn run_imp(trainer: &dyn Trainer, env_spec: &EnvSpec, cfg: &ImpConfig) -> Result<ImpRunReport> {
    run_imp_observed(trainer, env_spec, cfg, &mut |_, _, _| {})
}

/// `run_imp` with a hook that sees each iteration's starting (params, mask);
/// used by the condition-contract tests.
pub fn run_imp_observed(
    trainer: &dyn Trainer,
    env_spec: &EnvSpec,
    cfg: &ImpConfig,
    observer: IterationObserver,
) -> Result<ImpRunReport> {
    cfg.validate()?;
    let start_time = Instant::now();
    let config_hash = cfg.hash();
    let layout_hash = env_spec.layout.hash.clone();

    let random_return = random_policy_return(
        env_spec,
        cfg.random_policy_episodes,
        rng::derive(cfg.seed, &[tag::RANDOM_POLICY]),
    )?;

    let (mut params, init_snapshot) = trainer.init(rng::derive(cfg.seed, &[tag::INIT]))?;
    let mut masks = MaskSet::ones_like(&params);
    // Rewind target; replaced by the late-rewind checkpoint after iteration 0.
    let mut rewind_snapshot = init_snapshot;

    let mut report = ImpRunReport {
        run_id: cfg.run_id.clone(),
        condition: cfg.condition,
        seed: cfg.seed,
        config_hash,
        layout_hash,
        random_policy_return: random_return,
        dense_best: f64::NAN,
        records: Vec::new(),
        final_masks: None,
        final_best_params: None,
        failed_iteration: None,
        failure: None,
        wall_clock_secs: 0.0,
    };

    for iter in 0..=cfg.iterations {
        observer(iter, &params, &masks);
        let settings = TrainSettings {
            budget: cfg.budget,
            eval_every: cfg.eval_every,
            eval_episodes: cfg.eval_episodes,
            // Shared across conditions at equal iteration index.
            seed: rng::derive(cfg.seed, &[tag::TRAIN, iter as u64]),
            eval_seed: rng::derive(cfg.seed, &[tag::EVAL, iter as u64]),
            checkpoint_steps: if iter == 0 && cfg.rewind_step > 0 {
                vec![cfg.rewind_step]
            } else {
                Vec::new()
            },
        };

        let outcome = match trainer.train(&params, &masks, &settings) {
            Ok(o) => o,
            Err(Error::Numeric(msg)) => {
                report.failed_iteration = Some(iter);
                report.failure = Some(msg);
                report.wall_clock_secs = start_time.elapsed().as_secs_f64();
                return Ok(report);
            }
            Err(e) => return Err(e),
        };

        if iter == 0 {
            report.dense_best = outcome.best_return;
            if cfg.rewind_step > 0 {
                rewind_snapshot = late_rewind_snapshot(&outcome, cfg)?;
            }
        }

        let (frac, layer_remaining) = prune::sparsity_stats(&masks);
        let denom = report.dense_best - random_return;
        let normalized = if denom.abs() < 1e-12 {
            f64::NAN
        } else {
            (outcome.best_return - random_return) / denom
        };
        report.records.push(IterationRecord {
            iteration: iter,
            frac_remaining: frac,
            layer_remaining,
            best_return: outcome.best_return,
            best_step: outcome.best_step,
            normalized_return: normalized,
            eliminated_inputs: eliminated_inputs(&masks),
            evals: outcome.evals.clone(),
        });

        if iter == cfg.iterations {
            report.final_masks = Some(masks.clone());
            report.final_best_params = Some(outcome.best_params.clone());
            break;
        }

        // Prune the best checkpoint, then derive the next iteration's
        // starting point according to the condition.
        let next_masks =
            global_magnitude_prune(&outcome.best_params, &masks, cfg.prune_fraction)?;
        let it = iter as u64;
        match cfg.condition {
            Condition::MaskWeights => {
                params = rewind(&rewind_snapshot, &next_masks)?;
                masks = next_masks;
            }
            Condition::MaskPermuted => {
                params = permute_surviving_weights(
                    &rewind_snapshot,
                    &next_masks,
                    rng::derive(cfg.seed, &[tag::PERMUTE, it]),
                )?;
                masks = next_masks;
            }
            Condition::PermutedPermuted => {
                let (p, m) = permute_mask_and_weights(
                    &rewind_snapshot,
                    &next_masks,
                    rng::derive(cfg.seed, &[tag::PERMUTE, it]),
                )?;
                params = p;
                masks = m;
            }
            Condition::RandomReinit => {
                let (fresh, _) = trainer.init(rng::derive(cfg.seed, &[tag::REINIT, it]))?;
                let m = prune::random_mask_like(
                    &fresh,
                    next_masks.alive_count(),
                    rng::derive(cfg.seed, &[tag::REINIT, it, 1]),
                );
                params = fresh;
                params.apply_mask(&m);
                masks = m;
            }
        }
    }

    report.wall_clock_secs = start_time.elapsed().as_secs_f64();
    Ok(report)
}

fn late_rewind_snapshot(outcome: &TrainOutcome, cfg: &ImpConfig) -> Result<InitSnapshot> {
    let (step, params) = outcome
        .checkpoints
        .iter()
        .find(|(s, _)| *s >= cfg.rewind_step)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "no checkpoint recorded at rewind step {}",
                cfg.rewind_step
            ))
        })?;
    let _ = step;
    Ok(InitSnapshot { params: params.clone(), seed: cfg.seed })
}

/// Runs through an on-disk cache keyed by the config hash. Cached reports are
/// only valid because `run_imp` is deterministic in its config.
pub fn run_imp_cached(
    trainer: &dyn Trainer,
    env_spec: &EnvSpec,
    cfg: &ImpConfig,
    cache_dir: &Path,
) -> Result<ImpRunReport> {
    let path = cache_dir.join(format!("{}.json", cfg.hash()));
    if path.exists() {
        let json = std::fs::read_to_string(&path)?;
        if let Ok(report) = serde_json::from_str::<ImpRunReport>(&json) {
            return Ok(report);
        }
        // Unreadable cache entries are treated as absent and overwritten.
    }
    let report = run_imp(trainer, env_spec, cfg)?;
    std::fs::create_dir_all(cache_dir)?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(
        &tmp,
        serde_json::to_string(&report)
            .map_err(|e| Error::invalid(format!("report serialization failed: {e}")))?,
    )?;
    std::fs::rename(&tmp, &path)?;
    Ok(report)
}
