//! Behavioral cloning from a frozen expert.
//!
//! The student minimizes the cross-entropy between the expert's softmax
//! policy and its own, on states gathered by rolling out the expert. The
//! dataset is collected fresh at the start of every training call; the expert
//! itself is never updated.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::init::InitScheme;
use crate::net::loss::{cross_entropy_probs, softmax_1d};
use crate::net::{self, Activation, Adam, InitSnapshot, MaskSet, NetworkSpec, ParamSet};
use crate::rng::{self, tag};

use super::{
    act_from_values, evaluate_policy, ActMode, EnvSpec, EvalPoint, TrainOutcome, TrainSettings,
    Trainer,
};

/// A frozen teacher: network plus spec, read as a temperature-1 softmax policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertPolicy {
    pub spec: NetworkSpec,
    pub params: ParamSet,
}

impl ExpertPolicy {
    pub fn action_probs(&self, obs: ndarray::ArrayView1<f64>) -> Result<Array1<f64>> {
        let masks = MaskSet::ones(&self.spec);
        let logits = net::forward(&self.params, &masks, self.spec.activation, obs)?;
        Ok(softmax_1d(logits.view()))
    }
}

const CHECKPOINT_VERSION: u32 = 1;

/// On-disk expert format: versioned JSON with a content hash over the policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertCheckpoint {
    pub version: u32,
    pub policy: ExpertPolicy,
    pub content_hash: String,
}

impl ExpertCheckpoint {
    pub fn new(policy: ExpertPolicy) -> Result<Self> {
        let content_hash = hash_policy(&policy)?;
        Ok(ExpertCheckpoint { version: CHECKPOINT_VERSION, policy, content_hash })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::invalid(format!("expert serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads and verifies version and content hash.
    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let ckpt: ExpertCheckpoint = serde_json::from_str(&json)
            .map_err(|e| Error::Config(format!("malformed expert checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "expert checkpoint version {} unsupported (expected {})",
                ckpt.version, CHECKPOINT_VERSION
            )));
        }
        let expect = hash_policy(&ckpt.policy)?;
        if expect != ckpt.content_hash {
            return Err(Error::Config("expert checkpoint hash mismatch".into()));
        }
        Ok(ckpt)
    }
}

fn hash_policy(policy: &ExpertPolicy) -> Result<String> {
    let bytes = serde_json::to_vec(policy)
        .map_err(|e| Error::invalid(format!("expert serialization failed: {e}")))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone)]
pub struct BcHp {
    pub lr: f64,
    pub batch_size: usize,
    /// Passes over the collected dataset per training call.
    pub epochs: usize,
}

impl Default for BcHp {
    fn default() -> Self {
        BcHp { lr: 1e-3, batch_size: 256, epochs: 10 }
    }
}

pub struct BcTrainer {
    pub env_spec: EnvSpec,
    pub net_spec: NetworkSpec,
    pub scheme: InitScheme,
    pub input_rescale: f64,
    pub expert: ExpertPolicy,
    pub hp: BcHp,
}

impl BcTrainer {
    /// Rolls out the expert (sampling its softmax policy) until `budget`
    /// states are collected, and records the expert's action distribution at
    /// each state.
    fn collect_dataset(&self, budget: usize, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
        let masks = MaskSet::ones(&self.expert.spec);
        let mut env = self.env_spec.make();
        let mut rng = rng::stream(seed, &[tag::TRAIN]);
        let d = self.net_spec.input_dim();
        let k = self.net_spec.output_dim();
        let mut states = Array2::zeros((budget, d));
        let mut probs = Array2::zeros((budget, k));

        let mut episode = 0u64;
        let mut obs = env.reset(rng::derive(seed, &[tag::ENV, episode]));
        for i in 0..budget {
            states.row_mut(i).assign(&obs);
            let logits = net::forward(
                &self.expert.params,
                &masks,
                self.expert.spec.activation,
                obs.view(),
            )?;
            let p = softmax_1d(logits.view());
            probs.row_mut(i).assign(&p);
            let a = act_from_values(logits.view(), ActMode::SampleCategorical, &mut rng);
            let r = env.step(a)?;
            obs = if r.done {
                episode += 1;
                env.reset(rng::derive(seed, &[tag::ENV, episode]))
            } else {
                r.obs
            };
        }
        Ok((states, probs))
    }
}

impl Trainer for BcTrainer {
    fn init(&self, seed: u64) -> Result<(ParamSet, InitSnapshot)> {
        super::init_with(&self.net_spec, self.scheme, self.input_rescale, seed)
    }

    fn activation(&self) -> Activation {
        self.net_spec.activation
    }

    fn train(&self, start: &ParamSet, masks: &MaskSet, st: &TrainSettings) -> Result<TrainOutcome> {
        let act_fn = self.net_spec.activation;
        let (states, expert_probs) = self.collect_dataset(st.budget, st.seed)?;
        let n = states.nrows();

        let mut student = start.clone();
        student.apply_mask(masks);
        let mut adam = Adam::new(&student, self.hp.lr);
        let mut rng = rng::stream(st.seed, &[tag::TRAIN, 1]);

        let mut best_return = f64::NEG_INFINITY;
        let mut best_params = student.clone();
        let mut best_step = 0;
        let mut evals = Vec::new();
        let mut checkpoints = Vec::new();
        // Progress is measured in dataset samples processed, so checkpoint
        // and evaluation schedules line up with the sample budget.
        let mut processed = 0usize;
        let mut pending_ckpt = st.checkpoint_steps.clone();
        pending_ckpt.sort_unstable();

        let mut order: Vec<usize> = (0..n).collect();
        for _epoch in 0..self.hp.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.hp.batch_size) {
                let mut x = Array2::zeros((chunk.len(), states.ncols()));
                let mut p = Array2::zeros((chunk.len(), expert_probs.ncols()));
                for (row, &i) in chunk.iter().enumerate() {
                    x.row_mut(row).assign(&states.row(i));
                    p.row_mut(row).assign(&expert_probs.row(i));
                }
                let (_, grads) = net::grad_batch(&student, masks, act_fn, x.view(), |logits| {
                    cross_entropy_probs(logits, p.view())
                })?;
                adam.step(&mut student, masks, &grads)?;
                processed += chunk.len();
                while let Some(&c) = pending_ckpt.first() {
                    if processed < c {
                        break;
                    }
                    checkpoints.push((c, student.clone()));
                    pending_ckpt.remove(0);
                }
            }
            let (mean, _) = self.evaluate(
                &student,
                masks,
                st.eval_episodes,
                rng::derive(st.eval_seed, &[processed as u64]),
            )?;
            evals.push(EvalPoint { step: processed, mean_return: mean });
            if mean > best_return {
                best_return = mean;
                best_params = student.clone();
                best_step = processed;
            }
        }

        Ok(TrainOutcome { best_params, best_return, best_step, evals, checkpoints })
    }

    fn evaluate(
        &self,
        params: &ParamSet,
        masks: &MaskSet,
        n_episodes: usize,
        seed: u64,
    ) -> Result<(f64, Vec<f64>)> {
        evaluate_policy(&self.env_spec, params, masks, self.net_spec.activation, n_episodes, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init::init_network;
    use crate::net::OutputHead;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_expert() -> ExpertPolicy {
        let spec =
            NetworkSpec::new(vec![2, 3, 2], Activation::Tanh, OutputHead::SoftmaxLogits).unwrap();
        let (params, _) = init_network(&spec, InitScheme::XavierUniform, 1.0, 11).unwrap();
        ExpertPolicy { spec, params }
    }

    #[test]
    fn expert_probs_sum_to_one() {
        let expert = toy_expert();
        let p = expert.action_probs(array![0.3, -0.8].view()).unwrap();
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn checkpoint_round_trips_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("expert.json");
        let ckpt = ExpertCheckpoint::new(toy_expert()).unwrap();
        ckpt.save(&path).unwrap();
        let loaded = ExpertCheckpoint::load(&path).unwrap();
        assert_eq!(loaded.content_hash, ckpt.content_hash);
        assert_eq!(loaded.policy.params, ckpt.policy.params);
    }

    #[test]
    fn tampered_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("expert.json");
        let ckpt = ExpertCheckpoint::new(toy_expert()).unwrap();
        ckpt.save(&path).unwrap();
        let json = std::fs::read_to_string(&path).unwrap();
        // Flip a stored weight without updating the hash.
        let mut parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let w = &mut parsed["policy"]["params"]["layers"][0]["weight"]["data"][0];
        *w = serde_json::json!(w.as_f64().unwrap() + 1.0);
        std::fs::write(&path, serde_json::to_string(&parsed).unwrap()).unwrap();
        assert!(ExpertCheckpoint::load(&path).is_err());
    }
}
