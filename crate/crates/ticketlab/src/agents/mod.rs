//! Trainers sharing the masked-network engine: double-DQN with prioritized
//! replay, PPO with GAE, and supervised behavioral cloning from a frozen
//! expert. Each trainer exposes the same `Trainer` surface so the IMP harness
//! can loop over them uniformly.

pub mod bc;
pub mod dqn;
pub mod ppo;
pub mod replay;

pub use bc::{BcHp, BcTrainer, ExpertCheckpoint, ExpertPolicy};
pub use dqn::{double_q_target, DqnHp, DqnTrainer};
pub use ppo::{gae, PpoHp, PpoTrainer};

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{make_env, Encoding, EnvId, Environment, Layout};
use crate::error::Result;
use crate::net::init::InitScheme;
use crate::net::loss::softmax_1d;
use crate::net::{self, Activation, InitSnapshot, MaskSet, ParamSet};
use crate::rng::{self, tag};

/// One environment interaction record.
#[derive(Debug, Clone)]
pub struct Transition {
    pub s: Array1<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Array1<f64>,
    pub done: bool,
}

/// How an action is drawn from network outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    /// Argmax with lowest-index tie-break.
    Greedy,
    /// Uniform with probability eps, otherwise greedy.
    EpsilonGreedy(f64),
    /// Sample from softmax(values).
    SampleCategorical,
}

/// Selects an action from Q-values or logits.
pub fn act_from_values<R: Rng>(values: ArrayView1<f64>, mode: ActMode, rng: &mut R) -> usize {
    let greedy = || {
        let mut best = 0;
        for i in 1..values.len() {
            if values[i] > values[best] {
                best = i;
            }
        }
        best
    };
    match mode {
        ActMode::Greedy => greedy(),
        ActMode::EpsilonGreedy(eps) => {
            if rng.gen::<f64>() < eps {
                rng.gen_range(0..values.len())
            } else {
                greedy()
            }
        }
        ActMode::SampleCategorical => {
            let probs = softmax_1d(values);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        }
    }
}

/// Forward pass plus action selection.
pub fn act(
    params: &ParamSet,
    masks: &MaskSet,
    activation: Activation,
    obs: ArrayView1<f64>,
    mode: ActMode,
    rng: &mut impl Rng,
) -> Result<usize> {
    let out = net::forward(params, masks, activation, obs)?;
    Ok(act_from_values(out.view(), mode, rng))
}

/// Everything needed to construct a fresh environment instance.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub id: EnvId,
    pub encoding: Encoding,
    pub layout: Layout,
    /// Seed of the entangled-encoding projection (fixed across IMP iterations).
    pub entangle_seed: u64,
}

impl EnvSpec {
    pub fn make(&self) -> Box<dyn Environment> {
        make_env(self.id, self.encoding, &self.layout, self.entangle_seed)
    }
}

/// Per-iteration training knobs handed down by the harness.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    /// Environment-step budget for this iteration.
    pub budget: usize,
    /// Steps between evaluation points.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Training stream seed (shared across conditions at equal iteration).
    pub seed: u64,
    /// Evaluation episode seed base.
    pub eval_seed: u64,
    /// Steps at which parameter checkpoints must be captured (late rewinding).
    pub checkpoint_steps: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub mean_return: f64,
}

/// Result of one training iteration: the best-evaluation checkpoint is what
/// IMP prunes.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_params: ParamSet,
    pub best_return: f64,
    pub best_step: usize,
    pub evals: Vec<EvalPoint>,
    pub checkpoints: Vec<(usize, ParamSet)>,
}

/// Uniform trainer surface for the IMP harness. The `ParamSet` handled here
/// is the network under pruning (DQN online net, PPO actor, BC student; with
/// critic pruning enabled the actor and critic layers are concatenated).
pub trait Trainer {
    /// Draws a fresh initialization for the pruned network.
    fn init(&self, seed: u64) -> Result<(ParamSet, InitSnapshot)>;

    fn activation(&self) -> Activation;

    /// Trains `start` under `masks` for one IMP iteration.
    fn train(&self, start: &ParamSet, masks: &MaskSet, settings: &TrainSettings) -> Result<TrainOutcome>;

    /// Greedy evaluation rollouts; returns (mean, per-episode returns).
    fn evaluate(&self, params: &ParamSet, masks: &MaskSet, n_episodes: usize, seed: u64) -> Result<(f64, Vec<f64>)>;
}

/// Greedy rollouts of a masked network on fresh episode seed streams.
pub fn evaluate_policy(
    env_spec: &EnvSpec,
    params: &ParamSet,
    masks: &MaskSet,
    activation: Activation,
    n_episodes: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut env = env_spec.make();
    let mut rng = rng::stream(seed, &[tag::EVAL]);
    let mut returns = Vec::with_capacity(n_episodes);
    for ep in 0..n_episodes {
        let mut obs = env.reset(rng::derive(seed, &[tag::EVAL, ep as u64]));
        let mut total = 0.0;
        loop {
            let a = act(params, masks, activation, obs.view(), ActMode::Greedy, &mut rng)?;
            let r = env.step(a)?;
            total += r.reward;
            obs = r.obs;
            if r.done {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / n_episodes as f64;
    Ok((mean, returns))
}

/// Mean return of a uniform-random policy; the zero point of normalized
/// performance.
pub fn random_policy_return(env_spec: &EnvSpec, n_episodes: usize, seed: u64) -> Result<f64> {
    let mut env = env_spec.make();
    let mut rng = rng::stream(seed, &[tag::RANDOM_POLICY]);
    let n_actions = env.n_actions();
    let mut total = 0.0;
    for ep in 0..n_episodes {
        env.reset(rng::derive(seed, &[tag::RANDOM_POLICY, ep as u64]));
        loop {
            let r = env.step(rng.gen_range(0..n_actions))?;
            total += r.reward;
            if r.done {
                break;
            }
        }
    }
    Ok(total / n_episodes as f64)
}

/// Shared helper: network init with the configured scheme and input rescale.
pub(crate) fn init_with(
    spec: &crate::net::NetworkSpec,
    scheme: InitScheme,
    rescale: f64,
    seed: u64,
) -> Result<(ParamSet, InitSnapshot)> {
    crate::net::init::init_network(spec, scheme, rescale, seed)
}
