//! PPO with clipped surrogate objective and generalized advantage estimation.
//!
//! Rollouts come from a set of parallel-in-lockstep environment workers; the
//! learner owns the single mutable parameter copy. By default only the actor
//! network is the pruning target and the critic is re-initialized fresh every
//! training call; with `prune_critic` enabled the pruned parameter set is the
//! concatenation of actor layers followed by critic layers.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::Result;
use crate::net::init::{init_network, InitScheme};
use crate::net::loss::{log_softmax, softmax};
use crate::net::{self, Activation, Adam, InitSnapshot, MaskSet, NetworkSpec, ParamSet};
use crate::rng::{self, tag};

use super::{
    act_from_values, evaluate_policy, ActMode, EnvSpec, EvalPoint, TrainOutcome, TrainSettings,
    Trainer,
};

#[derive(Debug, Clone)]
pub struct PpoHp {
    pub lr: f64,
    pub gamma: f64,
    /// GAE exponential weighting.
    pub lambda: f64,
    /// Likelihood-ratio clip epsilon.
    pub clip: f64,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    /// Optimization epochs per rollout batch (full-batch minibatches).
    pub epochs: usize,
    pub n_workers: usize,
    /// Environment steps per worker between updates.
    pub horizon: usize,
    /// Also prune the critic (default: actor only).
    pub prune_critic: bool,
}

impl Default for PpoHp {
    fn default() -> Self {
        PpoHp {
            lr: 5e-4,
            gamma: 0.99,
            lambda: 0.8,
            clip: 0.2,
            value_coeff: 0.5,
            entropy_coeff: 0.001,
            epochs: 4,
            n_workers: 4,
            horizon: 128,
            prune_critic: false,
        }
    }
}

/// Generalized advantage estimation.
///
/// `values` carries one extra trailing entry: the bootstrap value of the
/// state after the final transition. The recursion is
/// `delta_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t` and
/// `A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}`; returns are `A + V`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Array1<f64>, Array1<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values must include the bootstrap entry");
    assert_eq!(dones.len(), n);
    let mut adv = Array1::zeros(n);
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * cont * values[t + 1] - values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        adv[t] = next_adv;
    }
    let returns = Array1::from_iter((0..n).map(|t| adv[t] + values[t]));
    (adv, returns)
}

/// One rollout batch, flattened over workers.
struct Batch {
    obs: Array2<f64>,
    actions: Vec<usize>,
    old_logp: Array1<f64>,
    advantages: Array1<f64>,
    returns: Array1<f64>,
}

pub struct PpoTrainer {
    pub env_spec: EnvSpec,
    pub actor_spec: NetworkSpec,
    pub critic_spec: NetworkSpec,
    pub scheme: InitScheme,
    pub input_rescale: f64,
    pub hp: PpoHp,
}

impl PpoTrainer {
    /// Splits the pruned parameter set into (actor, critic-if-joined).
    fn split(&self, joined: &ParamSet) -> (ParamSet, Option<ParamSet>) {
        if !self.hp.prune_critic {
            return (joined.clone(), None);
        }
        let na = self.actor_spec.layer_sizes.len() - 1;
        let actor = ParamSet { layers: joined.layers[..na].to_vec() };
        let critic = ParamSet { layers: joined.layers[na..].to_vec() };
        (actor, Some(critic))
    }

    fn split_masks(&self, joined: &MaskSet) -> (MaskSet, Option<MaskSet>) {
        if !self.hp.prune_critic {
            return (joined.clone(), None);
        }
        let na = self.actor_spec.layer_sizes.len() - 1;
        let actor = MaskSet { layers: joined.layers[..na].to_vec() };
        let critic = MaskSet { layers: joined.layers[na..].to_vec() };
        (actor, Some(critic))
    }

    fn join(&self, actor: &ParamSet, critic: &ParamSet) -> ParamSet {
        let mut layers = actor.layers.clone();
        layers.extend(critic.layers.iter().cloned());
        ParamSet { layers }
    }

    /// Collects `horizon` steps from each worker and computes GAE per worker.
    #[allow(clippy::too_many_arguments)]
    fn collect(
        &self,
        actor: &ParamSet,
        actor_masks: &MaskSet,
        critic: &ParamSet,
        critic_masks: &MaskSet,
        workers: &mut [Worker],
        st: &TrainSettings,
        rng: &mut impl Rng,
    ) -> Result<Batch> {
        let act_fn = self.actor_spec.activation;
        let h = self.hp.horizon;
        let d = self.actor_spec.input_dim();
        let total = h * workers.len();

        let mut obs = Array2::zeros((total, d));
        let mut actions = vec![0usize; total];
        let mut old_logp = Array1::zeros(total);
        let mut advantages = Array1::zeros(total);
        let mut returns = Array1::zeros(total);

        for (w, worker) in workers.iter_mut().enumerate() {
            let base = w * h;
            let mut rewards = vec![0.0; h];
            let mut dones = vec![false; h];
            let mut values = vec![0.0; h + 1];
            for t in 0..h {
                let row = base + t;
                obs.row_mut(row).assign(&worker.obs);
                let logits =
                    net::forward(actor, actor_masks, act_fn, worker.obs.view())?;
                let a = act_from_values(logits.view(), ActMode::SampleCategorical, rng);
                let logp = log_softmax(logits.insert_axis(ndarray::Axis(0)).view())[[0, a]];
                let v =
                    net::forward(critic, critic_masks, act_fn, worker.obs.view())?[0];
                let r = worker.env.step(a)?;
                actions[row] = a;
                old_logp[row] = logp;
                values[t] = v;
                rewards[t] = r.reward;
                dones[t] = r.done;
                worker.obs = if r.done {
                    worker.episode += 1;
                    worker.env.reset(rng::derive(st.seed, &[tag::ENV, w as u64, worker.episode]))
                } else {
                    r.obs
                };
            }
            values[h] =
                net::forward(critic, critic_masks, act_fn, worker.obs.view())?[0];
            let (adv, ret) = gae(&rewards, &values, &dones, self.hp.gamma, self.hp.lambda);
            advantages.slice_mut(ndarray::s![base..base + h]).assign(&adv);
            returns.slice_mut(ndarray::s![base..base + h]).assign(&ret);
        }

        // Normalize advantages over the whole update batch.
        let mean = advantages.mean().unwrap_or(0.0);
        let var = advantages.mapv(|a| (a - mean).powi(2)).mean().unwrap_or(0.0);
        let std = var.sqrt().max(1e-8);
        advantages.mapv_inplace(|a| (a - mean) / std);

        Ok(Batch { obs, actions, old_logp, advantages, returns })
    }

    /// One epoch of clipped-surrogate actor update plus value regression.
    #[allow(clippy::too_many_arguments)]
    fn update_epoch(
        &self,
        batch: &Batch,
        actor: &mut ParamSet,
        actor_masks: &MaskSet,
        actor_adam: &mut Adam,
        critic: &mut ParamSet,
        critic_masks: &MaskSet,
        critic_adam: &mut Adam,
    ) -> Result<()> {
        let act_fn = self.actor_spec.activation;
        let n = batch.actions.len();
        let eps = self.hp.clip;
        let c_e = self.hp.entropy_coeff;

        let (_, actor_grads) = net::grad_batch(actor, actor_masks, act_fn, batch.obs.view(), |logits| {
            let lsm = log_softmax(logits.view());
            let probs = softmax(logits.view());
            let mut grad = Array2::zeros(logits.raw_dim());
            let mut loss = 0.0;
            for i in 0..n {
                let a = batch.actions[i];
                let adv = batch.advantages[i];
                let ratio = (lsm[[i, a]] - batch.old_logp[i]).exp();
                let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
                let surr = ratio * adv;
                let surr_clip = clipped * adv;
                loss -= surr.min(surr_clip) / n as f64;
                // Gradient flows through the ratio branch only when the min
                // selects it; a saturated clip contributes nothing.
                let coef = if surr <= surr_clip { ratio * adv } else { 0.0 };
                let mut entropy = 0.0;
                for k in 0..probs.ncols() {
                    entropy -= probs[[i, k]] * lsm[[i, k]];
                }
                loss -= c_e * entropy / n as f64;
                for k in 0..probs.ncols() {
                    let p = probs[[i, k]];
                    let indicator = if k == a { 1.0 } else { 0.0 };
                    let g_pol = -coef * (indicator - p);
                    let g_ent = c_e * p * (lsm[[i, k]] + entropy);
                    grad[[i, k]] = (g_pol + g_ent) / n as f64;
                }
            }
            (loss, grad)
        })?;
        actor_adam.step(actor, actor_masks, &actor_grads)?;

        let c_v = self.hp.value_coeff;
        let (_, critic_grads) =
            net::grad_batch(critic, critic_masks, act_fn, batch.obs.view(), |v| {
                let mut grad = Array2::zeros(v.raw_dim());
                let mut loss = 0.0;
                for i in 0..n {
                    let err = v[[i, 0]] - batch.returns[i];
                    loss += c_v * err * err / n as f64;
                    grad[[i, 0]] = 2.0 * c_v * err / n as f64;
                }
                (loss, grad)
            })?;
        critic_adam.step(critic, critic_masks, &critic_grads)?;
        Ok(())
    }
}

struct Worker {
    env: Box<dyn crate::env::Environment>,
    obs: Array1<f64>,
    episode: u64,
}

impl Trainer for PpoTrainer {
    fn init(&self, seed: u64) -> Result<(ParamSet, InitSnapshot)> {
        let (actor, _) = init_network(&self.actor_spec, self.scheme, self.input_rescale, seed)?;
        let params = if self.hp.prune_critic {
            let (critic, _) = init_network(
                &self.critic_spec,
                self.scheme,
                self.input_rescale,
                rng::derive(seed, &[tag::INIT, 1]),
            )?;
            self.join(&actor, &critic)
        } else {
            actor
        };
        let snapshot = InitSnapshot { params: params.clone(), seed };
        Ok((params, snapshot))
    }

    fn activation(&self) -> Activation {
        self.actor_spec.activation
    }

    fn train(&self, start: &ParamSet, masks: &MaskSet, st: &TrainSettings) -> Result<TrainOutcome> {
        let (mut actor, critic_part) = self.split(start);
        let (actor_masks, critic_masks_part) = self.split_masks(masks);
        // Without critic pruning the critic restarts fresh each call.
        let mut critic = match critic_part {
            Some(c) => c,
            None => {
                init_network(
                    &self.critic_spec,
                    self.scheme,
                    self.input_rescale,
                    rng::derive(st.seed, &[tag::INIT, 1]),
                )?
                .0
            }
        };
        let critic_masks =
            critic_masks_part.unwrap_or_else(|| MaskSet::ones_like(&critic));
        actor.apply_mask(&actor_masks);
        critic.apply_mask(&critic_masks);

        let mut actor_adam = Adam::new(&actor, self.hp.lr);
        let mut critic_adam = Adam::new(&critic, self.hp.lr);
        let mut rng = rng::stream(st.seed, &[tag::TRAIN]);

        let mut workers: Vec<Worker> = (0..self.hp.n_workers)
            .map(|w| {
                let mut env = self.env_spec.make();
                let obs = env.reset(rng::derive(st.seed, &[tag::ENV, w as u64, 0]));
                Worker { env, obs, episode: 0 }
            })
            .collect();

        let round_steps = self.hp.horizon * self.hp.n_workers;
        let pack = |actor: &ParamSet, critic: &ParamSet| {
            if self.hp.prune_critic {
                self.join(actor, critic)
            } else {
                actor.clone()
            }
        };

        let mut best_return = f64::NEG_INFINITY;
        let mut best_params = pack(&actor, &critic);
        let mut best_step = 0;
        let mut evals = Vec::new();
        let mut checkpoints = Vec::new();
        let mut steps = 0usize;
        let mut next_eval = st.eval_every;
        let mut pending_ckpt = st.checkpoint_steps.clone();
        pending_ckpt.sort_unstable();

        while steps < st.budget {
            let batch = self.collect(
                &actor,
                &actor_masks,
                &critic,
                &critic_masks,
                &mut workers,
                st,
                &mut rng,
            )?;
            for _ in 0..self.hp.epochs {
                self.update_epoch(
                    &batch,
                    &mut actor,
                    &actor_masks,
                    &mut actor_adam,
                    &mut critic,
                    &critic_masks,
                    &mut critic_adam,
                )?;
            }
            steps += round_steps;

            while let Some(&c) = pending_ckpt.first() {
                if steps < c {
                    break;
                }
                checkpoints.push((c, pack(&actor, &critic)));
                pending_ckpt.remove(0);
            }
            if steps >= next_eval || steps >= st.budget {
                let params = pack(&actor, &critic);
                let (mean, _) = self.evaluate(
                    &params,
                    masks,
                    st.eval_episodes,
                    rng::derive(st.eval_seed, &[steps as u64]),
                )?;
                evals.push(EvalPoint { step: steps, mean_return: mean });
                if mean > best_return {
                    best_return = mean;
                    best_params = params;
                    best_step = steps;
                }
                while next_eval <= steps {
                    next_eval += st.eval_every;
                }
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
        let (actor, _) = self.split(params);
        let (actor_masks, _) = self.split_masks(masks);
        evaluate_policy(
            &self.env_spec,
            &actor,
            &actor_masks,
            self.actor_spec.activation,
            n_episodes,
            seed,
        )
    }
}
