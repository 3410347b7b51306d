//! Double-DQN with prioritized experience replay.
//!
//! Targets use double Q-learning: the online network picks the argmax action
//! at s', the target network scores it. Updates minimize an importance-
//! weighted Huber loss, gradients are global-norm clipped, priorities become
//! |TD error| + floor, and the target network hard-syncs on a step schedule.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::Result;
use crate::net::init::InitScheme;
use crate::net::loss::huber_q;
use crate::net::{self, Activation, Adam, InitSnapshot, MaskSet, NetworkSpec, ParamSet};
use crate::rng::{self, tag};

use super::replay::PrioritizedReplay;
use super::{
    act_from_values, evaluate_policy, ActMode, EnvSpec, EvalPoint, TrainOutcome, TrainSettings,
    Trainer, Transition,
};

#[derive(Debug, Clone)]
pub struct DqnHp {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub alpha: f64,
    pub beta_init: f64,
    pub beta_final: f64,
    pub huber_delta: f64,
    pub grad_clip: f64,
    /// Data replay ratio: batch_size * updates / environment steps.
    pub replay_ratio: f64,
    /// Environment steps between hard target-network syncs.
    pub target_sync: usize,
    /// Epsilon-greedy schedule: linear eps_start -> eps_final over the first
    /// `eps_anneal_frac` of the budget.
    pub eps_start: f64,
    pub eps_final: f64,
    pub eps_anneal_frac: f64,
    /// No updates before this many transitions are buffered.
    pub learning_starts: usize,
}

impl Default for DqnHp {
    fn default() -> Self {
        DqnHp {
            lr: 5e-4,
            gamma: 0.99,
            batch_size: 256,
            buffer_capacity: 100_000,
            alpha: 0.6,
            beta_init: 0.4,
            beta_final: 1.0,
            huber_delta: 1.0,
            grad_clip: 10.0,
            replay_ratio: 4.0,
            target_sync: 1_000,
            eps_start: 1.0,
            eps_final: 0.05,
            eps_anneal_frac: 0.1,
            learning_starts: 1_000,
        }
    }
}

/// Double-Q targets: `y = r + gamma * (1 - done) * Q_target(s', argmax_a
/// Q_online(s', a))`.
pub fn double_q_target(
    rewards: ArrayView1<f64>,
    dones: &[bool],
    q_online_next: &Array2<f64>,
    q_target_next: &Array2<f64>,
    gamma: f64,
) -> Array1<f64> {
    let n = rewards.len();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let row = q_online_next.row(i);
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        let bootstrap = if dones[i] { 0.0 } else { gamma * q_target_next[[i, best]] };
        y[i] = rewards[i] + bootstrap;
    }
    y
}

pub struct DqnTrainer {
    pub env_spec: EnvSpec,
    pub net_spec: NetworkSpec,
    pub scheme: InitScheme,
    pub input_rescale: f64,
    pub hp: DqnHp,
}

impl DqnTrainer {
    fn epsilon(&self, step: usize, budget: usize) -> f64 {
        let anneal = (budget as f64 * self.hp.eps_anneal_frac).max(1.0);
        let t = (step as f64 / anneal).min(1.0);
        self.hp.eps_start + t * (self.hp.eps_final - self.hp.eps_start)
    }

    fn beta(&self, step: usize, budget: usize) -> f64 {
        let t = step as f64 / budget as f64;
        self.hp.beta_init + t * (self.hp.beta_final - self.hp.beta_init)
    }

    /// One prioritized double-Q update. Returns the loss.
    #[allow(clippy::too_many_arguments)]
    fn update(
        &self,
        buffer: &mut PrioritizedReplay,
        online: &mut ParamSet,
        target: &ParamSet,
        masks: &MaskSet,
        adam: &mut Adam,
        beta: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<f64> {
        let act = self.net_spec.activation;
        let n = self.hp.batch_size;
        let (idx, is_weights) = buffer.sample(n, beta, rng)?;

        let obs_dim = self.net_spec.input_dim();
        let mut s = Array2::zeros((n, obs_dim));
        let mut s_next = Array2::zeros((n, obs_dim));
        let mut rewards = Array1::zeros(n);
        let mut dones = vec![false; n];
        let mut actions = vec![0usize; n];
        for (row, &i) in idx.iter().enumerate() {
            let t = buffer.get(i);
            s.row_mut(row).assign(&t.s);
            s_next.row_mut(row).assign(&t.s_next);
            rewards[row] = t.r;
            dones[row] = t.done;
            actions[row] = t.a;
        }

        let q_online_next = net::forward_batch(online, masks, act, s_next.view())?;
        let q_target_next = net::forward_batch(target, masks, act, s_next.view())?;
        let y = double_q_target(rewards.view(), &dones, &q_online_next, &q_target_next, self.hp.gamma);

        let (out, cache) = net::forward_cached(online, masks, act, s.view())?;
        let (loss, dl_dq, td) =
            huber_q(&out, &actions, y.view(), is_weights.view(), self.hp.huber_delta);
        let mut grads = net::backward(online, masks, &cache, dl_dq.view())?;
        net::clip_global_norm(&mut grads, self.hp.grad_clip);
        adam.step(online, masks, &grads)?;
        buffer.update_priorities(&idx, td.as_slice().unwrap());
        Ok(loss)
    }
}

impl Trainer for DqnTrainer {
    fn init(&self, seed: u64) -> Result<(ParamSet, InitSnapshot)> {
        super::init_with(&self.net_spec, self.scheme, self.input_rescale, seed)
    }

    fn activation(&self) -> Activation {
        self.net_spec.activation
    }

    fn train(&self, start: &ParamSet, masks: &MaskSet, st: &TrainSettings) -> Result<TrainOutcome> {
        let act_fn = self.net_spec.activation;
        let mut online = start.clone();
        online.apply_mask(masks);
        let mut target = online.clone();
        let mut adam = Adam::new(&online, self.hp.lr);
        let mut buffer = PrioritizedReplay::new(self.hp.buffer_capacity, self.hp.alpha);
        let mut rng = rng::stream(st.seed, &[tag::EXPLORE]);

        let mut env = self.env_spec.make();
        let mut episode = 0u64;
        let mut obs = env.reset(rng::derive(st.seed, &[tag::ENV, episode]));

        let update_every =
            ((self.hp.batch_size as f64 / self.hp.replay_ratio).round() as usize).max(1);

        let mut best_return = f64::NEG_INFINITY;
        let mut best_params = online.clone();
        let mut best_step = 0;
        let mut evals = Vec::new();
        let mut checkpoints = Vec::new();

        for step in 1..=st.budget {
            let eps = self.epsilon(step, st.budget);
            let q = net::forward(&online, masks, act_fn, obs.view())?;
            let a = act_from_values(q.view(), ActMode::EpsilonGreedy(eps), &mut rng);
            let r = env.step(a)?;
            buffer.push(Transition {
                s: obs,
                a,
                r: r.reward,
                s_next: r.obs.clone(),
                done: r.done,
            });
            obs = if r.done {
                episode += 1;
                env.reset(rng::derive(st.seed, &[tag::ENV, episode]))
            } else {
                r.obs
            };

            if step % update_every == 0
                && buffer.len() >= self.hp.learning_starts.max(self.hp.batch_size)
            {
                let beta = self.beta(step, st.budget);
                self.update(&mut buffer, &mut online, &target, masks, &mut adam, beta, &mut rng)?;
            }
            if step % self.hp.target_sync == 0 {
                target = online.clone();
            }
            if st.checkpoint_steps.contains(&step) {
                checkpoints.push((step, online.clone()));
            }
            if step % st.eval_every == 0 || step == st.budget {
                let (mean, _) = self.evaluate(
                    &online,
                    masks,
                    st.eval_episodes,
                    rng::derive(st.eval_seed, &[step as u64]),
                )?;
                evals.push(EvalPoint { step, mean_return: mean });
                if mean > best_return {
                    best_return = mean;
                    best_params = online.clone();
                    best_step = step;
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
        evaluate_policy(&self.env_spec, params, masks, self.net_spec.activation, n_episodes, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn terminal_target_ignores_q_values() {
        let r = array![1.0];
        let q_on = array![[5.0, -3.0]];
        let q_tg = array![[100.0, 200.0]];
        let y = double_q_target(r.view(), &[true], &q_on, &q_tg, 0.99);
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn double_q_hand_value() {
        // r=0, gamma=0.99, Q_online(s')=[0.2,0.5], Q_target(s')=[1.0,-0.5]
        // -> argmax online = 1, y = 0.99 * (-0.5) = -0.495
        let r = array![0.0];
        let q_on = array![[0.2, 0.5]];
        let q_tg = array![[1.0, -0.5]];
        let y = double_q_target(r.view(), &[false], &q_on, &q_tg, 0.99);
        assert_abs_diff_eq!(y[0], -0.495, epsilon = 1e-12);
    }

    #[test]
    fn coincident_networks_reduce_to_q_learning() {
        let r = array![0.5];
        let q = array![[0.1, 0.9, 0.3]];
        let y = double_q_target(r.view(), &[false], &q, &q, 0.9);
        assert_abs_diff_eq!(y[0], 0.5 + 0.9 * 0.9, epsilon = 1e-12);
    }
}
