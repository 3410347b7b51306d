//! Prioritized experience replay: a ring buffer with sampling probability
//! proportional to priority^alpha and importance weights (N*P)^-beta
//! normalized by the maximum weight over the buffer.

use ndarray::Array1;
use rand::Rng;

use crate::error::{Error, Result};

use super::Transition;

pub const PRIORITY_FLOOR: f64 = 1e-6;

pub struct PrioritizedReplay {
    capacity: usize,
    alpha: f64,
    data: Vec<Transition>,
    priorities: Vec<f64>,
    next: usize,
    max_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        PrioritizedReplay {
            capacity,
            alpha,
            data: Vec::with_capacity(capacity.min(1 << 20)),
            priorities: Vec::with_capacity(capacity.min(1 << 20)),
            next: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// New transitions enter at the current maximum priority so they are
    /// sampled at least once.
    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
            self.priorities.push(self.max_priority);
        } else {
            self.data[self.next] = t;
            self.priorities[self.next] = self.max_priority;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// Sampling probabilities proportional to p_i^alpha.
    pub fn probabilities(&self) -> Array1<f64> {
        let mut probs: Array1<f64> =
            self.priorities.iter().map(|p| p.powf(self.alpha)).collect();
        let z = probs.sum();
        probs /= z;
        probs
    }

    /// Draws `n` indices (with replacement) and their normalized importance
    /// weights at inverse-sampling exponent `beta`.
    pub fn sample<R: Rng>(
        &self,
        n: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Array1<f64>)> {
        if self.is_empty() {
            return Err(Error::IllegalState("sampling from empty replay buffer".into()));
        }
        let probs = self.probabilities();
        let mut cdf = probs.to_vec();
        for i in 1..cdf.len() {
            cdf[i] += cdf[i - 1];
        }
        let mut idx = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let i = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            idx.push(i);
        }
        let n_total = self.len() as f64;
        let min_p = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let w_max = (n_total * min_p).powf(-beta);
        let weights: Array1<f64> =
            idx.iter().map(|&i| (n_total * probs[i]).powf(-beta) / w_max).collect();
        Ok((idx, weights))
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Priorities become |TD error| + floor, keeping them strictly positive.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &td) in indices.iter().zip(td_errors) {
            let p = td.abs() + PRIORITY_FLOOR;
            self.priorities[i] = p;
            if p > self.max_priority {
                self.max_priority = p;
            }
        }
    }
}
