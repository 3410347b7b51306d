//! Cart-Pole balancing with the canonical physics constants, explicit Euler
//! integration at dt = 0.02 and a 200-step cap.
//!
//! Observation: [cart position, cart velocity, pole angle, pole angular
//! velocity]. Reward is +1 per step; the episode ends when |x| > 2.4,
//! |theta| > 12 degrees, or the cap is reached.

use ndarray::{array, Array1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

use super::{Environment, StepResult};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const POLE_HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * POLE_HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const DT: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const MAX_STEPS: usize = 200;

pub struct CartPole {
    // [x, x_dot, theta, theta_dot]
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl CartPole {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        CartPole { state: [0.0; 4], steps: 0, done: true }
    }

    fn observation(&self) -> Array1<f64> {
        array![self.state[0], self.state[1], self.state[2], self.state[3]]
    }
}

impl Environment for CartPole {
    fn obs_dim(&self) -> usize {
        4
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        MAX_STEPS
    }

    fn reset(&mut self, seed: u64) -> Array1<f64> {
        let mut rng = rng::stream(seed, &[tag::ENV]);
        for v in &mut self.state {
            *v = rng.gen_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::IllegalState("step on terminal cart-pole state".into()));
        }
        if action > 1 {
            return Err(Error::invalid(format!("cart-pole action must be 0 or 1, got {action}")));
        }
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let [x, x_dot, theta, theta_dot] = self.state;
        let cos_t = theta.cos();
        let sin_t = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_t) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin_t - cos_t * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS;

        self.state = [
            x + DT * x_dot,
            x_dot + DT * x_acc,
            theta + DT * theta_dot,
            theta_dot + DT * theta_acc,
        ];
        self.steps += 1;

        let fell = self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        self.done = fell || self.steps >= MAX_STEPS;
        Ok(StepResult { obs: self.observation(), reward: 1.0, done: self.done, step: self.steps })
    }
}
