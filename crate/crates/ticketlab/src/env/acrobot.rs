//! Acrobot swing-up: two-link pendulum with the canonical parameters,
//! 4th-order Runge-Kutta at dt = 0.2 and a 500-step cap.
//!
//! Observation: [cos t1, sin t1, cos t2, sin t2, w1, w2]. Reward is -1 per
//! step until the tip crosses the target line `-cos t1 - cos(t1 + t2) > 1`,
//! which ends the episode with reward 0 on the final transition.

use ndarray::{array, Array1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

use super::{Environment, StepResult};

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * std::f64::consts::PI;
const MAX_VEL_2: f64 = 9.0 * std::f64::consts::PI;
const MAX_STEPS: usize = 500;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

pub struct Acrobot {
    // [theta1, theta2, dtheta1, dtheta2]
    state: [f64; 4],
    steps: usize,
    done: bool,
}

fn wrap_pi(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut v = (x + PI) % (2.0 * PI);
    if v < 0.0 {
        v += 2.0 * PI;
    }
    v - PI
}

/// Equations of motion (the "book" variant), torque applied to joint 2.
fn dynamics(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let l1 = LINK_LENGTH_1;
    let (lc1, lc2) = (LINK_COM_1, LINK_COM_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let g = GRAVITY;
    let [t1, t2, dt1, dt2] = s;

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (t1 + t2 - std::f64::consts::FRAC_PI_2).cos();
    let phi1 = -m2 * l1 * lc2 * dt2 * dt2 * t2.sin()
        - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
        + (m1 * lc1 + m2 * l1) * g * (t1 - std::f64::consts::FRAC_PI_2).cos()
        + phi2;
    let ddt2 = (torque + (d2 / d1) * phi1 - m2 * l1 * lc2 * dt1 * dt1 * t2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddt1 = -(d2 * ddt2 + phi1) / d1;
    [dt1, dt2, ddt1, ddt2]
}

fn rk4(s: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], h: f64| {
        [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]]
    };
    let k1 = dynamics(s, torque);
    let k2 = dynamics(add(s, k1, dt / 2.0), torque);
    let k3 = dynamics(add(s, k2, dt / 2.0), torque);
    let k4 = dynamics(add(s, k3, dt), torque);
    let mut out = s;
    for i in 0..4 {
        out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

impl Acrobot {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        Acrobot { state: [0.0; 4], steps: 0, done: true }
    }

    fn observation(&self) -> Array1<f64> {
        let [t1, t2, dt1, dt2] = self.state;
        array![t1.cos(), t1.sin(), t2.cos(), t2.sin(), dt1, dt2]
    }

    fn tip_above_line(&self) -> bool {
        let [t1, t2, ..] = self.state;
        -t1.cos() - (t1 + t2).cos() > 1.0
    }

    /// Total mechanical energy of the unactuated system; used in tests.
    pub fn energy(state: [f64; 4]) -> f64 {
        let [t1, t2, dt1, dt2] = state;
        let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
        let l1 = LINK_LENGTH_1;
        let (lc1, lc2) = (LINK_COM_1, LINK_COM_2);
        let (i1, i2) = (LINK_MOI, LINK_MOI);
        let g = GRAVITY;
        // heights measured downward from the pivot (theta = 0 hangs down)
        let h1 = -lc1 * t1.cos();
        let h2 = -l1 * t1.cos() - lc2 * (t1 + t2).cos();
        let potential = m1 * g * h1 + m2 * g * h2;
        // velocity of link-2 center of mass
        let v1sq = (lc1 * dt1).powi(2);
        let vx = l1 * dt1 * t1.cos() + lc2 * (dt1 + dt2) * (t1 + t2).cos();
        let vy = l1 * dt1 * t1.sin() + lc2 * (dt1 + dt2) * (t1 + t2).sin();
        let kinetic = 0.5 * m1 * v1sq
            + 0.5 * m2 * (vx * vx + vy * vy)
            + 0.5 * i1 * dt1 * dt1
            + 0.5 * i2 * (dt1 + dt2).powi(2);
        potential + kinetic
    }

    #[cfg(test)]
    pub(crate) fn raw_state(&self) -> [f64; 4] {
        self.state
    }

    #[cfg(test)]
    pub(crate) fn set_raw_state(&mut self, s: [f64; 4]) {
        self.state = s;
        self.done = false;
        self.steps = 0;
    }
}

impl Environment for Acrobot {
    fn obs_dim(&self) -> usize {
        6
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn max_steps(&self) -> usize {
        MAX_STEPS
    }

    fn reset(&mut self, seed: u64) -> Array1<f64> {
        let mut rng = rng::stream(seed, &[tag::ENV]);
        for v in &mut self.state {
            *v = rng.gen_range(-0.1..0.1);
        }
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::IllegalState("step on terminal acrobot state".into()));
        }
        let torque = *TORQUES
            .get(action)
            .ok_or_else(|| Error::invalid(format!("acrobot action must be 0..3, got {action}")))?;
        let mut s = rk4(self.state, torque, DT);
        s[0] = wrap_pi(s[0]);
        s[1] = wrap_pi(s[1]);
        s[2] = s[2].clamp(-MAX_VEL_1, MAX_VEL_1);
        s[3] = s[3].clamp(-MAX_VEL_2, MAX_VEL_2);
        self.state = s;
        self.steps += 1;

        let reached = self.tip_above_line();
        self.done = reached || self.steps >= MAX_STEPS;
        let reward = if reached { 0.0 } else { -1.0 };
        Ok(StepResult { obs: self.observation(), reward, done: self.done, step: self.steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_near_equilibrium() {
        let mut env = Acrobot::new();
        let obs = env.reset(5);
        // hanging down: cos ~ 1, sin ~ 0, small velocities
        assert!(obs[0] > 0.99);
        assert!(obs[2] > 0.99);
        assert!(obs[4].abs() < 0.1 && obs[5].abs() < 0.1);
    }

    #[test]
    fn zero_torque_energy_drift_is_small() {
        // Regression pin on the integrator: with no torque the mechanical
        // energy drift per step stays below a fixed tolerance.
        let mut env = Acrobot::new();
        env.set_raw_state([0.3, -0.2, 0.5, 0.1]);
        let mut prev = Acrobot::energy(env.raw_state());
        for _ in 0..100 {
            env.step(1).unwrap();
            let e = Acrobot::energy(env.raw_state());
            assert!((e - prev).abs() < 5e-3, "energy drift {}", (e - prev).abs());
            prev = e;
        }
    }

    #[test]
    fn random_policy_rarely_reaches_goal_quickly() {
        let mut env = Acrobot::new();
        env.reset(1);
        let mut total = 0.0;
        loop {
            let r = env.step(1).unwrap();
            total += r.reward;
            if r.done {
                break;
            }
        }
        // passive dynamics cannot swing up
        assert_eq!(total, -(MAX_STEPS as f64));
    }

    #[test]
    fn deterministic_replay() {
        let mut a = Acrobot::new();
        let mut b = Acrobot::new();
        assert_eq!(a.reset(9), b.reset(9));
        for i in 0..200 {
            let ra = a.step(i % 3).unwrap();
            let rb = b.step(i % 3).unwrap();
            assert_eq!(ra.obs, rb.obs);
            if ra.done {
                break;
            }
        }
    }

    #[test]
    fn velocities_stay_clamped() {
        let mut env = Acrobot::new();
        env.reset(0);
        for i in 0..MAX_STEPS {
            let r = env.step(if i % 7 < 4 { 2 } else { 0 }).unwrap();
            assert!(r.obs[4].abs() <= MAX_VEL_1);
            assert!(r.obs[5].abs() <= MAX_VEL_2);
            if r.done {
                break;
            }
        }
    }
}
