//! Episodic environments with deterministic dynamics: Cart-Pole, Acrobot and
//! the MazeGrid visual navigation task.
//!
//! All three are fully determined by (reset seed, action sequence). Actions
//! are dense indices: Cart-Pole {left, right}, Acrobot {-1, 0, +1 torque},
//! MazeGrid {up, down, left, right}.

pub mod acrobot;
pub mod cartpole;
pub mod maze;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use maze::{Encoding, Layout, MazeGrid};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    CartPole,
    Acrobot,
    MazeGrid,
}

impl std::str::FromStr for EnvId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" | "cart_pole" | "cart-pole" => Ok(EnvId::CartPole),
            "acrobot" => Ok(EnvId::Acrobot),
            "mazegrid" | "maze_grid" | "maze-grid" => Ok(EnvId::MazeGrid),
            other => Err(Error::invalid(format!("unknown env id '{other}'"))),
        }
    }
}

impl EnvId {
    pub fn name(self) -> &'static str {
        match self {
            EnvId::CartPole => "cartpole",
            EnvId::Acrobot => "acrobot",
            EnvId::MazeGrid => "mazegrid",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Array1<f64>,
    pub reward: f64,
    pub done: bool,
    /// Step index after this transition (1-based within the episode).
    pub step: usize,
}

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Step cap per episode.
    fn max_steps(&self) -> usize;
    /// Starts a new episode and returns the first observation.
    fn reset(&mut self, seed: u64) -> Array1<f64>;
    /// Advances one step. Errors on invalid actions or terminal states.
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

/// Instantiates an environment. `encoding` applies only to MazeGrid;
/// `entangle_seed` selects the random projection for the entangled encoding.
pub fn make_env(
    id: EnvId,
    encoding: Encoding,
    layout: &Layout,
    entangle_seed: u64,
) -> Box<dyn Environment> {
    match id {
        EnvId::CartPole => Box::new(CartPole::new()),
        EnvId::Acrobot => Box::new(Acrobot::new()),
        EnvId::MazeGrid => Box::new(MazeGrid::new(layout.clone(), encoding, entangle_seed)),
    }
}
