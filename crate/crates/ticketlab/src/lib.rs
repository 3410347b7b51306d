//! A small laboratory for studying lottery tickets in reinforcement-learning
//! agents.
//!
//! The crate is organized around five pieces:
//!
//! - [`net`]: dense feed-forward networks with per-weight binary masks,
//!   hand-rolled reverse-mode gradients and an Adam optimizer (f64 throughout).
//! - [`prune`]: global magnitude pruning, weight rewinding and the four
//!   sparsity-generating baseline conditions (`mask/weights`, `mask/permuted`,
//!   `permuted/permuted`, `random/re-init`).
//! - [`env`]: Cart-Pole, Acrobot and the MazeGrid visual navigation task with
//!   three observation encodings.
//! - [`agents`]: double-DQN with prioritized replay, PPO with GAE, and
//!   behavioral cloning from a frozen expert.
//! - [`imp`]: the iterative-magnitude-pruning harness tying it all together,
//!   plus [`analysis`] for interpreting the resulting masks.
//!
//! Everything is seeded and deterministic: the same config produces
//! bit-identical runs.

pub mod agents;
pub mod analysis;
pub mod config;
pub mod env;
pub mod error;
pub mod imp;
pub mod net;
pub mod plot;
pub mod prune;
pub mod rng;

pub use error::{Error, Result};
