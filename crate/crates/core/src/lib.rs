//! Crop production management as reinforcement learning.
//!
//! The crate bundles a daily-timestep maize simulator with three management
//! tasks (fertilization, irrigation, both), two learning agents built from
//! scratch (a deep Q-network and proximal policy optimization), the Null and
//! Expert comparison policies, and an evaluation harness that aggregates
//! cumulative rewards and application histograms.
//!
//! Module map:
//!
//! - [`mdp`]: environment interface, transitions, trajectories, returns.
//! - [`sim`]: the surrogate crop simulator and its configuration.
//! - [`rewards`]: per-task reward functions.
//! - [`baselines`]: Null and schedule-driven Expert policies.
//! - [`neural`]: fully connected networks, backprop, SGD/Adam, checkpoints.
//! - [`dqn`], [`ppo`]: the learning agents.
//! - [`harness`]: evaluation, comparison tables and heatmap figures.
//! - [`toy`]: small MDPs with known optima used to validate the agents.

pub mod baselines;
pub mod dqn;
pub mod harness;
pub mod mdp;
pub mod neural;
pub mod normalize;
pub mod ppo;
pub mod rewards;
pub mod rng;
pub mod sim;
pub mod toy;

pub use mdp::{
    discounted_return, ActionSpace, EnvError, Environment, Observation, Policy, StepResult,
    Trajectory, Transition,
};
pub use sim::{CropEnv, SimConfig, TaskMode};
