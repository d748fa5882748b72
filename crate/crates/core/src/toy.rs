//! Small MDPs with known optima, used to check the learning agents.
//!
//! All three speak the same [`Environment`] interface as the crop simulator.
//! Discrete environments take a one-component action holding the action
//! index as a real number.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mdp::{ActionSpace, EnvError, Environment, Observation, StepResult};
use crate::rng::pair_seed;

/// Info key set on the final step of an episode cut by a time limit rather
/// than by reaching a terminal state.
pub const TRUNCATED: &str = "truncated";

pub fn is_truncated(info: &BTreeMap<String, f64>) -> bool {
    info.get(TRUNCATED).is_some_and(|&v| v != 0.0)
}

fn discrete_index(action: &[f64], n: usize) -> Result<usize, EnvError> {
    if action.len() != 1 {
        return Err(EnvError::ActionDimension { expected: 1, got: action.len() });
    }
    let a = action[0];
    let idx = if a.is_finite() { a.round().clamp(0.0, (n - 1) as f64) as usize } else { 0 };
    Ok(idx)
}

fn one_hot(i: usize, n: usize) -> Observation {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Deterministic four-state chain. Action 1 advances, action 0 steps back
/// (reflecting at state 0). Reaching state 3 pays 1 and ends the episode;
/// every other transition pays 0.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    state: usize,
    steps: usize,
    done: bool,
    episodes: u64,
    pub max_steps: usize,
}

impl ChainMdp {
    pub const N_STATES: usize = 4;
    pub const N_ACTIONS: usize = 2;
    pub const TERMINAL: usize = 3;

    pub fn new() -> Self {
        Self { state: 0, steps: 0, done: true, episodes: 0, max_steps: 50 }
    }

    /// The model: `(next_state, reward, terminal)`.
    pub fn model(state: usize, action: usize) -> (usize, f64, bool) {
        let next = if action == 1 { state + 1 } else { state.saturating_sub(1) };
        if next == Self::TERMINAL {
            (next, 1.0, true)
        } else {
            (next, 0.0, false)
        }
    }

    pub fn encode(state: usize) -> Observation {
        one_hot(state, Self::N_STATES)
    }
}

impl Default for ChainMdp {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for ChainMdp {
    fn reset(&mut self, _seed: u64) -> Observation {
        self.state = 0;
        self.steps = 0;
        self.done = false;
        self.episodes += 1;
        Self::encode(0)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = discrete_index(action, Self::N_ACTIONS)?;
        let (next, reward, terminal) = Self::model(self.state, a);
        self.state = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.max_steps;
        self.done = terminal || truncated;
        let mut info = BTreeMap::new();
        info.insert("state".into(), next as f64);
        if truncated {
            info.insert(TRUNCATED.into(), 1.0);
        }
        Ok(StepResult { observation: Self::encode(next), reward, done: self.done, info })
    }

    fn observation_dim(&self) -> usize {
        Self::N_STATES
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { actions: (0..Self::N_ACTIONS).map(|a| vec![a as f64]).collect() }
    }

    fn episode_count(&self) -> u64 {
        self.episodes
    }
}

/// 3x3 deterministic gridworld. Start in the top-left corner, goal in the
/// bottom-right. Moves into walls leave the agent in place. Each move costs
/// 0.01; entering the goal pays 1 and ends the episode.
#[derive(Debug, Clone)]
pub struct GridWorld {
    cell: usize,
    steps: usize,
    done: bool,
    episodes: u64,
    pub max_steps: usize,
}

impl GridWorld {
    pub const SIDE: usize = 3;
    pub const N_STATES: usize = 9;
    pub const N_ACTIONS: usize = 4;
    pub const GOAL: usize = 8;
    pub const STEP_COST: f64 = 0.01;

    pub fn new() -> Self {
        Self { cell: 0, steps: 0, done: true, episodes: 0, max_steps: 30 }
    }

    /// Actions: 0 up, 1 down, 2 left, 3 right.
    pub fn model(cell: usize, action: usize) -> (usize, f64, bool) {
        let (r, c) = (cell / Self::SIDE, cell % Self::SIDE);
        let (r, c) = match action {
            0 => (r.saturating_sub(1), c),
            1 => ((r + 1).min(Self::SIDE - 1), c),
            2 => (r, c.saturating_sub(1)),
            _ => (r, (c + 1).min(Self::SIDE - 1)),
        };
        let next = r * Self::SIDE + c;
        if next == Self::GOAL {
            (next, 1.0, true)
        } else {
            (next, -Self::STEP_COST, false)
        }
    }
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for GridWorld {
    fn reset(&mut self, _seed: u64) -> Observation {
        self.cell = 0;
        self.steps = 0;
        self.done = false;
        self.episodes += 1;
        one_hot(0, Self::N_STATES)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = discrete_index(action, Self::N_ACTIONS)?;
        let (next, reward, terminal) = Self::model(self.cell, a);
        self.cell = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.max_steps;
        self.done = terminal || truncated;
        let mut info = BTreeMap::new();
        if truncated {
            info.insert(TRUNCATED.into(), 1.0);
        }
        Ok(StepResult {
            observation: one_hot(next, Self::N_STATES),
            reward,
            done: self.done,
            info,
        })
    }

    fn observation_dim(&self) -> usize {
        Self::N_STATES
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { actions: (0..Self::N_ACTIONS).map(|a| vec![a as f64]).collect() }
    }

    fn episode_count(&self) -> u64 {
        self.episodes
    }
}

/// Single-step bandit driven by a continuous action: a positive action pulls
/// the good arm (mean payoff 1), anything else pulls the bad arm (mean 0).
/// Payoffs carry Gaussian noise.
#[derive(Debug, Clone)]
pub struct TwoArmedBandit {
    rng: ChaCha8Rng,
    done: bool,
    episodes: u64,
    pub good_payoff: f64,
    pub bad_payoff: f64,
    pub noise_std: f64,
}

impl TwoArmedBandit {
    pub fn new() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
            done: true,
            episodes: 0,
            good_payoff: 1.0,
            bad_payoff: 0.0,
            noise_std: 0.5,
        }
    }
}

impl Default for TwoArmedBandit {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for TwoArmedBandit {
    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, 0xBA5D17));
        self.done = false;
        self.episodes += 1;
        vec![1.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action.len() != 1 {
            return Err(EnvError::ActionDimension { expected: 1, got: action.len() });
        }
        let good = action[0] > 0.0;
        let mean = if good { self.good_payoff } else { self.bad_payoff };
        let noise: f64 = self.rng.sample(StandardNormal);
        self.done = true;
        let mut info = BTreeMap::new();
        info.insert("good_arm".into(), f64::from(u8::from(good)));
        Ok(StepResult {
            observation: vec![1.0],
            reward: mean + self.noise_std * noise,
            done: true,
            info,
        })
    }

    fn observation_dim(&self) -> usize {
        1
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Box { low: vec![f64::NEG_INFINITY], high: vec![f64::INFINITY] }
    }

    fn episode_count(&self) -> u64 {
        self.episodes
    }
}
