//! Deep Q-learning with experience replay, a periodically synced target
//! network and ε-greedy exploration over a discretized action set.

mod replay;

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{EnvError, Environment, Policy};
use crate::neural::{read_network, write_network, Activation, MlpNetwork, NeuralError, Optimizer};
use crate::normalize::RunningNorm;
use crate::rng::{stream_rng, stream_seed, streams, training_env_seed};
use crate::sim::TaskMode;
use crate::toy::is_truncated;

pub use replay::{ReplayBuffer, ReplayItem};

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("replay buffer holds {size} transitions, batch needs {batch}")]
    BufferUnderfull { size: usize, batch: usize },
    #[error("invalid DQN config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub gamma: f64,
    pub episodes: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Target network sync period, in gradient steps.
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episode budget over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Environment steps between gradient steps.
    pub train_every: usize,
    /// Transitions collected before the first gradient step (at least one batch).
    pub learning_starts: usize,
    /// Multiplier on rewards inside the learner; reported returns stay raw.
    pub reward_scale: f64,
    pub normalize_obs: bool,
    pub max_grad_norm: Option<f64>,
    /// Safety cap on steps per episode.
    pub max_episode_steps: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            episodes: 4000,
            learning_rate: 1e-5,
            batch_size: 1024,
            target_sync: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            buffer_capacity: 100_000,
            hidden: vec![256, 256, 256],
            activation: Activation::Relu,
            train_every: 1,
            learning_starts: 0,
            reward_scale: 1.0,
            normalize_obs: true,
            max_grad_norm: None,
            max_episode_steps: 10_000,
        }
    }
}

impl DqnConfig {
    /// Smaller network, batch and budget sized for a few minutes of CPU time
    /// on the crop tasks. Rewards are rescaled so Q-values stay near unit
    /// magnitude.
    pub fn desk(mode: TaskMode) -> Self {
        Self {
            episodes: 400,
            learning_rate: 5e-4,
            batch_size: 64,
            target_sync: match mode {
                TaskMode::Mixed => 200,
                _ => 1000,
            },
            buffer_capacity: 50_000,
            hidden: vec![64, 64],
            train_every: 2,
            learning_starts: 1000,
            reward_scale: match mode {
                TaskMode::Fertilization => 0.05,
                TaskMode::Irrigation => 0.002,
                TaskMode::Mixed => 0.01,
            },
            max_grad_norm: Some(10.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m: &str| Err(DqnError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be at least 1");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if self.learning_rate <= 0.0 || self.train_every == 0 || self.reward_scale <= 0.0 {
            return bad("learning_rate, train_every and reward_scale must be positive");
        }
        Ok(())
    }

    /// Exploration rate for episode `episode` (0-based).
    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = self.epsilon_decay_fraction * self.episodes as f64;
        let frac = if span > 0.0 { (episode as f64 / span).min(1.0) } else { 1.0 };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Ordered list of concrete action vectors indexed by the Q-network outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteActionTable {
    actions: Vec<Vec<f64>>,
}

impl DiscreteActionTable {
    pub const NITROGEN_STEP: f64 = 40.0;
    pub const WATER_STEP: f64 = 6.0;
    pub const LEVELS: usize = 5;

    /// `{40i kg/ha}` × `{6j L/m²}` for `i, j` in `0..5`, restricted to the axes
    /// the task controls. Mixed ordering is nitrogen-major.
    pub fn for_task(mode: TaskMode) -> Self {
        let levels = 0..Self::LEVELS;
        let actions = match mode {
            TaskMode::Fertilization => levels.map(|i| vec![Self::NITROGEN_STEP * i as f64]).collect(),
            TaskMode::Irrigation => levels.map(|j| vec![Self::WATER_STEP * j as f64]).collect(),
            TaskMode::Mixed => levels
                .flat_map(|i| {
                    (0..Self::LEVELS).map(move |j| vec![Self::NITROGEN_STEP * i as f64, Self::WATER_STEP * j as f64])
                })
                .collect(),
        };
        Self { actions }
    }

    /// `[0], [1], …, [n-1]`: the index encoding used by discrete toy MDPs.
    pub fn indices(n: usize) -> Self {
        Self { actions: (0..n).map(|i| vec![i as f64]).collect() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.actions[i]
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice over precomputed Q-values.
pub fn epsilon_greedy<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Learner state: online and target networks, optimizer and input statistics.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub q_net: MlpNetwork,
    pub target_net: MlpNetwork,
    pub optimizer: Optimizer,
    pub norm: RunningNorm,
    pub table: DiscreteActionTable,
    grad_steps: u64,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, table: DiscreteActionTable, config: DqnConfig, seed: u64) -> Result<Self, DqnError> {
        config.validate()?;
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden);
        sizes.push(table.len());
        let mut rng = stream_rng(seed, streams::INIT);
        let q_net = MlpNetwork::new(&sizes, config.activation, &mut rng)?;
        let optimizer = Optimizer::adam(config.learning_rate).with_max_grad_norm(config.max_grad_norm);
        Ok(Self {
            target_net: q_net.clone(),
            q_net,
            optimizer,
            norm: RunningNorm::new(obs_dim),
            table,
            config,
            grad_steps: 0,
        })
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    fn input(&self, obs: &[f64]) -> Vec<f64> {
        if self.config.normalize_obs {
            self.norm.normalize(obs)
        } else {
            obs.to_vec()
        }
    }

    pub fn q_values(&self, obs: &[f64]) -> Vec<f64> {
        self.q_net.forward(&self.input(obs)).expect("observation dimension checked at construction")
    }

    pub fn select_action<R: Rng + ?Sized>(&self, obs: &[f64], epsilon: f64, rng: &mut R) -> usize {
        epsilon_greedy(&self.q_values(obs), epsilon, rng)
    }

    /// Bellman targets from the frozen target network, in learner reward units.
    pub fn compute_targets(&self, batch: &[&ReplayItem]) -> Vec<f64> {
        batch
            .iter()
            .map(|t| {
                let r = t.reward * self.config.reward_scale;
                if t.done {
                    r
                } else {
                    let next = self.target_net.forward(&self.input(&t.next_obs)).expect("dimension");
                    r + self.config.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect()
    }

    /// Mean squared TD error over `batch` and its parameter gradient. Only
    /// the taken action's output receives gradient.
    pub fn loss_and_gradient(&self, batch: &[&ReplayItem], targets: &[f64]) -> (f64, Vec<f64>) {
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.q_net.n_params()];
        let mut loss = 0.0;
        let mut out_grad = vec![0.0; self.table.len()];
        for (t, &y) in batch.iter().zip(targets) {
            let cache = self.q_net.forward_cached(&self.input(&t.obs)).expect("dimension");
            let err = cache.output()[t.action] - y;
            loss += err * err / n;
            out_grad.iter_mut().for_each(|g| *g = 0.0);
            out_grad[t.action] = 2.0 * err / n;
            self.q_net.backward_cached(&cache, &out_grad, &mut grads).expect("dimension");
        }
        (loss, grads)
    }

    /// One gradient step on a fixed batch; syncs the target network every
    /// `target_sync` gradient steps. Returns the pre-update loss.
    pub fn update_on_batch(&mut self, batch: &[&ReplayItem]) -> f64 {
        let targets = self.compute_targets(batch);
        let (loss, grads) = self.loss_and_gradient(batch, &targets);
        self.optimizer.step(self.q_net.params_mut(), &grads);
        self.grad_steps += 1;
        if self.grad_steps.is_multiple_of(self.config.target_sync) {
            self.sync_target();
        }
        loss
    }

    /// Samples a minibatch and performs [`DqnAgent::update_on_batch`].
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<f64, DqnError> {
        if buffer.len() < self.config.batch_size {
            return Err(DqnError::BufferUnderfull { size: buffer.len(), batch: self.config.batch_size });
        }
        let batch = buffer.sample(self.config.batch_size, rng);
        Ok(self.update_on_batch(&batch))
    }

    pub fn sync_target(&mut self) {
        self.target_net.copy_params_from(&self.q_net);
    }

    /// Greedy read-only policy over the current online network.
    pub fn policy(&self, name: &str) -> DqnPolicy {
        DqnPolicy {
            name: name.to_string(),
            net: self.q_net.clone(),
            norm: self.config.normalize_obs.then(|| self.norm.clone()),
            table: self.table.clone(),
        }
    }

    /// Writes `q.bin` (+ sidecar) and `agent.json` into `dir`.
    pub fn save(&self, dir: &Path, task: Option<TaskMode>) -> Result<(), DqnError> {
        std::fs::create_dir_all(dir)?;
        write_network(&dir.join(Q_FILE), &self.q_net, Some(&self.optimizer))?;
        let meta = DqnCheckpoint {
            algo: "dqn".into(),
            task,
            config: self.config.clone(),
            norm: self.config.normalize_obs.then(|| self.norm.clone()),
            table: self.table.clone(),
        };
        std::fs::write(dir.join(AGENT_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}

pub const AGENT_FILE: &str = "agent.json";
const Q_FILE: &str = "q.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnCheckpoint {
    pub algo: String,
    pub task: Option<TaskMode>,
    pub config: DqnConfig,
    pub norm: Option<RunningNorm>,
    pub table: DiscreteActionTable,
}

/// Greedy Q-network policy used for evaluation.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    name: String,
    net: MlpNetwork,
    norm: Option<RunningNorm>,
    table: DiscreteActionTable,
}

impl DqnPolicy {
    pub fn load(dir: &Path) -> Result<(Self, DqnCheckpoint), DqnError> {
        let meta: DqnCheckpoint = serde_json::from_str(&std::fs::read_to_string(dir.join(AGENT_FILE))?)?;
        let net = read_network(&dir.join(Q_FILE))?;
        if net.output_dim() != meta.table.len() {
            return Err(DqnError::InvalidConfig(format!(
                "network has {} outputs but the action table has {} entries",
                net.output_dim(),
                meta.table.len()
            )));
        }
        let policy = Self { name: "DQN".into(), net, norm: meta.norm.clone(), table: meta.table.clone() };
        Ok((policy, meta))
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.table.get(0).len()
    }

    pub fn q_values(&self, obs: &[f64]) -> Vec<f64> {
        let x = match &self.norm {
            Some(n) => n.normalize(obs),
            None => obs.to_vec(),
        };
        self.net.forward(&x).expect("observation dimension")
    }
}

impl Policy for DqnPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&self, obs: &[f64], _rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.table.get(argmax(&self.q_values(obs))).to_vec()
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnCurveRow {
    pub episode: usize,
    pub cumulative_reward: f64,
    pub epsilon: f64,
    /// Mean loss over the episode's gradient steps; empty before learning starts.
    pub loss_mean: Option<f64>,
}

pub struct DqnRun {
    pub agent: DqnAgent,
    pub curve: Vec<DqnCurveRow>,
}

pub fn write_curve_csv<W: std::io::Write>(out: W, rows: &[DqnCurveRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `config.episodes` episodes of ε-greedy interaction and replay
/// updates. Environment episode `k` is reset with a training seed derived
/// from `seed`, so runs are reproducible and disjoint from evaluation seeds.
pub fn train_dqn<E: Environment + ?Sized>(
    env: &mut E,
    table: DiscreteActionTable,
    config: DqnConfig,
    seed: u64,
) -> Result<DqnRun, DqnError> {
    let mut agent = DqnAgent::new(env.observation_dim(), table, config.clone(), seed)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut explore = stream_rng(seed, streams::EXPLORATION);
    let mut sampler = ChaCha8Rng::seed_from_u64(stream_seed(seed, streams::MINIBATCH));
    let learning_starts = config.learning_starts.max(config.batch_size);
    let mut env_steps = 0usize;
    let mut curve = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let epsilon = config.epsilon(episode);
        let mut obs = env.reset(training_env_seed(seed, streams::WEATHER, episode as u64));
        if config.normalize_obs {
            agent.norm.update(&obs);
        }
        let (mut total, mut loss_sum, mut n_updates) = (0.0, 0.0, 0usize);
        for _ in 0..config.max_episode_steps {
            let a = agent.select_action(&obs, epsilon, &mut explore);
            let step = env.step(agent.table.get(a))?;
            total += step.reward;
            let terminal = step.done && !is_truncated(&step.info);
            if config.normalize_obs {
                agent.norm.update(&step.observation);
            }
            buffer.push(ReplayItem {
                obs: std::mem::take(&mut obs),
                action: a,
                reward: step.reward,
                next_obs: step.observation.clone(),
                done: terminal,
            });
            env_steps += 1;
            if buffer.len() >= learning_starts && env_steps.is_multiple_of(config.train_every) {
                loss_sum += agent.update(&buffer, &mut sampler)?;
                n_updates += 1;
            }
            obs = step.observation;
            if step.done {
                break;
            }
        }
        curve.push(DqnCurveRow {
            episode,
            cumulative_reward: total,
            epsilon,
            loss_mean: (n_updates > 0).then(|| loss_sum / n_updates as f64),
        });
    }
    Ok(DqnRun { agent, curve })
}
