//! Proximal policy optimization: clipped surrogate objective with a value
//! loss and entropy bonus, generalized advantage estimation and a diagonal
//! Gaussian policy over continuous actions.

mod policy;

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{EnvError, Environment, Policy};
use crate::neural::{read_network, write_network, Activation, NeuralError, Optimizer};
use crate::normalize::RunningNorm;
use crate::rng::{stream_rng, streams, training_env_seed};
use crate::sim::TaskMode;
use crate::toy::is_truncated;

pub use policy::{Bounds, GaussianPolicy, PolicyEval};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid PPO config: {0}")]
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
pub struct PpoConfig {
    pub gamma: f64,
    pub total_timesteps: usize,
    /// Steps collected per iteration.
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    /// Validation cadence in environment steps; 0 disables validation.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub shared_trunk: bool,
    pub max_grad_norm: Option<f64>,
    pub normalize_obs: bool,
    pub reward_scale: f64,
    pub init_log_std: f64,
    /// Environment units per unit of raw policy output, per action component.
    /// Empty means 1 for every component.
    pub action_scale: Vec<f64>,
    /// Use the mean action during validation and evaluation.
    pub deterministic_eval: bool,
    /// Keep the parameters with the best validation score instead of the last.
    pub keep_best: bool,
    pub max_episode_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            total_timesteps: 1_000_000,
            rollout_len: 2048,
            epochs: 10,
            minibatch_size: 64,
            clip_epsilon: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.0,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            eval_every: 1000,
            eval_episodes: 5,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            shared_trunk: false,
            max_grad_norm: Some(0.5),
            normalize_obs: true,
            reward_scale: 1.0,
            init_log_std: 0.0,
            action_scale: Vec::new(),
            deterministic_eval: false,
            keep_best: true,
            max_episode_steps: 10_000,
        }
    }
}

impl PpoConfig {
    /// Defaults for a crop task: 1e5 steps, stochastic evaluation on the
    /// single-input tasks and deterministic on the mixed one, rewards and
    /// actions rescaled to unit-order magnitudes.
    pub fn for_task(mode: TaskMode) -> Self {
        let (reward_scale, action_scale) = match mode {
            TaskMode::Fertilization => (0.1, vec![20.0]),
            TaskMode::Irrigation => (0.001, vec![5.0]),
            TaskMode::Mixed => (0.01, vec![20.0, 5.0]),
        };
        Self {
            total_timesteps: 100_000,
            reward_scale,
            action_scale,
            deterministic_eval: mode == TaskMode::Mixed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.to_string()));
        if self.clip_epsilon <= 0.0 {
            return bad("clip epsilon must be positive");
        }
        if self.epochs == 0 || self.rollout_len == 0 || self.minibatch_size == 0 {
            return bad("epochs, rollout length and minibatch size must be at least 1");
        }
        if self.minibatch_size > self.rollout_len {
            return bad("minibatch size cannot exceed the rollout length");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if self.learning_rate <= 0.0 || self.reward_scale <= 0.0 {
            return bad("learning rate and reward scale must be positive");
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return bad("validation needs at least one episode");
        }
        Ok(())
    }
}

/// Generalized advantage estimates and value targets.
///
/// `dones[t]` marks a transition after which nothing is bootstrapped;
/// `last_value` is the value of the state following the final step and is
/// ignored when that step is done.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(PpoError::LengthMismatch(format!(
            "rewards {}, values {}, dones {}",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// `min(ρA, clip(ρ, 1-ε, 1+ε) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

/// Whether the clipped branch of [`clipped_surrogate`] is the one selected
/// (and so carries no gradient).
pub fn clip_active(ratio: f64, advantage: f64, epsilon: f64) -> bool {
    (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon)
}

/// Per-step data of one rollout. Observations are stored as the policy saw
/// them (already normalized).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub obs: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Fills advantages and targets, then standardizes the advantages.
    pub fn finish(&mut self, last_value: f64, gamma: f64, lambda: f64) -> Result<(), PpoError> {
        let (adv, targets) = compute_gae(&self.rewards, &self.values, &self.dones, last_value, gamma, lambda)?;
        self.advantages = normalize_advantages(&adv);
        self.value_targets = targets;
        Ok(())
    }
}

/// Zero mean, unit variance (population), with a floor on the deviation.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return Vec::new();
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter().map(|a| (a - mean) / std).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Loss over the samples `idx` of `batch`, its gradient in the layout of
/// [`GaussianPolicy::flat_params`], and diagnostics.
pub fn ppo_loss(
    policy: &GaussianPolicy,
    batch: &RolloutBatch,
    idx: &[usize],
    cfg: &PpoConfig,
) -> (f64, Vec<f64>, LossDiagnostics) {
    let n = idx.len() as f64;
    let eps = cfg.clip_epsilon;
    let var: Vec<f64> = policy.log_std.iter().map(|l| (2.0 * l).exp()).collect();
    let mut grads = vec![0.0; policy.n_params()];
    let mut diag = LossDiagnostics { entropy: policy.entropy(), ..Default::default() };
    let act_dim = policy.act_dim();
    let mut d_mean = vec![0.0; act_dim];
    let mut d_log_std = vec![0.0; act_dim];

    for &i in idx {
        let ev = policy.evaluate(&batch.obs[i]).expect("observation dimension");
        let raw = &batch.raw_actions[i];
        let logp = policy.log_prob(&ev.mean, raw);
        let log_ratio = logp - batch.log_probs[i];
        let ratio = log_ratio.exp();
        let a = batch.advantages[i];

        diag.policy_loss -= clipped_surrogate(ratio, a, eps) / n;
        diag.mean_ratio += ratio / n;
        if (ratio - 1.0).abs() > eps {
            diag.clip_fraction += 1.0 / n;
        }
        diag.approx_kl += ((ratio - 1.0) - log_ratio) / n;

        // dL/dlogp for this sample
        let g_logp = if clip_active(ratio, a, eps) { 0.0 } else { -ratio * a / n };
        for d in 0..act_dim {
            let diff = raw[d] - ev.mean[d];
            d_mean[d] = g_logp * diff / var[d];
            d_log_std[d] = g_logp * (diff * diff / var[d] - 1.0);
        }
        let v_err = ev.value - batch.value_targets[i];
        diag.value_loss += v_err * v_err / n;
        let d_value = cfg.value_coef * 2.0 * v_err / n;
        policy.accumulate(&ev, &d_mean, d_value, &d_log_std, &mut grads);
    }
    // entropy bonus: d(-c2 * H)/d log_std = -c2
    let nl = policy.log_std.len();
    let total = grads.len();
    for g in &mut grads[total - nl..] {
        *g -= cfg.entropy_coef;
    }
    let loss = diag.policy_loss + cfg.value_coef * diag.value_loss - cfg.entropy_coef * diag.entropy;
    (loss, grads, diag)
}

/// Read-only PPO policy for evaluation.
#[derive(Debug, Clone)]
pub struct PpoPolicy {
    name: String,
    pub policy: GaussianPolicy,
    pub norm: Option<RunningNorm>,
    pub deterministic: bool,
}

impl PpoPolicy {
    pub fn new(name: &str, policy: GaussianPolicy, norm: Option<RunningNorm>, deterministic: bool) -> Self {
        Self { name: name.to_string(), policy, norm, deterministic }
    }

    pub fn input_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    fn input(&self, obs: &[f64]) -> Vec<f64> {
        match &self.norm {
            Some(n) => n.normalize(obs),
            None => obs.to_vec(),
        }
    }

    pub fn load(dir: &Path) -> Result<(Self, PpoCheckpoint), PpoError> {
        let meta: PpoCheckpoint = serde_json::from_str(&std::fs::read_to_string(dir.join(AGENT_FILE))?)?;
        let mean_net = read_network(&dir.join(MEAN_FILE))?;
        let value_net = if meta.config.shared_trunk { None } else { Some(read_network(&dir.join(VALUE_FILE))?) };
        if meta.log_std.len() != meta.action_scale.len() {
            return Err(PpoError::LengthMismatch("log_std and action_scale".into()));
        }
        let policy = GaussianPolicy {
            mean_net,
            value_net,
            log_std: meta.log_std.clone(),
            action_scale: meta.action_scale.clone(),
            bounds: meta.bounds.clone(),
        };
        let p = Self::new("PPO", policy, meta.norm.clone(), meta.config.deterministic_eval);
        Ok((p, meta))
    }

    /// Writes the networks and `agent.json` into `dir`.
    pub fn save(&self, dir: &Path, config: &PpoConfig, task: Option<TaskMode>) -> Result<(), PpoError> {
        std::fs::create_dir_all(dir)?;
        write_network(&dir.join(MEAN_FILE), &self.policy.mean_net, None)?;
        if let Some(v) = &self.policy.value_net {
            write_network(&dir.join(VALUE_FILE), v, None)?;
        }
        let meta = PpoCheckpoint {
            algo: "ppo".into(),
            task,
            config: PpoConfig { deterministic_eval: self.deterministic, ..config.clone() },
            norm: self.norm.clone(),
            log_std: self.policy.log_std.clone(),
            action_scale: self.policy.action_scale.clone(),
            bounds: self.policy.bounds.clone(),
        };
        std::fs::write(dir.join(AGENT_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}

impl Policy for PpoPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.policy.sample_action(&self.input(obs), self.deterministic, rng).0
    }
}

pub const AGENT_FILE: &str = "agent.json";
const MEAN_FILE: &str = "policy.bin";
const VALUE_FILE: &str = "value.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoCheckpoint {
    pub algo: String,
    pub task: Option<TaskMode>,
    pub config: PpoConfig,
    pub norm: Option<RunningNorm>,
    pub log_std: Vec<f64>,
    pub action_scale: Vec<f64>,
    pub bounds: Bounds,
}

/// One validation point of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoCurveRow {
    pub timestep: usize,
    pub eval_mean_reward: f64,
    /// Means over the minibatch updates of the latest iteration; empty before
    /// the first update.
    pub clip_fraction: Option<f64>,
    pub approx_kl: Option<f64>,
}

pub fn write_curve_csv<W: std::io::Write>(out: W, rows: &[PpoCurveRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub struct PpoRun {
    /// Final or best-validated policy, per `keep_best`.
    pub policy: PpoPolicy,
    pub curve: Vec<PpoCurveRow>,
    /// Raw cumulative reward of every completed training episode.
    pub episode_rewards: Vec<f64>,
    pub iterations: usize,
}

fn validate_policy<E: Environment + ?Sized>(
    env: &mut E,
    policy: &PpoPolicy,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<f64, PpoError> {
    let mut rng = stream_rng(seed, streams::EVAL_ACTIONS);
    let mut total = 0.0;
    for k in 0..cfg.eval_episodes {
        let mut obs = env.reset(training_env_seed(seed, streams::VALIDATION, k as u64));
        for _ in 0..cfg.max_episode_steps {
            let step = env.step(&policy.act(&obs, &mut rng))?;
            total += step.reward;
            obs = step.observation;
            if step.done {
                break;
            }
        }
    }
    Ok(total / cfg.eval_episodes as f64)
}

/// Alternates rollout collection and `epochs` passes of minibatch updates
/// until `total_timesteps` environment steps have been taken.
pub fn train_ppo<E: Environment + ?Sized>(env: &mut E, cfg: PpoConfig, seed: u64) -> Result<PpoRun, PpoError> {
    cfg.validate()?;
    let space = env.action_space();
    let act_dim = space.dim();
    let scale = if cfg.action_scale.is_empty() { vec![1.0; act_dim] } else { cfg.action_scale.clone() };
    let mut init_rng = stream_rng(seed, streams::INIT);
    let mut policy = GaussianPolicy::new(
        env.observation_dim(),
        &cfg.hidden,
        cfg.activation,
        cfg.shared_trunk,
        &space,
        scale,
        cfg.init_log_std,
        &mut init_rng,
    )?;
    let mut opt = Optimizer::adam(cfg.learning_rate).with_max_grad_norm(cfg.max_grad_norm);
    let mut norm = RunningNorm::new(env.observation_dim());
    let mut explore = stream_rng(seed, streams::EXPLORATION);
    let mut shuffle = stream_rng(seed, streams::MINIBATCH);
    let input = |norm: &RunningNorm, o: &[f64]| if cfg.normalize_obs { norm.normalize(o) } else { o.to_vec() };
    let snapshot = |p: &GaussianPolicy, n: &RunningNorm| {
        PpoPolicy::new("PPO", p.clone(), cfg.normalize_obs.then(|| n.clone()), cfg.deterministic_eval)
    };

    let mut curve = Vec::new();
    let mut best: Option<(f64, PpoPolicy)> = None;
    let mut episode_rewards = Vec::new();
    let mut episode = 0u64;
    let mut obs = env.reset(training_env_seed(seed, streams::WEATHER, episode));
    let (mut ep_return, mut ep_len) = (0.0, 0usize);
    let mut t = 0usize;
    let mut next_eval = 0usize;
    let mut last_diag: Option<LossDiagnostics> = None;
    let mut iterations = 0;

    loop {
        if cfg.eval_every > 0 && t >= next_eval {
            let snap = snapshot(&policy, &norm);
            let score = validate_policy(env, &snap, &cfg, seed)?;
            curve.push(PpoCurveRow {
                timestep: t,
                eval_mean_reward: score,
                clip_fraction: last_diag.map(|d| d.clip_fraction),
                approx_kl: last_diag.map(|d| d.approx_kl),
            });
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, snap));
            }
            while next_eval <= t {
                next_eval += cfg.eval_every;
            }
            // validation used the environment; restart the training episode
            obs = env.reset(training_env_seed(seed, streams::WEATHER, episode));
            ep_return = 0.0;
            ep_len = 0;
        }
        if t >= cfg.total_timesteps {
            break;
        }

        let mut batch = RolloutBatch::default();
        let n_steps = cfg.rollout_len.min(cfg.total_timesteps - t);
        for _ in 0..n_steps {
            if cfg.normalize_obs {
                norm.update(&obs);
            }
            let x = input(&norm, &obs);
            let (env_action, raw, logp) = policy.sample_action(&x, false, &mut explore);
            let value = policy.value(&x);
            let step = env.step(&env_action)?;
            ep_return += step.reward;
            ep_len += 1;
            let mut r = step.reward * cfg.reward_scale;
            let cut = step.done || ep_len >= cfg.max_episode_steps;
            if cut && (!step.done || is_truncated(&step.info)) {
                r += cfg.gamma * policy.value(&input(&norm, &step.observation));
            }
            batch.obs.push(x);
            batch.raw_actions.push(raw);
            batch.log_probs.push(logp);
            batch.rewards.push(r);
            batch.values.push(value);
            batch.dones.push(cut);
            t += 1;
            if cut {
                episode_rewards.push(ep_return);
                episode += 1;
                obs = env.reset(training_env_seed(seed, streams::WEATHER, episode));
                ep_return = 0.0;
                ep_len = 0;
            } else {
                obs = step.observation;
            }
        }
        let last_value = if batch.dones.last().copied().unwrap_or(true) { 0.0 } else { policy.value(&input(&norm, &obs)) };
        batch.finish(last_value, cfg.gamma, cfg.gae_lambda)?;

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut acc = LossDiagnostics::default();
        let mut n_mb = 0.0;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut shuffle);
            for mb in order.chunks(cfg.minibatch_size) {
                let (_, grads, diag) = ppo_loss(&policy, &batch, mb, &cfg);
                let mut params = policy.flat_params();
                opt.step(&mut params, &grads);
                policy.set_flat_params(&params);
                acc.clip_fraction += diag.clip_fraction;
                acc.approx_kl += diag.approx_kl;
                acc.mean_ratio += diag.mean_ratio;
                n_mb += 1.0;
            }
        }
        acc.clip_fraction /= n_mb;
        acc.approx_kl /= n_mb;
        acc.mean_ratio /= n_mb;
        last_diag = Some(acc);
        iterations += 1;
    }

    let final_policy = snapshot(&policy, &norm);
    let policy = match best {
        Some((_, p)) if cfg.keep_best => p,
        _ => final_policy,
    };
    Ok(PpoRun { policy, curve, episode_rewards, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        assert_eq!(-clipped_surrogate(2.0, 1.0, 0.2), -1.2);
        assert!((-clipped_surrogate(0.5, -1.0, 0.2) - 0.8).abs() < 1e-15);
        assert!(clip_active(2.0, 1.0, 0.2));
        assert!(!clip_active(2.0, -1.0, 0.2));
    }

    #[test]
    fn gae_length_mismatch() {
        assert!(matches!(compute_gae(&[1.0], &[], &[false], 0.0, 1.0, 1.0), Err(PpoError::LengthMismatch(_))));
    }

    #[test]
    fn config_checks() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip_epsilon: 0.0, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { epochs: 0, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { minibatch_size: 4096, ..PpoConfig::default() }.validate().is_err());
        for m in TaskMode::ALL {
            assert!(PpoConfig::for_task(m).validate().is_ok());
        }
    }
}
