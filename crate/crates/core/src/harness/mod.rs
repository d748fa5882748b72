//! Evaluation protocol, summary statistics, comparison tables and
//! application heatmaps.

mod compare;
mod histogram;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{ExpertPolicy, ExpertSchedule, NullPolicy, ScheduleError};
use crate::dqn::{DqnError, DqnPolicy};
use crate::mdp::{EnvError, Environment, Policy};
use crate::ppo::{PpoError, PpoPolicy};
use crate::rng::{pair_seed, stream_seed, streams, TRAINING_SEED_FLAG};
use crate::sim::{CropEnv, SimConfig, SimError, TaskMode};

pub use compare::{compare, compare_by_task, Cell, ComparisonTable, TableRow};
pub use histogram::Histogram2d;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("episode count must be at least 1")]
    NoEpisodes,
    #[error("evaluation seeds {base}..{end} reach the training seed range")]
    SeedRange { base: u64, end: u128 },
    #[error("reports mix tasks {0} and {1}")]
    MixedModes(TaskMode, TaskMode),
    #[error("no reports to compare")]
    NoReports,
    #[error("policy expects {expected}-dimensional observations, task {task} provides {got}")]
    PolicyDimension { task: TaskMode, expected: usize, got: usize },
    #[error("observation schema mismatch: checkpoint was trained on task {trained}, whose observation fields differ from task {requested}")]
    TaskMismatch { trained: TaskMode, requested: TaskMode },
    #[error("unsupported report schema version {0}")]
    Schema(u32),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Dqn(#[from] DqnError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Agent-applied inputs over one episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeInputs {
    /// kg N/ha
    pub nitrogen: f64,
    /// L/m²
    pub water: f64,
    pub nitrogen_events: u32,
    pub water_events: u32,
    pub grain_yield: f64,
    pub days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub policy: String,
    pub task: TaskMode,
    pub episodes: usize,
    /// Environment seeds `seed_base .. seed_base + episodes`.
    pub seed_base: u64,
    pub rewards: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `rewards`.
    pub std: f64,
    pub inputs: Vec<EpisodeInputs>,
    /// One grid per input the task controls.
    pub histograms: Vec<Histogram2d>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

impl EvalReport {
    pub fn histogram(&self, input: &str) -> Option<&Histogram2d> {
        self.histograms.iter().find(|h| h.input == input)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Schema(r.schema_version));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Writes `<dir>/<prefix>_<input>.svg|csv` for every grid.
    pub fn emit_figures(&self, dir: &Path, prefix: &str) -> Result<(), HarnessError> {
        for h in &self.histograms {
            let title = format!("{} / {} / {}", self.policy, self.task.label(), h.input);
            h.emit(&title, &dir.join(format!("{prefix}_{}", h.input)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed_base: u64,
    /// Worker threads; 1 runs serially on the calling thread.
    pub workers: usize,
    /// Seeds the policy's own randomness (stochastic policies only).
    pub action_seed: u64,
}

impl EvalOptions {
    pub fn new(episodes: usize, seed_base: u64) -> Self {
        Self { episodes, seed_base, workers: 1, action_seed: 0 }
    }
}

fn empty_histograms(mode: TaskMode, cfg: &SimConfig) -> Vec<Histogram2d> {
    let mut v = Vec::new();
    if mode != TaskMode::Irrigation {
        v.push(Histogram2d::nitrogen(cfg.max_nitrogen));
    }
    if mode != TaskMode::Fertilization {
        v.push(Histogram2d::water(cfg.max_water));
    }
    v
}

struct EpisodeResult {
    reward: f64,
    inputs: EpisodeInputs,
    histograms: Vec<Histogram2d>,
}

fn run_episode(
    policy: &dyn Policy,
    mode: TaskMode,
    cfg: &SimConfig,
    seed: u64,
    action_seed: u64,
) -> Result<EpisodeResult, HarnessError> {
    let mut env = CropEnv::new(mode, cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(stream_seed(action_seed, streams::EVAL_ACTIONS), seed));
    let mut hists = empty_histograms(mode, cfg);
    let mut inputs = EpisodeInputs::default();
    let mut reward = 0.0;
    let mut obs = env.reset(seed);
    loop {
        // every crop observation starts with days after planting
        let dap = obs[0];
        let step = env.step(&policy.act(&obs, &mut rng))?;
        reward += step.reward;
        let n = step.info["n_applied"];
        let w = step.info["w_applied"];
        inputs.nitrogen += n;
        inputs.water += w;
        inputs.nitrogen_events += u32::from(n > 0.0);
        inputs.water_events += u32::from(w > 0.0);
        inputs.grain_yield += step.info["grain_yield"];
        inputs.days += 1;
        for h in &mut hists {
            h.record(dap, if h.input == "nitrogen" { n } else { w });
        }
        obs = step.observation;
        if step.done {
            break;
        }
    }
    Ok(EpisodeResult { reward, inputs, histograms: hists })
}

/// Runs `opts.episodes` episodes on seeds `seed_base..` and aggregates the
/// results. Rewards are stored in seed order and counts are summed, so the
/// report does not depend on the number of workers.
pub fn evaluate(
    policy: &dyn Policy,
    mode: TaskMode,
    cfg: &SimConfig,
    opts: &EvalOptions,
) -> Result<EvalReport, HarnessError> {
    if opts.episodes == 0 {
        return Err(HarnessError::NoEpisodes);
    }
    let end = opts.seed_base as u128 + opts.episodes as u128;
    if end > TRAINING_SEED_FLAG as u128 {
        return Err(HarnessError::SeedRange { base: opts.seed_base, end });
    }
    cfg.validate()?;
    let seeds: Vec<u64> = (0..opts.episodes as u64).map(|k| opts.seed_base + k).collect();
    let run = |&s: &u64| run_episode(policy, mode, cfg, s, opts.action_seed);
    let results: Vec<EpisodeResult> = if opts.workers <= 1 {
        seeds.iter().map(run).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| HarnessError::Parse(format!("worker pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(run).collect::<Result<_, _>>())?
    };

    let mut histograms = empty_histograms(mode, cfg);
    for r in &results {
        for (h, eh) in histograms.iter_mut().zip(&r.histograms) {
            h.merge(eh);
        }
    }
    let rewards: Vec<f64> = results.iter().map(|r| r.reward).collect();
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        policy: policy.name().to_string(),
        task: mode,
        episodes: opts.episodes,
        seed_base: opts.seed_base,
        mean: mean(&rewards),
        std: population_std(&rewards),
        inputs: results.iter().map(|r| r.inputs).collect(),
        rewards,
        histograms,
    })
}

/// Resolves `null`, `expert` or a checkpoint directory into a policy for
/// `mode`, checking that a checkpoint matches the task's observation layout.
pub fn load_policy(
    spec: &str,
    mode: TaskMode,
    cfg: &SimConfig,
    schedule: Option<ExpertSchedule>,
) -> Result<Box<dyn Policy>, HarnessError> {
    match spec {
        "null" => Ok(Box::new(NullPolicy::new(mode))),
        "expert" => Ok(Box::new(ExpertPolicy::new(mode, schedule.unwrap_or_default(), cfg)?)),
        path => {
            let dir = Path::new(path);
            let dir = if dir.is_file() { dir.parent().unwrap_or(Path::new(".")) } else { dir };
            let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("agent.json"))?)?;
            let check = |task: Option<TaskMode>, input_dim: usize| {
                if input_dim != mode.observation_dim() {
                    return Err(HarnessError::PolicyDimension {
                        task: mode,
                        expected: input_dim,
                        got: mode.observation_dim(),
                    });
                }
                match task {
                    Some(t) if t != mode => Err(HarnessError::TaskMismatch { trained: t, requested: mode }),
                    _ => Ok(()),
                }
            };
            match raw.get("algo").and_then(|a| a.as_str()) {
                Some("dqn") => {
                    let (p, meta) = DqnPolicy::load(dir)?;
                    check(meta.task, p.input_dim())?;
                    if p.action_dim() != mode.action_dim() {
                        return Err(HarnessError::Parse(format!(
                            "checkpoint actions have {} components, task {mode} needs {}",
                            p.action_dim(),
                            mode.action_dim()
                        )));
                    }
                    Ok(Box::new(p))
                }
                Some("ppo") => {
                    let (p, meta) = PpoPolicy::load(dir)?;
                    check(meta.task, p.input_dim())?;
                    Ok(Box::new(p))
                }
                other => Err(HarnessError::Parse(format!("unknown checkpoint algorithm {other:?}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_statistics() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&xs), 5.0);
        assert_eq!(population_std(&xs), 2.0);
    }

    #[test]
    fn rejects_bad_ranges() {
        let cfg = SimConfig::default();
        let p = NullPolicy::new(TaskMode::Irrigation);
        assert!(matches!(
            evaluate(&p, TaskMode::Irrigation, &cfg, &EvalOptions::new(0, 0)),
            Err(HarnessError::NoEpisodes)
        ));
        assert!(matches!(
            evaluate(&p, TaskMode::Irrigation, &cfg, &EvalOptions::new(5, TRAINING_SEED_FLAG - 2)),
            Err(HarnessError::SeedRange { .. })
        ));
    }
}
