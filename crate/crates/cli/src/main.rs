//! `cropmgmt`: train, evaluate and compare crop management policies.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cropmgmt::baselines::ExpertSchedule;
use cropmgmt::dqn::{self, train_dqn, DiscreteActionTable, DqnConfig};
use cropmgmt::harness::{compare, compare_by_task, evaluate, load_policy, EvalOptions, EvalReport, HarnessError};
use cropmgmt::ppo::{self, train_ppo, PpoConfig};
use cropmgmt::{CropEnv, SimConfig, TaskMode};

use manifest::Manifest;

/// Environment variable naming the default output root.
const OUT_ROOT_VAR: &str = "CROPMGMT_OUT";

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "cropmgmt", version, about = "Crop management with reinforcement learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Algo {
    Dqn,
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    /// Budgets and networks sized for a few minutes of CPU time.
    Desk,
    /// The original full-scale hyperparameters.
    Full,
}

fn parse_task(s: &str) -> Result<TaskMode, String> {
    s.parse::<TaskMode>().map_err(|e| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent and write its checkpoint, training curve and manifest.
    Train {
        #[arg(long, value_parser = parse_task)]
        task: TaskMode,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// PPO environment steps.
        #[arg(long)]
        steps: Option<usize>,
        /// DQN episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Simulator configuration (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON object overriding agent hyperparameters.
        #[arg(long)]
        agent_config: Option<PathBuf>,
        /// Simulator override `key=value`; repeatable, applied after `--config`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint or baseline over a seed range.
    Eval {
        #[arg(long, value_parser = parse_task)]
        task: TaskMode,
        /// Checkpoint directory, `null` or `expert`.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Seeds the randomness of stochastic policies.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Expert schedule CSV (`kind,day,amount`).
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Report label; defaults to the policy's own name.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate mean ± std of evaluation reports and mark each row's best.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// One row per task instead of requiring a single task.
        #[arg(long)]
        by_task: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(explicit: Option<PathBuf>, default_name: String) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(default_name)
    })
}

fn sim_config(path: Option<&Path>, sets: &[String]) -> Result<SimConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            SimConfig::from_kv_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    for s in sets {
        if !s.contains('=') {
            return Err(usage(format!("--set expects KEY=VALUE, got `{s}`")));
        }
        cfg.apply_kv_str(s).map_err(|e| usage(format!("--set {s}: {e}")))?;
    }
    Ok(cfg)
}

/// Overlays the keys of a JSON object file onto `base`.
fn overlay<T: Serialize + serde::de::DeserializeOwned>(base: &T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let patch: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(usage(format!("{} must hold a JSON object", path.display())));
    };
    let mut value = serde_json::to_value(base)?;
    let obj = value.as_object_mut().expect("config serializes to an object");
    for (k, v) in patch {
        if !obj.contains_key(&k) {
            return Err(usage(format!("{}: unknown agent setting `{k}`", path.display())));
        }
        obj.insert(k, v);
    }
    serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    argv: &[String],
    task: TaskMode,
    algo: Algo,
    seed: u64,
    steps: Option<usize>,
    episodes: Option<usize>,
    config: Option<PathBuf>,
    agent_config: Option<PathBuf>,
    sets: Vec<String>,
    preset: Preset,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = sim_config(config.as_deref(), &sets)?;
    let out = out_dir(out, format!("train-{}-{}-s{seed}", task.short(), serde_json::to_value(algo)?.as_str().unwrap_or("")));
    let mut manifest = Manifest::start(argv, "train", seed);
    manifest.set_config("sim", cfg.to_kv_string());
    manifest.task = Some(task);
    let ckpt = out.join("checkpoint");

    match algo {
        Algo::Dqn => {
            if steps.is_some() {
                return Err(usage("--steps applies to ppo; use --episodes for dqn"));
            }
            let base = match preset {
                Preset::Desk => DqnConfig::desk(task),
                Preset::Full => DqnConfig::default(),
            };
            let mut acfg: DqnConfig = overlay(&base, agent_config.as_deref())?;
            if let Some(n) = episodes {
                acfg.episodes = n;
            }
            if acfg.episodes == 0 {
                return Err(usage("--episodes must be at least 1"));
            }
            acfg.validate().map_err(|e| usage(e.to_string()))?;
            manifest.set_config("agent", serde_json::to_string(&acfg)?);
            manifest.algo = Some("dqn".into());
            let mut env = CropEnv::new(task, cfg)?;
            let run = train_dqn(&mut env, DiscreteActionTable::for_task(task), acfg, seed)?;
            std::fs::create_dir_all(&out)?;
            run.agent.save(&ckpt, Some(task))?;
            let mut buf = Vec::new();
            dqn::write_curve_csv(&mut buf, &run.curve)?;
            write_file(&out.join("curve.csv"), buf)?;
        }
        Algo::Ppo => {
            if episodes.is_some() {
                return Err(usage("--episodes applies to dqn; use --steps for ppo"));
            }
            let base = match preset {
                Preset::Desk => PpoConfig::for_task(task),
                Preset::Full => PpoConfig { total_timesteps: 1_000_000, ..PpoConfig::for_task(task) },
            };
            let mut acfg: PpoConfig = overlay(&base, agent_config.as_deref())?;
            if let Some(n) = steps {
                acfg.total_timesteps = n;
            }
            if acfg.total_timesteps == 0 {
                return Err(usage("--steps must be at least 1"));
            }
            acfg.validate().map_err(|e| usage(e.to_string()))?;
            manifest.set_config("agent", serde_json::to_string(&acfg)?);
            manifest.algo = Some("ppo".into());
            let mut env = CropEnv::new(task, cfg)?;
            let run = train_ppo(&mut env, acfg.clone(), seed)?;
            std::fs::create_dir_all(&out)?;
            run.policy.save(&ckpt, &acfg, Some(task))?;
            let mut buf = Vec::new();
            ppo::write_curve_csv(&mut buf, &run.curve)?;
            write_file(&out.join("curve.csv"), buf)?;
        }
    }
    manifest.outputs = vec!["checkpoint".into(), "curve.csv".into()];
    manifest.finish(&out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    argv: &[String],
    task: TaskMode,
    policy: String,
    episodes: usize,
    seed_base: u64,
    seed: u64,
    workers: Option<usize>,
    config: Option<PathBuf>,
    sets: Vec<String>,
    schedule: Option<PathBuf>,
    name: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    if episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    if workers == Some(0) {
        return Err(usage("--workers must be at least 1"));
    }
    let cfg = sim_config(config.as_deref(), &sets)?;
    let sched = match &schedule {
        Some(p) => Some(ExpertSchedule::load(p, &cfg).map_err(|e| usage(format!("schedule {}: {e}", p.display())))?),
        None => None,
    };
    let label = match policy.as_str() {
        "null" | "expert" => policy.clone(),
        p => Path::new(p).file_name().map_or("checkpoint".into(), |f| f.to_string_lossy().into_owned()),
    };
    let out = out_dir(out, format!("eval-{}-{label}-b{seed_base}", task.short()));
    let loaded = match load_policy(&policy, task, &cfg, sched) {
        Ok(p) => p,
        Err(e @ (HarnessError::PolicyDimension { .. } | HarnessError::TaskMismatch { .. } | HarnessError::Schedule(_))) => {
            return Err(usage(e.to_string()))
        }
        Err(e) => return Err(anyhow!(e).context(format!("loading policy `{policy}`"))),
    };
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let opts = EvalOptions { episodes, seed_base, workers, action_seed: seed };
    let mut report = match evaluate(loaded.as_ref(), task, &cfg, &opts) {
        Err(e @ HarnessError::SeedRange { .. }) => return Err(usage(e.to_string())),
        r => r?,
    };
    if let Some(n) = name {
        report.policy = n;
    }

    let mut manifest = Manifest::start(argv, "eval", seed);
    manifest.task = Some(task);
    manifest.seed_base = Some(seed_base);
    manifest.set_config("sim", cfg.to_kv_string());
    manifest.set_config("policy", policy.clone());
    std::fs::create_dir_all(&out)?;
    report.save(&out.join("report.json"))?;
    report.emit_figures(&out, "hist")?;
    manifest.outputs = vec!["report.json".into()];
    for h in &report.histograms {
        manifest.outputs.push(format!("hist_{}.svg", h.input));
        manifest.outputs.push(format!("hist_{}.csv", h.input));
    }
    manifest.finish(&out)?;
    println!("{}: {} on {} over {} episodes: {:.2} ± {:.2}", out.display(), report.policy, task.label(), report.episodes, report.mean, report.std);
    Ok(())
}

fn cmd_compare(argv: &[String], reports: Vec<PathBuf>, by_task: bool, out: Option<PathBuf>) -> Result<()> {
    let loaded = reports
        .iter()
        .map(|p| EvalReport::load(p).map_err(|e| usage(format!("report {}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let table = if by_task { compare_by_task(&loaded) } else { compare(&loaded) };
    let table = match table {
        Err(e @ (HarnessError::MixedModes(..) | HarnessError::NoReports)) => {
            return Err(usage(format!("{e}; pass --by-task to tabulate several tasks")))
        }
        t => t?,
    };
    let out = out_dir(out, "compare".into());
    std::fs::create_dir_all(&out)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_file(&out.join("comparison.csv"), csv)?;
    let text = table.to_text();
    write_file(&out.join("comparison.txt"), &text)?;
    let mut manifest = Manifest::start(argv, "compare", 0);
    manifest.set_config("reports", reports.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join("\n"));
    manifest.outputs = vec!["comparison.csv".into(), "comparison.txt".into()];
    manifest.finish(&out)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Train { task, algo, seed, steps, episodes, config, agent_config, sets, preset, out } => {
            cmd_train(argv, task, algo, seed, steps, episodes, config, agent_config, sets, preset, out)
        }
        Command::Eval { task, policy, episodes, seed_base, seed, workers, config, sets, schedule, name, out } => {
            cmd_eval(argv, task, policy, episodes, seed_base, seed, workers, config, sets, schedule, name, out)
        }
        Command::Compare { reports, by_task, out } => cmd_compare(argv, reports, by_task, out),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
