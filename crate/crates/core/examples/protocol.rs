//! Trains PPO and DQN on every task with the desk-scale settings and prints
//! the comparison table against the baselines.
//!
//! Usage: `protocol [eval_episodes] [seed]`

use std::time::Instant;

use cropmgmt::dqn::{train_dqn, DiscreteActionTable, DqnConfig};
use cropmgmt::harness::{compare_by_task, evaluate, load_policy, EvalOptions};
use cropmgmt::ppo::{train_ppo, PpoConfig};
use cropmgmt::{CropEnv, SimConfig, TaskMode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let episodes: usize = args.get(1).map_or(200, |s| s.parse().expect("episodes"));
    let seed: u64 = args.get(2).map_or(1, |s| s.parse().expect("seed"));
    let cfg = SimConfig::default();
    let opts = EvalOptions { workers: 8, ..EvalOptions::new(episodes, 1_000_000) };
    let mut reports = Vec::new();
    for mode in TaskMode::ALL {
        for name in ["null", "expert"] {
            let p = load_policy(name, mode, &cfg, None).unwrap();
            reports.push(evaluate(p.as_ref(), mode, &cfg, &opts).unwrap());
        }
        let t = Instant::now();
        let mut env = CropEnv::new(mode, cfg.clone()).unwrap();
        let run = train_ppo(&mut env, PpoConfig::for_task(mode), seed).unwrap();
        let best = run.curve.iter().map(|r| r.eval_mean_reward).fold(f64::MIN, f64::max);
        eprintln!("{mode} ppo {:.1}s, best validation {best:.2}, log_std {:?}", t.elapsed().as_secs_f64(), run.policy.policy.log_std);
        reports.push(evaluate(&run.policy, mode, &cfg, &opts).unwrap());

        let t = Instant::now();
        let mut env = CropEnv::new(mode, cfg.clone()).unwrap();
        let run = train_dqn(&mut env, DiscreteActionTable::for_task(mode), DqnConfig::desk(mode), seed).unwrap();
        let last: f64 = run.curve[350..].iter().map(|r| r.cumulative_reward).sum::<f64>() / 50.0;
        eprintln!("{mode} dqn {:.1}s, last-50 training mean {last:.2}", t.elapsed().as_secs_f64());
        reports.push(evaluate(&run.agent.policy("DQN"), mode, &cfg, &opts).unwrap());
        for r in &reports[reports.len() - 4..] {
            let n: f64 = r.inputs.iter().map(|i| i.nitrogen).sum::<f64>() / r.episodes as f64;
            let w: f64 = r.inputs.iter().map(|i| i.water).sum::<f64>() / r.episodes as f64;
            eprintln!("  {:>6}: {:>10.2} ± {:>8.2}  N {n:>6.1}  W {w:>6.1}", r.policy, r.mean, r.std);
        }
    }
    print!("{}", compare_by_task(&reports).unwrap().to_text());
}
