//! Prints Null and Expert season statistics for every task.
//!
//! Usage: `cargo run --release --example season_summary -- [episodes] [config.kv]`

use cropmgmt::baselines::{ExpertPolicy, ExpertSchedule, NullPolicy};
use cropmgmt::mdp::rollout;
use cropmgmt::{CropEnv, Policy, SimConfig, TaskMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let episodes: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let cfg = match args.get(2) {
        Some(p) => SimConfig::load(p.as_ref()).expect("config"),
        None => SimConfig::default(),
    };
    for mode in TaskMode::ALL {
        let null = NullPolicy::new(mode);
        let expert = ExpertPolicy::new(mode, ExpertSchedule::default(), &cfg).unwrap();
        let policies: [&dyn Policy; 2] = [&null, &expert];
        for p in policies {
            let mut env = CropEnv::new(mode, cfg.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (mut rewards, mut len, mut plant, mut bio, mut fail, mut nup) =
                (Vec::new(), 0.0, 0.0, 0.0, 0, 0.0);
            for seed in 0..episodes {
                let (traj, log) = rollout(&mut env, seed, 400, |o| p.act(o, &mut rng)).unwrap();
                rewards.push(traj.cumulative_reward());
                let last = log.last().unwrap();
                len += last.info["days_after_planting"];
                plant += (log.len() as f64) - last.info["days_after_planting"];
                bio += last.info["biomass"];
                nup += last.info["n_uptake_cum"];
                if last.info["stage"] == 4.0 {
                    fail += 1;
                }
            }
            let n = episodes as f64;
            let mean = rewards.iter().sum::<f64>() / n;
            let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
            println!(
                "{:>4} {:>6}: reward {:>10.2} ± {:>8.2}  season {:>5.1}d  planting day {:>4.1}  biomass {:>8.0}  N uptake {:>6.1}  failures {}",
                mode.short(), p.name(), mean, std, len / n, plant / n, bio / n, nup / n, fail
            );
        }
    }
}
