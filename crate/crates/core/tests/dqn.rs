use cropmgmt::dqn::{
    argmax, epsilon_greedy, train_dqn, DiscreteActionTable, DqnAgent, DqnConfig, DqnPolicy, ReplayItem,
};
use cropmgmt::mdp::{rollout, Policy};
use cropmgmt::toy::{ChainMdp, GridWorld};
use cropmgmt::{CropEnv, SimConfig, TaskMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tabular value iteration on a deterministic model to `tol`.
fn value_iteration(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    model: impl Fn(usize, usize) -> (usize, f64, bool),
    terminal: impl Fn(usize) -> bool,
) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; n_actions]; n_states];
    loop {
        let mut delta: f64 = 0.0;
        for s in (0..n_states).filter(|&s| !terminal(s)) {
            for a in 0..n_actions {
                let (s2, r, done) = model(s, a);
                let v = if done { r } else { r + gamma * q[s2].iter().copied().fold(f64::MIN, f64::max) };
                delta = delta.max((v - q[s][a]).abs());
                q[s][a] = v;
            }
        }
        if delta < 1e-10 {
            return q;
        }
    }
}

fn chain_config() -> DqnConfig {
    DqnConfig {
        gamma: 0.9,
        episodes: 300,
        learning_rate: 1e-3,
        batch_size: 32,
        target_sync: 50,
        buffer_capacity: 5000,
        hidden: vec![32, 32],
        normalize_obs: false,
        ..DqnConfig::default()
    }
}

#[test]
fn value_iteration_oracle_matches_hand_values() {
    let q = value_iteration(4, 2, 0.9, ChainMdp::model, |s| s == ChainMdp::TERMINAL);
    let expected = [[0.729, 0.81], [0.729, 0.9], [0.81, 1.0]];
    for s in 0..3 {
        for a in 0..2 {
            assert!((q[s][a] - expected[s][a]).abs() < 1e-9);
        }
    }
}

#[test]
fn chain_q_values_converge_to_optimum() {
    let q_star = value_iteration(4, 2, 0.9, ChainMdp::model, |s| s == ChainMdp::TERMINAL);
    let mut env = ChainMdp::new();
    let run = train_dqn(&mut env, DiscreteActionTable::indices(2), chain_config(), 5).unwrap();
    let mut worst: f64 = 0.0;
    for s in 0..3 {
        let q = run.agent.q_values(&ChainMdp::encode(s));
        assert_eq!(argmax(&q), argmax(&q_star[s]), "state {s}");
        for a in 0..2 {
            worst = worst.max((q[a] - q_star[s][a]).abs());
        }
    }
    assert!(worst < 0.05, "max |Q - Q*| = {worst}");
}

#[test]
fn training_is_deterministic() {
    let cfg = DqnConfig { episodes: 40, ..chain_config() };
    let a = train_dqn(&mut ChainMdp::new(), DiscreteActionTable::indices(2), cfg.clone(), 9).unwrap();
    let b = train_dqn(&mut ChainMdp::new(), DiscreteActionTable::indices(2), cfg, 9).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.agent.q_net, b.agent.q_net);
}

#[test]
fn gridworld_greedy_return_near_optimal() {
    let gamma = 0.99;
    let q_star = value_iteration(9, 4, gamma, GridWorld::model, |s| s == GridWorld::GOAL);
    // undiscounted optimal return: four moves, then the goal
    let optimal = 1.0 - 4.0 * GridWorld::STEP_COST + GridWorld::STEP_COST;
    assert!(q_star[0].iter().copied().fold(f64::MIN, f64::max) > 0.9);
    let cfg = DqnConfig { gamma, episodes: 300, ..chain_config() };
    let mut env = GridWorld::new();
    let run = train_dqn(&mut env, DiscreteActionTable::indices(4), cfg, 3).unwrap();
    let policy = run.agent.policy("dqn");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (traj, _) = rollout(&mut env, 0, 100, |o| policy.act(o, &mut rng)).unwrap();
    let ret = traj.cumulative_reward();
    assert!((ret - optimal).abs() <= 0.02 * optimal, "return {ret} vs {optimal}");
}

#[test]
fn epsilon_one_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let q = [5.0, 1.0, 0.0, -1.0, 2.0];
    let mut counts = [0usize; 5];
    for _ in 0..10_000 {
        counts[epsilon_greedy(&q, 1.0, &mut rng)] += 1;
    }
    let expected = 2000.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // chi-square critical value, 4 degrees of freedom, p = 0.01
    assert!(chi2 < 13.277, "chi2 {chi2}, counts {counts:?}");
}

fn item(obs: Vec<f64>, action: usize, reward: f64, next_obs: Vec<f64>, done: bool) -> ReplayItem {
    ReplayItem { obs, action, reward, next_obs, done }
}

fn small_agent(gamma: f64) -> DqnAgent {
    let cfg = DqnConfig { gamma, hidden: vec![4], batch_size: 1, normalize_obs: false, ..DqnConfig::default() };
    DqnAgent::new(2, DiscreteActionTable::indices(3), cfg, 1).unwrap()
}

/// Makes the final bias of `agent`'s target network emit `values` for any input.
fn constant_target(agent: &mut DqnAgent, values: &[f64]) {
    let n = agent.target_net.n_layers();
    agent.target_net.params_mut().iter_mut().for_each(|p| *p = 0.0);
    let r = agent.target_net.bias_range(n - 1);
    agent.target_net.params_mut()[r].copy_from_slice(values);
}

#[test]
fn target_examples() {
    let mut agent = small_agent(0.99);
    constant_target(&mut agent, &[3.0, 10.0, -2.0]);
    let terminal = item(vec![0.0, 1.0], 0, 5.0, vec![1.0, 0.0], true);
    let step = item(vec![0.0, 1.0], 0, 1.0, vec![1.0, 0.0], false);
    let y = agent.compute_targets(&[&terminal, &step]);
    assert_eq!(y[0], 5.0);
    assert!((y[1] - 10.9).abs() < 1e-12);

    agent.config.gamma = 0.0;
    assert_eq!(agent.compute_targets(&[&step]), vec![1.0]);
}

#[test]
fn loss_examples() {
    let mut agent = small_agent(0.9);
    agent.q_net.params_mut().iter_mut().for_each(|p| *p = 0.0);
    let t = item(vec![0.3, 0.1], 2, 2.0, vec![0.0, 0.0], true);
    let (loss, _) = agent.loss_and_gradient(&[&t], &[2.0]);
    assert_eq!(loss, 4.0);

    // Bellman fixed point: targets equal the current predictions
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let agent = DqnAgent::new(2, DiscreteActionTable::indices(3), DqnConfig { hidden: vec![5], ..DqnConfig::default() }, 4)
        .unwrap();
    let batch: Vec<ReplayItem> = (0..6)
        .map(|i| {
            let obs = vec![rand::Rng::random_range(&mut rng, -1.0..1.0), i as f64];
            item(obs, i % 3, 0.0, vec![0.0, 0.0], true)
        })
        .collect();
    let refs: Vec<&ReplayItem> = batch.iter().collect();
    let y: Vec<f64> = batch.iter().map(|t| agent.q_values(&t.obs)[t.action]).collect();
    let (loss, grads) = agent.loss_and_gradient(&refs, &y);
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn targets_are_stale_between_syncs() {
    let cfg = DqnConfig { hidden: vec![8], batch_size: 2, target_sync: 5, normalize_obs: false, learning_rate: 1e-2, ..DqnConfig::default() };
    let mut agent = DqnAgent::new(2, DiscreteActionTable::indices(2), cfg, 0).unwrap();
    let batch = [item(vec![1.0, 0.0], 0, 1.0, vec![0.0, 1.0], false), item(vec![0.0, 1.0], 1, 0.0, vec![1.0, 1.0], false)];
    let refs: Vec<&ReplayItem> = batch.iter().collect();
    let before = agent.compute_targets(&refs);
    for _ in 0..4 {
        agent.update_on_batch(&refs);
        assert_eq!(agent.compute_targets(&refs), before);
    }
    let q_before_sync = agent.q_net.clone();
    agent.update_on_batch(&refs);
    assert_ne!(agent.q_net, q_before_sync);
    assert_eq!(agent.target_net, agent.q_net);
}

#[test]
fn action_table_enumeration() {
    let mix = DiscreteActionTable::for_task(TaskMode::Mixed);
    assert_eq!(mix.len(), 25);
    let mut k = 0;
    for i in 0..5 {
        for j in 0..5 {
            assert_eq!(mix.get(k), &[40.0 * i as f64, 6.0 * j as f64]);
            k += 1;
        }
    }
    assert_eq!(DiscreteActionTable::for_task(TaskMode::Fertilization).actions(), &[[0.0], [40.0], [80.0], [120.0], [160.0]]);
    assert_eq!(DiscreteActionTable::for_task(TaskMode::Irrigation).actions(), &[[0.0], [6.0], [12.0], [18.0], [24.0]]);
    let cfg = SimConfig::default();
    for mode in TaskMode::ALL {
        let space = mode.action_space(&cfg);
        assert!(DiscreteActionTable::for_task(mode).actions().iter().all(|a| space.contains(a)));
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DqnConfig { episodes: 5, ..DqnConfig::desk(TaskMode::Fertilization) };
    let mut env = CropEnv::new(TaskMode::Fertilization, SimConfig::default()).unwrap();
    let run = train_dqn(&mut env, DiscreteActionTable::for_task(TaskMode::Fertilization), cfg, 1).unwrap();
    run.agent.save(dir.path(), Some(TaskMode::Fertilization)).unwrap();
    let (policy, meta) = DqnPolicy::load(dir.path()).unwrap();
    assert_eq!(meta.task, Some(TaskMode::Fertilization));
    let live = run.agent.policy("DQN");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let obs = env.reset(3);
    assert_eq!(policy.q_values(&obs), live.q_values(&obs));
    assert_eq!(policy.act(&obs, &mut rng), live.act(&obs, &mut rng));
}

use cropmgmt::Environment;

#[test]
fn fertilization_learning_progress() {
    let cfg = DqnConfig { episodes: 200, ..DqnConfig::desk(TaskMode::Fertilization) };
    let mut env = CropEnv::new(TaskMode::Fertilization, SimConfig::default()).unwrap();
    let run = train_dqn(&mut env, DiscreteActionTable::for_task(TaskMode::Fertilization), cfg, 21).unwrap();
    let mean = |rows: &[cropmgmt::dqn::DqnCurveRow]| rows.iter().map(|r| r.cumulative_reward).sum::<f64>() / rows.len() as f64;
    let first = mean(&run.curve[..50]);
    let last = mean(&run.curve[150..]);
    assert!(last > first, "first 50: {first}, last 50: {last}");
}
