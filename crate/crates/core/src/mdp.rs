//! Episodic MDP abstractions shared by the simulator, the toy MDPs and the
//! agents.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Flat observation vector. Field order is fixed per environment.
pub type Observation = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode terminated; call reset first")]
    StepAfterDone,
    #[error("action has {got} components, environment expects {expected}")]
    ActionDimension { expected: usize, got: usize },
}

/// Result of advancing the environment by one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// Diagnostics. Ordered so serialized dumps are stable.
    pub info: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

/// A full episode. `cumulative_reward` is maintained as transitions are pushed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    transitions: Vec<Transition>,
    cumulative_reward: f64,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a transition.
    ///
    /// Panics if the trajectory already ended or if the observation
    /// dimensions disagree; both indicate a bug in the caller's loop.
    pub fn push(&mut self, t: Transition) {
        assert!(
            !self.is_done(),
            "cannot extend a trajectory past its terminal transition"
        );
        assert_eq!(t.obs.len(), t.next_obs.len(), "observation dimension changed");
        self.cumulative_reward += t.reward;
        self.transitions.push(t);
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.cumulative_reward
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_done(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.done)
    }
}

/// Action space of an environment.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Box { low: Vec<f64>, high: Vec<f64> },
    Discrete { actions: Vec<Vec<f64>> },
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Box { low, .. } => low.len(),
            ActionSpace::Discrete { actions } => actions.first().map_or(0, Vec::len),
        }
    }

    /// Clamps each component into the box. Returns the clamped action and
    /// whether any component moved.
    pub fn clamp(&self, action: &[f64]) -> (Vec<f64>, bool) {
        match self {
            ActionSpace::Box { low, high } => {
                let mut moved = false;
                let out = action
                    .iter()
                    .zip(low.iter().zip(high))
                    .map(|(&a, (&lo, &hi))| {
                        // NaN maps to the lower bound.
                        let c = if a.is_nan() { lo } else { a.clamp(lo, hi) };
                        moved |= c != a;
                        c
                    })
                    .collect();
                (out, moved)
            }
            ActionSpace::Discrete { .. } => (action.to_vec(), false),
        }
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        match self {
            ActionSpace::Box { low, high } => {
                action.len() == low.len()
                    && action
                        .iter()
                        .zip(low.iter().zip(high))
                        .all(|(&a, (&lo, &hi))| lo <= a && a <= hi)
            }
            ActionSpace::Discrete { actions } => actions.iter().any(|a| a == action),
        }
    }
}

/// Episodic environment with a seeded reset.
pub trait Environment {
    /// Starts a fresh episode. Identical seeds give identical episodes under
    /// identical action sequences.
    fn reset(&mut self, seed: u64) -> Observation;

    /// Advances one step. Out-of-range actions are clamped.
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;

    fn observation_dim(&self) -> usize;

    /// Continuous bounds of the action vector.
    fn action_space(&self) -> ActionSpace;

    /// Number of `reset` calls so far.
    fn episode_count(&self) -> u64;
}

/// A read-only decision rule. Stochastic policies draw from `rng`.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// `sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// One logged step of an episode dump.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub episode_id: u64,
    pub day: u64,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: BTreeMap<String, f64>,
}

/// Runs one episode to termination (or `max_steps`) and returns the
/// trajectory together with the per-step log.
pub fn rollout<E, F>(
    env: &mut E,
    seed: u64,
    max_steps: usize,
    mut act: F,
) -> Result<(Trajectory, Vec<StepRecord>), EnvError>
where
    E: Environment + ?Sized,
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut obs = env.reset(seed);
    let episode_id = env.episode_count();
    let mut traj = Trajectory::new();
    let mut log = Vec::new();
    for day in 0..max_steps {
        let action = act(&obs);
        let step = env.step(&action)?;
        log.push(StepRecord {
            episode_id,
            day: day as u64,
            action: action.clone(),
            reward: step.reward,
            done: step.done,
            info: step.info,
        });
        traj.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: step.reward,
            next_obs: step.observation.clone(),
            done: step.done,
        });
        obs = step.observation;
        if step.done {
            break;
        }
    }
    Ok((traj, log))
}

/// Writes step records as CSV: `episode_id,day,action_0..,reward,done,<info
/// keys>`. Info columns are the sorted union of keys over all records;
/// missing values are left empty.
pub fn write_steps_csv<W: Write>(out: W, records: &[StepRecord]) -> csv::Result<()> {
    let action_dim = records.iter().map(|r| r.action.len()).max().unwrap_or(0);
    let keys: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.info.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["episode_id".to_string(), "day".to_string()];
    header.extend((0..action_dim).map(|i| format!("action_{i}")));
    header.push("reward".into());
    header.push("done".into());
    header.extend(keys.iter().map(|k| k.to_string()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.episode_id.to_string(), r.day.to_string()];
        for i in 0..action_dim {
            row.push(r.action.get(i).map(|a| a.to_string()).unwrap_or_default());
        }
        row.push(r.reward.to_string());
        row.push(u8::from(r.done).to_string());
        for k in &keys {
            row.push(r.info.get(*k).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 1.0), 3.0);
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5), 1.75);
        assert_eq!(discounted_return(&[], 0.3), 0.0);
    }

    #[test]
    fn trajectory_tracks_cumulative_reward() {
        let mut t = Trajectory::new();
        for (i, r) in [0.5, -2.0, 3.25].into_iter().enumerate() {
            t.push(Transition {
                obs: vec![i as f64],
                action: vec![0.0],
                reward: r,
                next_obs: vec![i as f64 + 1.0],
                done: i == 2,
            });
        }
        assert_eq!(t.cumulative_reward(), 0.5 - 2.0 + 3.25);
        assert_eq!(discounted_return(&t.rewards(), 1.0), t.cumulative_reward());
        assert!(t.is_done());
    }

    #[test]
    #[should_panic]
    fn trajectory_rejects_push_after_done() {
        let mut t = Trajectory::new();
        let tr = Transition {
            obs: vec![0.0],
            action: vec![],
            reward: 0.0,
            next_obs: vec![0.0],
            done: true,
        };
        t.push(tr.clone());
        t.push(tr);
    }

    #[test]
    fn box_clamp_flags_changes() {
        let space = ActionSpace::Box {
            low: vec![0.0, 0.0],
            high: vec![200.0, 50.0],
        };
        assert_eq!(space.clamp(&[250.0, 10.0]), (vec![200.0, 10.0], true));
        assert_eq!(space.clamp(&[20.0, 10.0]), (vec![20.0, 10.0], false));
        assert_eq!(space.clamp(&[-1.0, f64::NAN]).0, vec![0.0, 0.0]);
        assert!(space.contains(&[0.0, 50.0]));
        assert!(!space.contains(&[0.0, 50.1]));
    }

    #[test]
    fn steps_csv_has_header_and_union_of_info_columns() {
        let mut a = BTreeMap::new();
        a.insert("rain".to_string(), 1.5);
        let mut b = BTreeMap::new();
        b.insert("et".to_string(), 0.25);
        let recs = vec![
            StepRecord { episode_id: 1, day: 0, action: vec![0.0], reward: 1.0, done: false, info: a },
            StepRecord { episode_id: 1, day: 1, action: vec![40.0], reward: -2.0, done: true, info: b },
        ];
        let mut buf = Vec::new();
        write_steps_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("episode_id,day,action_0,reward,done,et,rain"));
        assert_eq!(lines.next(), Some("1,0,0,1,0,,1.5"));
        assert_eq!(lines.next(), Some("1,1,40,-2,1,0.25,"));
    }
}
