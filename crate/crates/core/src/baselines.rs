//! Non-learning comparison policies: Null (apply nothing) and Expert (a fixed
//! calendar of applications keyed on days after planting).

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::Policy;
use crate::sim::{SimConfig, TaskMode};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("{kind} event on day {day}: amount {amount} outside [0, {max}]")]
    ScheduleOutOfBounds { kind: &'static str, day: u32, amount: f64, max: f64 },
    #[error("{kind} event days must be strictly increasing (day {day} after {prev})")]
    NotIncreasing { kind: &'static str, day: u32, prev: u32 },
    #[error("unknown event kind `{0}` (expected fert or irr)")]
    UnknownKind(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Calendar of applications. Days count from planting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSchedule {
    /// `(day, kg N/ha)`
    pub fert_events: Vec<(u32, f64)>,
    /// `(day, L/m²)`
    pub irr_events: Vec<(u32, f64)>,
}

impl Default for ExpertSchedule {
    /// Placeholder calendar: 56 kg/ha N at planting and on day 45; 12 L/m²
    /// of water every 7 days from day 30 through day 110.
    fn default() -> Self {
        Self {
            fert_events: vec![(0, 56.0), (45, 56.0)],
            irr_events: (30..=110).step_by(7).map(|d| (d, 12.0)).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    kind: String,
    day: u32,
    amount: f64,
}

impl ExpertSchedule {
    pub fn validate(&self, cfg: &SimConfig) -> Result<(), ScheduleError> {
        let lists = [
            ("fert", &self.fert_events, cfg.max_nitrogen),
            ("irr", &self.irr_events, cfg.max_water),
        ];
        for (kind, events, max) in lists {
            let mut prev: Option<u32> = None;
            for &(day, amount) in events {
                if !(amount.is_finite() && (0.0..=max).contains(&amount)) {
                    return Err(ScheduleError::ScheduleOutOfBounds { kind, day, amount, max });
                }
                if let Some(p) = prev {
                    if day <= p {
                        return Err(ScheduleError::NotIncreasing { kind, day, prev: p });
                    }
                }
                prev = Some(day);
            }
        }
        Ok(())
    }

    pub fn total_nitrogen(&self) -> f64 {
        self.fert_events.iter().map(|e| e.1).sum()
    }

    pub fn total_water(&self) -> f64 {
        self.irr_events.iter().map(|e| e.1).sum()
    }

    fn lookup(events: &[(u32, f64)], day: u32) -> f64 {
        events.iter().find(|e| e.0 == day).map_or(0.0, |e| e.1)
    }

    /// Reads the `kind,day,amount` CSV format. Rows may come in any order.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ScheduleError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Self { fert_events: Vec::new(), irr_events: Vec::new() };
        for row in rdr.deserialize() {
            let row: EventRow = row?;
            match row.kind.as_str() {
                "fert" => out.fert_events.push((row.day, row.amount)),
                "irr" => out.irr_events.push((row.day, row.amount)),
                other => return Err(ScheduleError::UnknownKind(other.to_string())),
            }
        }
        out.fert_events.sort_by_key(|e| e.0);
        out.irr_events.sort_by_key(|e| e.0);
        Ok(out)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), ScheduleError> {
        let mut w = csv::Writer::from_writer(writer);
        for (kind, events) in [("fert", &self.fert_events), ("irr", &self.irr_events)] {
            for &(day, amount) in events.iter() {
                w.serialize(EventRow { kind: kind.to_string(), day, amount })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a schedule file and checks it against the action bounds.
    pub fn load(path: &Path, cfg: &SimConfig) -> Result<Self, ScheduleError> {
        let s = Self::from_csv(std::fs::File::open(path)?)?;
        s.validate(cfg)?;
        Ok(s)
    }
}

/// Applies nothing.
#[derive(Debug, Clone)]
pub struct NullPolicy {
    mode: TaskMode,
}

impl NullPolicy {
    pub fn new(mode: TaskMode) -> Self {
        Self { mode }
    }
}

impl Policy for NullPolicy {
    fn name(&self) -> &str {
        "Null"
    }

    fn act(&self, _obs: &[f64], _rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![0.0; self.mode.action_dim()]
    }
}

/// Applies the scheduled amount on matching days after planting.
#[derive(Debug, Clone)]
pub struct ExpertPolicy {
    mode: TaskMode,
    schedule: ExpertSchedule,
}

impl ExpertPolicy {
    pub fn new(mode: TaskMode, schedule: ExpertSchedule, cfg: &SimConfig) -> Result<Self, ScheduleError> {
        schedule.validate(cfg)?;
        Ok(Self { mode, schedule })
    }

    pub fn schedule(&self) -> &ExpertSchedule {
        &self.schedule
    }

    /// Action for a given days-after-planting value (negative before planting).
    pub fn action_for_day(&self, days_after_planting: f64) -> Vec<f64> {
        let day = if days_after_planting >= 0.0 { Some(days_after_planting.round() as u32) } else { None };
        let n = day.map_or(0.0, |d| ExpertSchedule::lookup(&self.schedule.fert_events, d));
        let w = day.map_or(0.0, |d| ExpertSchedule::lookup(&self.schedule.irr_events, d));
        match self.mode {
            TaskMode::Fertilization => vec![n],
            TaskMode::Irrigation => vec![w],
            TaskMode::Mixed => vec![n, w],
        }
    }
}

impl Policy for ExpertPolicy {
    fn name(&self) -> &str {
        "Expert"
    }

    /// Every observation layout starts with days after planting.
    fn act(&self, obs: &[f64], _rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.action_for_day(obs[0])
    }
}
