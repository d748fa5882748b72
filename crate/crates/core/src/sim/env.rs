use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::plant::{step_growth, PlantState, Stage};
use super::soil::{step_nitrogen, step_soil_water, SoilState};
use super::weather::generate_weather;
use super::{SimConfig, SimError};
use crate::mdp::{ActionSpace, EnvError, Environment, Observation, StepResult};
use crate::rewards::{reward_fertilization, reward_irrigation, reward_mixed, StepDeltas};
use crate::toy::TRUNCATED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskMode {
    Fertilization,
    Irrigation,
    Mixed,
}

impl TaskMode {
    pub const ALL: [TaskMode; 3] = [TaskMode::Fertilization, TaskMode::Irrigation, TaskMode::Mixed];

    /// Short name used on the command line and in files.
    pub fn short(self) -> &'static str {
        match self {
            TaskMode::Fertilization => "fert",
            TaskMode::Irrigation => "irr",
            TaskMode::Mixed => "mix",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskMode::Fertilization => "Fertilization",
            TaskMode::Irrigation => "Irrigation",
            TaskMode::Mixed => "Mixed",
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            TaskMode::Mixed => 2,
            _ => 1,
        }
    }

    pub fn observation_fields(self) -> &'static [&'static str] {
        match self {
            TaskMode::Fertilization => &FERT_FIELDS,
            TaskMode::Irrigation => &IRR_FIELDS,
            TaskMode::Mixed => &MIXED_FIELDS,
        }
    }

    pub fn observation_dim(self) -> usize {
        self.observation_fields().len()
    }

    /// Names of the action components.
    pub fn action_fields(self) -> &'static [&'static str] {
        match self {
            TaskMode::Fertilization => &["nitrogen"],
            TaskMode::Irrigation => &["water"],
            TaskMode::Mixed => &["nitrogen", "water"],
        }
    }

    pub fn action_space(self, cfg: &SimConfig) -> ActionSpace {
        let high = match self {
            TaskMode::Fertilization => vec![cfg.max_nitrogen],
            TaskMode::Irrigation => vec![cfg.max_water],
            TaskMode::Mixed => vec![cfg.max_nitrogen, cfg.max_water],
        };
        ActionSpace::Box { low: vec![0.0; high.len()], high }
    }

    /// `(nitrogen, water)` carried by an action of this mode.
    pub fn split_action(self, action: &[f64]) -> (f64, f64) {
        match self {
            TaskMode::Fertilization => (action[0], 0.0),
            TaskMode::Irrigation => (0.0, action[0]),
            TaskMode::Mixed => (action[0], action[1]),
        }
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for TaskMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fert" | "fertilization" => Ok(TaskMode::Fertilization),
            "irr" | "irrigation" => Ok(TaskMode::Irrigation),
            "mix" | "mixed" | "all" => Ok(TaskMode::Mixed),
            _ => Err(SimError::UnknownTask(s.to_string())),
        }
    }
}

const FERT_FIELDS: [&str; 8] = [
    "days_after_planting",
    "nitrate",
    "trnu",
    "n_uptake_cum",
    "biomass",
    "stage",
    "rain_yesterday",
    "cum_fertilizer",
];

const IRR_FIELDS: [&str; 8] = [
    "days_after_planting",
    "water",
    "biomass",
    "d_biomass",
    "stage",
    "rain_yesterday",
    "et_yesterday",
    "cum_water",
];

const MIXED_FIELDS: [&str; 12] = [
    "days_after_planting",
    "nitrate",
    "trnu",
    "n_uptake_cum",
    "biomass",
    "stage",
    "rain_yesterday",
    "cum_fertilizer",
    "water",
    "d_biomass",
    "et_yesterday",
    "cum_water",
];

/// Accumulated fluxes of the current episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub rain: f64,
    pub irrigation: f64,
    pub et: f64,
    pub drainage: f64,
    pub runoff: f64,
    /// Agent and automatic applications.
    pub fertilizer: f64,
    pub uptake: f64,
    pub leached: f64,
}

/// Full simulator state. The agent only sees [`observe`] of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub seed: u64,
    /// Days since episode start.
    pub day: u32,
    /// Days after planting, `None` before planting.
    pub days_after_planting: Option<u32>,
    pub warm_days: u32,
    pub soil: SoilState,
    pub plant: PlantState,
    pub last_trnu: f64,
    pub last_d_biomass: f64,
    pub last_rain: f64,
    pub last_et: f64,
    /// Agent-applied nitrogen so far, kg/ha.
    pub applied_n: f64,
    /// Agent-applied water so far, L/m².
    pub applied_w: f64,
    pub totals: Totals,
}

impl SimState {
    pub fn initial(seed: u64, cfg: &SimConfig) -> Self {
        Self {
            seed,
            day: 0,
            days_after_planting: None,
            warm_days: 0,
            soil: SoilState::initial(cfg),
            plant: PlantState::default(),
            last_trnu: 0.0,
            last_d_biomass: 0.0,
            last_rain: 0.0,
            last_et: 0.0,
            applied_n: 0.0,
            applied_w: 0.0,
            totals: Totals::default(),
        }
    }

    fn dap_field(&self) -> f64 {
        self.days_after_planting.map_or(-1.0, f64::from)
    }
}

/// The agent-visible slice of `state` for `mode`, in the published order.
pub fn observe(state: &SimState, mode: TaskMode) -> Observation {
    let dap = state.dap_field();
    let s = state;
    match mode {
        TaskMode::Fertilization => vec![
            dap,
            s.soil.nitrate,
            s.last_trnu,
            s.plant.n_uptake_cum,
            s.plant.biomass,
            s.plant.stage.index(),
            s.last_rain,
            s.applied_n,
        ],
        TaskMode::Irrigation => vec![
            dap,
            s.soil.water,
            s.plant.biomass,
            s.last_d_biomass,
            s.plant.stage.index(),
            s.last_rain,
            s.last_et,
            s.applied_w,
        ],
        TaskMode::Mixed => vec![
            dap,
            s.soil.nitrate,
            s.last_trnu,
            s.plant.n_uptake_cum,
            s.plant.biomass,
            s.plant.stage.index(),
            s.last_rain,
            s.applied_n,
            s.soil.water,
            s.last_d_biomass,
            s.last_et,
            s.applied_w,
        ],
    }
}

/// One field, one season, one task.
#[derive(Debug, Clone)]
pub struct CropEnv {
    cfg: SimConfig,
    mode: TaskMode,
    state: SimState,
    done: bool,
    episodes: u64,
}

impl CropEnv {
    pub fn new(mode: TaskMode, cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let state = SimState::initial(0, &cfg);
        Ok(Self { cfg, mode, state, done: true, episodes: 0 })
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn auto_fertilizer(&self) -> f64 {
        if self.mode != TaskMode::Irrigation || !self.state.plant.stage.is_growing() {
            return 0.0;
        }
        let Some(dap) = self.state.days_after_planting else {
            return 0.0;
        };
        self.cfg
            .auto_fert_days
            .iter()
            .zip(&self.cfg.auto_fert_amounts)
            .filter(|(d, _)| **d == dap)
            .map(|(_, a)| *a)
            .sum()
    }
}

impl Environment for CropEnv {
    fn reset(&mut self, seed: u64) -> Observation {
        self.state = SimState::initial(seed, &self.cfg);
        self.done = false;
        self.episodes += 1;
        observe(&self.state, self.mode)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let dim = self.mode.action_dim();
        if action.len() != dim {
            return Err(EnvError::ActionDimension { expected: dim, got: action.len() });
        }
        let cfg = &self.cfg;
        let (clamped, was_clamped) = self.mode.action_space(cfg).clamp(action);
        let (n_agent, w_agent) = self.mode.split_action(&clamped);
        let auto_n = self.auto_fertilizer();
        let fert = n_agent + auto_n;

        let st = &mut self.state;
        let weather = generate_weather(st.seed, st.day, cfg);
        let cover = st.plant.cover(cfg);
        let (soil, water) = step_soil_water(&st.soil, &weather, w_agent, cover, cfg);
        let growing = st.plant.stage.is_growing();
        let demand = if growing { st.plant.n_demand(&soil, cfg) } else { 0.0 };
        let (soil, nitrogen) = step_nitrogen(&soil, demand, fert, water.drainage);

        let prev_biomass = st.plant.biomass;
        let mut harvest = false;
        if growing {
            // Stage checked above, growth cannot fail here.
            let plant = step_growth(&st.plant, &weather, &soil, nitrogen.uptake, demand, cfg)
                .expect("growing stage");
            st.plant = plant;
            let dap = st.days_after_planting.unwrap_or(0) + 1;
            st.days_after_planting = Some(dap);
            if st.plant.stage.is_growing() && dap >= cfg.max_season_days {
                st.plant.stage = Stage::Mature;
            }
            harvest = st.plant.stage == Stage::Mature;
        } else if st.plant.stage == Stage::PrePlant {
            if soil.temp > cfg.planting_soil_temp {
                st.warm_days += 1;
            } else {
                st.warm_days = 0;
            }
            if st.warm_days >= cfg.planting_consecutive_days {
                st.plant.stage = Stage::Vegetative;
                st.days_after_planting = Some(0);
            }
        }
        st.soil = soil;

        let d_biomass = st.plant.biomass - prev_biomass;
        st.last_trnu = nitrogen.uptake;
        st.last_d_biomass = d_biomass;
        st.last_rain = weather.rainfall;
        st.last_et = water.et;
        st.applied_n += n_agent;
        st.applied_w += w_agent;
        let t = &mut st.totals;
        t.rain += weather.rainfall;
        t.irrigation += w_agent;
        t.et += water.et;
        t.drainage += water.drainage;
        t.runoff += water.runoff;
        t.fertilizer += fert;
        t.uptake += nitrogen.uptake;
        t.leached += nitrogen.leached;
        st.day += 1;

        let grain_yield = if harvest { cfg.harvest_index * st.plant.biomass } else { 0.0 };
        let deltas = StepDeltas {
            trnu: nitrogen.uptake,
            d_topwt: d_biomass,
            n_applied: n_agent,
            w_applied: w_agent,
            n_leached: nitrogen.leached,
            grain_yield,
            is_harvest: harvest,
        };
        let r_f = reward_fertilization(&deltas);
        let r_i = reward_irrigation(&deltas);
        let r_m = reward_mixed(&deltas, &cfg.reward_weights);
        let reward = match self.mode {
            TaskMode::Fertilization => r_f,
            TaskMode::Irrigation => r_i,
            TaskMode::Mixed => r_m,
        };

        let terminal = st.plant.stage.is_terminal();
        let truncated = !terminal && st.day >= cfg.max_episode_days;
        self.done = terminal || truncated;

        let mut info = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            info.insert(k.to_string(), v);
        };
        put("day", f64::from(st.day - 1));
        put("days_after_planting", st.dap_field());
        put("rain", weather.rainfall);
        put("t_mean", weather.t_mean);
        put("srad", weather.srad);
        put("water", st.soil.water);
        put("nitrate", st.soil.nitrate);
        put("soil_temp", st.soil.temp);
        put("et", water.et);
        put("drainage", water.drainage);
        put("runoff", water.runoff);
        put("biomass", st.plant.biomass);
        put("d_biomass", d_biomass);
        put("gdd", st.plant.gdd);
        put("stage", st.plant.stage.index());
        put("n_uptake_cum", st.plant.n_uptake_cum);
        put("trnu", nitrogen.uptake);
        put("leached", nitrogen.leached);
        put("n_applied", n_agent);
        put("w_applied", w_agent);
        put("auto_fertilizer", auto_n);
        put("grain_yield", grain_yield);
        put("harvest", f64::from(u8::from(harvest)));
        put("clamped", f64::from(u8::from(was_clamped)));
        put("r_f", r_f);
        put("r_i", r_i);
        put("r_m", r_m);
        if truncated {
            put(TRUNCATED, 1.0);
        }

        Ok(StepResult { observation: observe(st, self.mode), reward, done: self.done, info })
    }

    fn observation_dim(&self) -> usize {
        self.mode.observation_dim()
    }

    fn action_space(&self) -> ActionSpace {
        self.mode.action_space(&self.cfg)
    }

    fn episode_count(&self) -> u64 {
        self.episodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(mode: TaskMode) -> CropEnv {
        CropEnv::new(mode, SimConfig::default()).unwrap()
    }

    fn run(env: &mut CropEnv, seed: u64, action: &[f64]) -> Vec<StepResult> {
        env.reset(seed);
        let mut out = Vec::new();
        for _ in 0..400 {
            let s = env.step(action).unwrap();
            let done = s.done;
            out.push(s);
            if done {
                break;
            }
        }
        out
    }

    #[test]
    fn reset_observation_is_pre_plant() {
        for mode in TaskMode::ALL {
            let mut e = env(mode);
            let obs = e.reset(1);
            assert_eq!(obs.len(), mode.observation_dim());
            assert_eq!(obs[0], -1.0);
            let bi = mode.observation_fields().iter().position(|f| *f == "biomass").unwrap();
            assert_eq!(obs[bi], 0.0);
        }
    }

    #[test]
    fn mixed_fields_are_union() {
        let mut union: Vec<&str> = TaskMode::Fertilization.observation_fields().to_vec();
        for f in TaskMode::Irrigation.observation_fields() {
            if !union.contains(f) {
                union.push(f);
            }
        }
        assert_eq!(union.len(), 12);
        let mixed = TaskMode::Mixed.observation_fields();
        assert_eq!(mixed.len(), 12);
        for f in union {
            assert!(mixed.contains(&f));
        }
        // Values line up field by field as well.
        let mut fe = env(TaskMode::Fertilization);
        let mut ie = env(TaskMode::Irrigation);
        let mut me = env(TaskMode::Mixed);
        fe.reset(3);
        ie.reset(3);
        me.reset(3);
        for _ in 0..30 {
            let f = fe.step(&[0.0]).unwrap().observation;
            let i = ie.step(&[0.0]).unwrap().observation;
            let m = me.step(&[0.0, 0.0]).unwrap().observation;
            for (name, v) in TaskMode::Fertilization.observation_fields().iter().zip(&f) {
                let k = MIXED_FIELDS.iter().position(|x| x == name).unwrap();
                assert_eq!(m[k], *v, "{name}");
            }
            for (name, v) in TaskMode::Irrigation.observation_fields().iter().zip(&i) {
                let k = MIXED_FIELDS.iter().position(|x| x == name).unwrap();
                assert_eq!(m[k], *v, "{name}");
            }
        }
    }

    #[test]
    fn same_seed_same_episode() {
        let mut e = env(TaskMode::Mixed);
        assert_eq!(run(&mut e, 7, &[10.0, 2.0]), run(&mut e, 7, &[10.0, 2.0]));
    }

    #[test]
    fn different_seeds_differ_in_weather() {
        let mut e = env(TaskMode::Fertilization);
        let a: Vec<f64> = run(&mut e, 7, &[0.0]).iter().map(|s| s.info["rain"]).collect();
        let b: Vec<f64> = run(&mut e, 8, &[0.0]).iter().map(|s| s.info["rain"]).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn step_after_done_errors_and_reset_recovers() {
        let mut e = env(TaskMode::Fertilization);
        run(&mut e, 1, &[0.0]);
        assert!(e.is_done());
        assert_eq!(e.step(&[0.0]), Err(EnvError::StepAfterDone));
        let before = e.episode_count();
        let obs = e.reset(2);
        assert_eq!(obs.len(), 8);
        assert_eq!(e.episode_count(), before + 1);
        assert!(e.step(&[0.0]).is_ok());
    }

    #[test]
    fn out_of_range_action_is_clamped() {
        let mut e = env(TaskMode::Fertilization);
        e.reset(1);
        let s = e.step(&[250.0]).unwrap();
        assert_eq!(s.info["clamped"], 1.0);
        assert_eq!(s.info["n_applied"], 200.0);
        let s = e.step(&[20.0]).unwrap();
        assert_eq!(s.info["clamped"], 0.0);
    }

    #[test]
    fn wrong_action_dimension() {
        let mut e = env(TaskMode::Mixed);
        e.reset(1);
        assert_eq!(e.step(&[1.0]), Err(EnvError::ActionDimension { expected: 2, got: 1 }));
    }

    #[test]
    fn zero_fertilizer_reward_is_uptake() {
        let mut e = env(TaskMode::Fertilization);
        for s in run(&mut e, 11, &[0.0]) {
            assert_eq!(s.reward, s.info["trnu"]);
        }
    }

    #[test]
    fn season_ends_within_bound_after_planting() {
        for mode in TaskMode::ALL {
            let mut e = env(mode);
            let action = vec![0.0; mode.action_dim()];
            for seed in 0..20 {
                let steps = run(&mut e, seed, &action);
                let last = steps.last().unwrap();
                assert!(last.done);
                assert!(steps.len() <= 365);
                assert!(last.info["days_after_planting"] <= 160.0);
                assert!(last.info["days_after_planting"] >= 0.0);
            }
        }
    }

    #[test]
    fn mixed_info_carries_component_rewards() {
        let mut e = env(TaskMode::Mixed);
        for s in run(&mut e, 5, &[8.0, 3.0]) {
            assert!(s.info.contains_key("r_f") && s.info.contains_key("r_i"));
            assert_eq!(s.reward, s.info["r_m"]);
        }
    }

    #[test]
    fn irrigation_mode_applies_auto_fertilizer() {
        let mut e = env(TaskMode::Irrigation);
        let steps = run(&mut e, 9, &[0.0]);
        let auto: f64 = steps.iter().map(|s| s.info["auto_fertilizer"]).sum();
        assert_eq!(auto, 90.0);
        let days: Vec<f64> = steps
            .iter()
            .filter(|s| s.info["auto_fertilizer"] > 0.0)
            .map(|s| s.info["days_after_planting"] - 1.0)
            .collect();
        assert_eq!(days, vec![40.0, 45.0, 80.0]);
    }
}
