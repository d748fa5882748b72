use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rewards::MixedRewardWeights;

/// Every constant of the surrogate crop model.
///
/// Persisted as a flat `key = value` text file, one parameter per line,
/// `#` starting a comment. Lists are comma separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    // soil
    /// Soil water holding capacity, mm.
    pub soil_capacity: f64,
    pub initial_water: f64,
    /// Initial soil nitrate, kg N/ha.
    pub initial_nitrate: f64,
    pub initial_soil_temp: f64,
    /// Daily relaxation rate of soil temperature toward air temperature.
    pub soil_temp_smoothing: f64,
    /// mm evapotranspired per MJ/m² of radiation at full cover.
    pub et_coeff: f64,
    /// Fraction of the water above capacity that drains below the root zone.
    pub drainage_fraction: f64,
    /// Crop-cover factor of bare soil (before planting).
    pub bare_soil_cover: f64,
    /// Crop-cover factor of a closed canopy.
    pub max_cover: f64,
    /// Biomass at which the canopy closes, kg/ha.
    pub full_cover_biomass: f64,

    // plant
    /// Radiation-use efficiency, g biomass per MJ.
    pub rue: f64,
    /// Maximum daily nitrogen demand, kg N/ha/day.
    pub max_n_demand: f64,
    pub gdd_base: f64,
    pub gdd_reproductive: f64,
    pub gdd_maturity: f64,
    pub growth_factor_vegetative: f64,
    pub growth_factor_reproductive: f64,
    pub n_demand_factor_vegetative: f64,
    pub n_demand_factor_reproductive: f64,
    pub harvest_index: f64,
    pub planting_soil_temp: f64,
    pub planting_consecutive_days: u32,
    pub failure_stress_threshold: f64,
    pub failure_days: u32,
    /// Harvest is forced this many days after planting.
    pub max_season_days: u32,
    /// Hard cap on episode length, days.
    pub max_episode_days: u32,

    // management
    pub max_nitrogen: f64,
    pub max_water: f64,
    pub auto_fert_days: Vec<u32>,
    pub auto_fert_amounts: Vec<f64>,
    pub reward_weights: MixedRewardWeights,

    // weather
    pub wet_day_prob: f64,
    pub mean_wet_rain: f64,
    pub temp_mean: f64,
    pub temp_amplitude: f64,
    pub temp_noise: f64,
    pub srad_mean: f64,
    pub srad_amplitude: f64,
    pub srad_noise: f64,
    /// Day of year on which episodes start.
    pub start_doy: u32,
    /// Day of year of the seasonal minimum of temperature and radiation.
    pub coldest_doy: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            soil_capacity: 150.0,
            initial_water: 90.0,
            initial_nitrate: 25.0,
            initial_soil_temp: 10.0,
            soil_temp_smoothing: 0.2,
            et_coeff: 0.45,
            drainage_fraction: 0.3,
            bare_soil_cover: 0.2,
            max_cover: 0.6,
            full_cover_biomass: 5000.0,
            rue: 1.6,
            max_n_demand: 4.0,
            gdd_base: 8.0,
            gdd_reproductive: 800.0,
            gdd_maturity: 1600.0,
            growth_factor_vegetative: 1.0,
            growth_factor_reproductive: 1.0,
            n_demand_factor_vegetative: 1.0,
            n_demand_factor_reproductive: 0.0,
            harvest_index: 0.5,
            planting_soil_temp: 12.0,
            planting_consecutive_days: 5,
            failure_stress_threshold: 0.05,
            failure_days: 10,
            max_season_days: 160,
            max_episode_days: 365,
            max_nitrogen: 200.0,
            max_water: 50.0,
            auto_fert_days: vec![40, 45, 80],
            auto_fert_amounts: vec![30.0, 30.0, 30.0],
            reward_weights: MixedRewardWeights::default(),
            wet_day_prob: 0.3,
            mean_wet_rain: 9.0,
            temp_mean: 22.0,
            temp_amplitude: 6.0,
            temp_noise: 2.0,
            srad_mean: 18.0,
            srad_amplitude: 6.0,
            srad_noise: 2.0,
            start_doy: 30,
            coldest_doy: 45,
        }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_f64(key: &str, v: &str) -> Result<f64, SimError> {
    v.parse::<f64>().map_err(|_| SimError::ConfigValue { key: key.into(), value: v.into() })
}

fn parse_u32(key: &str, v: &str) -> Result<u32, SimError> {
    v.parse::<u32>().map_err(|_| SimError::ConfigValue { key: key.into(), value: v.into() })
}

fn parse_list<T, F>(key: &str, v: &str, f: F) -> Result<Vec<T>, SimError>
where
    F: Fn(&str, &str) -> Result<T, SimError>,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| f(key, x.trim())).collect()
}

macro_rules! kv_fields {
    ($($key:ident : $kind:ident),* $(,)?) => {
        impl SimConfig {
            /// Serializes to the `key = value` format.
            pub fn to_kv_string(&self) -> String {
                let mut s = String::from("# surrogate crop model configuration\n");
                $( kv_fields!(@write s, self, $key, $kind); )*
                let w = &self.reward_weights;
                for (k, v) in [("w1", w.w1), ("w2", w.w2), ("w3", w.w3), ("w4", w.w4)] {
                    let _ = writeln!(s, "{k} = {v}");
                }
                s
            }

            fn set_kv(&mut self, key: &str, value: &str) -> Result<(), SimError> {
                match key {
                    $( stringify!($key) => { kv_fields!(@read self, $key, $kind, value); } )*
                    "w1" => self.reward_weights.w1 = parse_f64(key, value)?,
                    "w2" => self.reward_weights.w2 = parse_f64(key, value)?,
                    "w3" => self.reward_weights.w3 = parse_f64(key, value)?,
                    "w4" => self.reward_weights.w4 = parse_f64(key, value)?,
                    _ => return Err(SimError::ConfigKey(key.to_string())),
                }
                Ok(())
            }
        }
    };
    (@write $s:ident, $self:ident, $key:ident, f64) => {
        let _ = writeln!($s, "{} = {}", stringify!($key), $self.$key);
    };
    (@write $s:ident, $self:ident, $key:ident, u32) => {
        let _ = writeln!($s, "{} = {}", stringify!($key), $self.$key);
    };
    (@write $s:ident, $self:ident, $key:ident, list_u32) => {
        let _ = writeln!($s, "{} = {}", stringify!($key), join(&$self.$key));
    };
    (@write $s:ident, $self:ident, $key:ident, list_f64) => {
        let _ = writeln!($s, "{} = {}", stringify!($key), join(&$self.$key));
    };
    (@read $self:ident, $key:ident, f64, $v:ident) => {
        $self.$key = parse_f64(stringify!($key), $v)?
    };
    (@read $self:ident, $key:ident, u32, $v:ident) => {
        $self.$key = parse_u32(stringify!($key), $v)?
    };
    (@read $self:ident, $key:ident, list_u32, $v:ident) => {
        $self.$key = parse_list(stringify!($key), $v, parse_u32)?
    };
    (@read $self:ident, $key:ident, list_f64, $v:ident) => {
        $self.$key = parse_list(stringify!($key), $v, parse_f64)?
    };
}

kv_fields! {
    soil_capacity: f64,
    initial_water: f64,
    initial_nitrate: f64,
    initial_soil_temp: f64,
    soil_temp_smoothing: f64,
    et_coeff: f64,
    drainage_fraction: f64,
    bare_soil_cover: f64,
    max_cover: f64,
    full_cover_biomass: f64,
    rue: f64,
    max_n_demand: f64,
    gdd_base: f64,
    gdd_reproductive: f64,
    gdd_maturity: f64,
    growth_factor_vegetative: f64,
    growth_factor_reproductive: f64,
    n_demand_factor_vegetative: f64,
    n_demand_factor_reproductive: f64,
    harvest_index: f64,
    planting_soil_temp: f64,
    planting_consecutive_days: u32,
    failure_stress_threshold: f64,
    failure_days: u32,
    max_season_days: u32,
    max_episode_days: u32,
    max_nitrogen: f64,
    max_water: f64,
    auto_fert_days: list_u32,
    auto_fert_amounts: list_f64,
    wet_day_prob: f64,
    mean_wet_rain: f64,
    temp_mean: f64,
    temp_amplitude: f64,
    temp_noise: f64,
    srad_mean: f64,
    srad_amplitude: f64,
    srad_noise: f64,
    start_doy: u32,
    coldest_doy: u32,
}

impl SimConfig {
    /// Applies `key = value` lines on top of `self`. Unknown keys are errors.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<(), SimError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SimError::ConfigSyntax { line: lineno + 1, text: raw.to_string() })?;
            self.set_kv(k.trim(), v.trim())?;
        }
        self.validate()
    }

    /// Parses a full configuration, starting from the defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, SimError> {
        let mut cfg = Self::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_kv_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_kv_string())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("soil_capacity", self.soil_capacity),
            ("rue", self.rue),
            ("max_n_demand", self.max_n_demand),
            ("gdd_maturity", self.gdd_maturity),
            ("gdd_reproductive", self.gdd_reproductive),
            ("et_coeff", self.et_coeff),
            ("drainage_fraction", self.drainage_fraction),
            ("soil_temp_smoothing", self.soil_temp_smoothing),
            ("full_cover_biomass", self.full_cover_biomass),
            ("mean_wet_rain", self.mean_wet_rain),
            ("max_nitrogen", self.max_nitrogen),
            ("max_water", self.max_water),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        let unit = [
            ("wet_day_prob", self.wet_day_prob),
            ("drainage_fraction", self.drainage_fraction),
            ("soil_temp_smoothing", self.soil_temp_smoothing),
            ("bare_soil_cover", self.bare_soil_cover),
            ("max_cover", self.max_cover),
            ("harvest_index", self.harvest_index),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let non_negative = [
            ("initial_nitrate", self.initial_nitrate),
            ("temp_noise", self.temp_noise),
            ("srad_noise", self.srad_noise),
            ("growth_factor_vegetative", self.growth_factor_vegetative),
            ("growth_factor_reproductive", self.growth_factor_reproductive),
            ("n_demand_factor_vegetative", self.n_demand_factor_vegetative),
            ("n_demand_factor_reproductive", self.n_demand_factor_reproductive),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=self.soil_capacity).contains(&self.initial_water) {
            return Err(SimError::Invalid("initial_water must lie in [0, soil_capacity]".into()));
        }
        if self.gdd_reproductive > self.gdd_maturity {
            return Err(SimError::Invalid("gdd_reproductive exceeds gdd_maturity".into()));
        }
        if self.auto_fert_days.len() != self.auto_fert_amounts.len() {
            return Err(SimError::Invalid(
                "auto_fert_days and auto_fert_amounts differ in length".into(),
            ));
        }
        if self.auto_fert_amounts.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(SimError::Invalid("auto_fert_amounts must be >= 0".into()));
        }
        if self.failure_days == 0 || self.planting_consecutive_days == 0 {
            return Err(SimError::Invalid("day counts must be >= 1".into()));
        }
        if self.max_episode_days == 0 || self.max_episode_days > 365 {
            return Err(SimError::Invalid("max_episode_days must lie in [1, 365]".into()));
        }
        if !self.reward_weights.is_valid() {
            return Err(SimError::Invalid("reward weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = SimConfig::default();
        cfg.rue = 1.75;
        cfg.auto_fert_days = vec![10, 20];
        cfg.auto_fert_amounts = vec![5.5, 6.0];
        cfg.reward_weights.w4 = 0.25;
        let text = cfg.to_kv_string();
        assert_eq!(SimConfig::from_kv_str(&text).unwrap(), cfg);
    }

    #[test]
    fn comments_and_partial_files() {
        let cfg = SimConfig::from_kv_str("# header\nrue = 2.0  # trailing\n\n w1=0.2\n").unwrap();
        assert_eq!(cfg.rue, 2.0);
        assert_eq!(cfg.reward_weights.w1, 0.2);
        assert_eq!(cfg.soil_capacity, 150.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(SimConfig::from_kv_str("bogus = 1"), Err(SimError::ConfigKey(_))));
        assert!(matches!(SimConfig::from_kv_str("rue = abc"), Err(SimError::ConfigValue { .. })));
        assert!(matches!(SimConfig::from_kv_str("rue 1"), Err(SimError::ConfigSyntax { .. })));
        assert!(matches!(SimConfig::from_kv_str("wet_day_prob = 1.5"), Err(SimError::Invalid(_))));
        assert!(matches!(SimConfig::from_kv_str("rue = -1"), Err(SimError::Invalid(_))));
    }
}
