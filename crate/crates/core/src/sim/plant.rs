use serde::{Deserialize, Serialize};

use super::{soil::water_stress, SimConfig, SimError, SoilState, WeatherDay};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    PrePlant,
    Vegetative,
    Reproductive,
    Mature,
    Failed,
}

impl Stage {
    /// Numeric code used in observations.
    pub fn index(self) -> f64 {
        match self {
            Stage::PrePlant => 0.0,
            Stage::Vegetative => 1.0,
            Stage::Reproductive => 2.0,
            Stage::Mature => 3.0,
            Stage::Failed => 4.0,
        }
    }

    pub fn is_growing(self) -> bool {
        matches!(self, Stage::Vegetative | Stage::Reproductive)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Mature | Stage::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Above-ground biomass, kg/ha.
    pub biomass: f64,
    /// Cumulative nitrogen uptake, kg N/ha.
    pub n_uptake_cum: f64,
    /// Growing degree days since planting.
    pub gdd: f64,
    pub stage: Stage,
    /// Consecutive days with severe water stress.
    pub stress_days: u32,
}

impl Default for PlantState {
    fn default() -> Self {
        Self { biomass: 0.0, n_uptake_cum: 0.0, gdd: 0.0, stage: Stage::PrePlant, stress_days: 0 }
    }
}

impl PlantState {
    fn stage_growth_factor(&self, cfg: &SimConfig) -> f64 {
        match self.stage {
            Stage::Vegetative => cfg.growth_factor_vegetative,
            Stage::Reproductive => cfg.growth_factor_reproductive,
            _ => 0.0,
        }
    }

    fn stage_n_factor(&self, cfg: &SimConfig) -> f64 {
        match self.stage {
            Stage::Vegetative => cfg.n_demand_factor_vegetative,
            Stage::Reproductive => cfg.n_demand_factor_reproductive,
            _ => 0.0,
        }
    }

    /// Today's nitrogen request, kg N/ha: maximum demand scaled by stage and
    /// by the water-stress factor of `soil`. Zero outside the growing stages.
    pub fn n_demand(&self, soil: &SoilState, cfg: &SimConfig) -> f64 {
        cfg.max_n_demand * self.stage_n_factor(cfg) * water_stress(soil.water, cfg)
    }

    /// Fraction of ground shaded by the canopy, used as the ET cover factor.
    pub fn cover(&self, cfg: &SimConfig) -> f64 {
        let canopy = (self.biomass / cfg.full_cover_biomass).min(1.0);
        cfg.bare_soil_cover + (cfg.max_cover - cfg.bare_soil_cover).max(0.0) * canopy
    }
}

/// One day of growth and phenology.
///
/// Biomass gain is `rue * srad * 10 * min(water stress, N stress) * stage
/// factor`, where N stress is `min(1, uptake / demand)` (1 when nothing was
/// demanded). Stage advances on degree-day thresholds; ten consecutive days
/// under the failure threshold of water stress kill the crop.
pub fn step_growth(
    plant: &PlantState,
    weather: &WeatherDay,
    soil: &SoilState,
    uptake: f64,
    demand: f64,
    cfg: &SimConfig,
) -> Result<PlantState, SimError> {
    if !plant.stage.is_growing() {
        return Err(SimError::InvalidStage(plant.stage));
    }
    let ws = water_stress(soil.water, cfg);
    let ns = if demand > 0.0 { (uptake / demand).min(1.0) } else { 1.0 };
    let gain = cfg.rue * weather.srad * 10.0 * ws.min(ns) * plant.stage_growth_factor(cfg);

    let mut next = *plant;
    next.biomass += gain.max(0.0);
    next.n_uptake_cum += uptake.max(0.0);
    next.gdd += (weather.t_mean - cfg.gdd_base).max(0.0);
    next.stress_days = if ws < cfg.failure_stress_threshold { plant.stress_days + 1 } else { 0 };

    if next.stress_days >= cfg.failure_days {
        next.stage = Stage::Failed;
    } else if next.gdd >= cfg.gdd_maturity {
        next.stage = Stage::Mature;
    } else if next.gdd >= cfg.gdd_reproductive {
        next.stage = Stage::Reproductive;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn growing() -> PlantState {
        PlantState { stage: Stage::Vegetative, ..PlantState::default() }
    }

    fn wet_soil(cfg: &SimConfig) -> SoilState {
        SoilState { water: cfg.soil_capacity, ..SoilState::initial(cfg) }
    }

    #[test]
    fn no_radiation_no_growth() {
        let cfg = SimConfig::default();
        let w = WeatherDay { rainfall: 0.0, t_mean: 20.0, srad: 0.0 };
        let p = step_growth(&growing(), &w, &wet_soil(&cfg), 4.0, 4.0, &cfg).unwrap();
        assert_eq!(p.biomass, 0.0);
    }

    #[test]
    fn unstressed_gain() {
        let cfg = SimConfig::default();
        let w = WeatherDay { rainfall: 0.0, t_mean: 20.0, srad: 20.0 };
        let p = step_growth(&growing(), &w, &wet_soil(&cfg), 4.0, 4.0, &cfg).unwrap();
        assert!((p.biomass - 320.0).abs() < 1e-9);
        assert_eq!(p.gdd, 12.0);
    }

    #[test]
    fn maturity_threshold() {
        let cfg = SimConfig::default();
        let plant = PlantState { gdd: 1595.0, stage: Stage::Reproductive, ..PlantState::default() };
        let w = WeatherDay { rainfall: 0.0, t_mean: 20.0, srad: 10.0 };
        let p = step_growth(&plant, &w, &wet_soil(&cfg), 0.0, 0.0, &cfg).unwrap();
        assert_eq!(p.stage, Stage::Mature);
        assert!(matches!(
            step_growth(&p, &w, &wet_soil(&cfg), 0.0, 0.0, &cfg),
            Err(SimError::InvalidStage(Stage::Mature))
        ));
    }

    #[test]
    fn rejects_pre_plant() {
        let cfg = SimConfig::default();
        let w = WeatherDay { rainfall: 0.0, t_mean: 20.0, srad: 10.0 };
        let r = step_growth(&PlantState::default(), &w, &wet_soil(&cfg), 0.0, 0.0, &cfg);
        assert!(matches!(r, Err(SimError::InvalidStage(Stage::PrePlant))));
    }

    #[test]
    fn drought_fails_crop() {
        let cfg = SimConfig::default();
        let dry = SoilState { water: 0.0, ..SoilState::initial(&cfg) };
        let w = WeatherDay { rainfall: 0.0, t_mean: 20.0, srad: 10.0 };
        let mut p = growing();
        for day in 0..cfg.failure_days {
            assert_eq!(p.stage, Stage::Vegetative, "day {day}");
            p = step_growth(&p, &w, &dry, 0.0, 0.0, &cfg).unwrap();
        }
        assert_eq!(p.stage, Stage::Failed);
    }

    #[test]
    fn nitrogen_shortage_limits_growth() {
        let cfg = SimConfig::default();
        let w = WeatherDay { rainfall: 0.0, t_mean: 20.0, srad: 20.0 };
        let p = step_growth(&growing(), &w, &wet_soil(&cfg), 1.0, 4.0, &cfg).unwrap();
        assert!((p.biomass - 80.0).abs() < 1e-9);
    }
}
