use serde::{Deserialize, Serialize};

use super::{SimConfig, WeatherDay};

/// Root-zone soil bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilState {
    /// mm, within `[0, capacity]`.
    pub water: f64,
    /// kg N/ha.
    pub nitrate: f64,
    /// °C, running mean of air temperature.
    pub temp: f64,
}

impl SoilState {
    pub fn initial(cfg: &SimConfig) -> Self {
        Self { water: cfg.initial_water, nitrate: cfg.initial_nitrate, temp: cfg.initial_soil_temp }
    }
}

/// Water moved during one day, mm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WaterFluxes {
    pub inflow: f64,
    pub et: f64,
    pub drainage: f64,
    /// Excess above capacity left after drainage and ET (saturation overflow).
    pub runoff: f64,
}

/// Water-stress factor in `[0, 1]`: 1 at or above half capacity.
pub fn water_stress(water: f64, cfg: &SimConfig) -> f64 {
    (water / (0.5 * cfg.soil_capacity)).clamp(0.0, 1.0)
}

/// One day of the water bucket. `irrigation` is in L/m², i.e. mm of depth.
///
/// Drainage is `drainage_fraction` of whatever the inflow pushes above
/// capacity. Evapotranspiration is `et_coeff * srad * cover`, scaled by the
/// water-stress factor of the drained bucket and limited to the water
/// present. Whatever still exceeds capacity leaves as runoff, so
/// `water' = water + inflow - et - drainage - runoff` holds exactly.
pub fn step_soil_water(
    soil: &SoilState,
    weather: &WeatherDay,
    irrigation: f64,
    cover: f64,
    cfg: &SimConfig,
) -> (SoilState, WaterFluxes) {
    let inflow = weather.rainfall + irrigation.max(0.0);
    let wet = soil.water + inflow;
    let drainage = cfg.drainage_fraction * (wet - cfg.soil_capacity).max(0.0);
    let available = wet - drainage;
    let demand = cfg.et_coeff * weather.srad * cover * water_stress(available, cfg);
    let et = demand.min(available).max(0.0);
    let after = available - et;
    let runoff = (after - cfg.soil_capacity).max(0.0);
    let water = (after - runoff).clamp(0.0, cfg.soil_capacity);
    let temp = soil.temp + cfg.soil_temp_smoothing * (weather.t_mean - soil.temp);
    (
        SoilState { water, temp, ..*soil },
        WaterFluxes { inflow, et, drainage, runoff },
    )
}

/// Nitrogen moved during one day, kg N/ha.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NitrogenFluxes {
    pub fertilizer: f64,
    pub uptake: f64,
    pub leached: f64,
}

/// One day of the nitrate pool.
///
/// `demand` is the plant's request for the day (already scaled by stage and
/// water stress). Uptake takes what it can from nitrate plus fertilizer; the
/// remainder leaches in proportion `drainage / max(water, 1)`, capped at 1.
pub fn step_nitrogen(
    soil: &SoilState,
    demand: f64,
    fertilizer: f64,
    drainage: f64,
) -> (SoilState, NitrogenFluxes) {
    let fertilizer = fertilizer.max(0.0);
    let pool = soil.nitrate + fertilizer;
    let uptake = demand.max(0.0).min(pool);
    let remaining = pool - uptake;
    let leach_frac = (drainage / soil.water.max(1.0)).clamp(0.0, 1.0);
    let leached = remaining * leach_frac;
    let nitrate = (remaining - leached).max(0.0);
    (SoilState { nitrate, ..*soil }, NitrogenFluxes { fertilizer, uptake, leached })
}
