//! Surrogate maize simulator.
//!
//! A single-field, single-season model with one simulated day per step:
//! a water bucket, a nitrate pool, radiation-use-efficiency growth driven by
//! degree-day phenology, and seeded stochastic weather. Planting is triggered
//! by soil temperature alone. The observation vectors are a reconstruction
//! of the fields a grower would see, not a copy of any other simulator.

mod config;
mod env;
mod plant;
mod soil;
mod weather;

use thiserror::Error;

pub use config::SimConfig;
pub use env::{observe, CropEnv, SimState, TaskMode, Totals};
pub use plant::{step_growth, PlantState, Stage};
pub use soil::{
    step_nitrogen, step_soil_water, water_stress, NitrogenFluxes, SoilState, WaterFluxes,
};
pub use weather::{generate_weather, WeatherDay};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("growth step called in stage {0:?}")]
    InvalidStage(Stage),
    #[error("unknown config key `{0}`")]
    ConfigKey(String),
    #[error("bad value `{value}` for config key `{key}`")]
    ConfigValue { key: String, value: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    ConfigSyntax { line: usize, text: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown task `{0}` (expected fert, irr or mix)")]
    UnknownTask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
