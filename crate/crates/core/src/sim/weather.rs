use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::rng::pair_seed;

/// Weather of one simulated day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    /// mm/day
    pub rainfall: f64,
    /// °C
    pub t_mean: f64,
    /// MJ/m²/day
    pub srad: f64,
}

/// Weather for `day` (days since episode start) of the episode seeded `seed`.
///
/// A pure function of its arguments: each day draws from its own generator,
/// so days can be produced in any order.
pub fn generate_weather(seed: u64, day: u32, cfg: &SimConfig) -> WeatherDay {
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, u64::from(day)));
    let wet = rng.random::<f64>() < cfg.wet_day_prob;
    let amount: f64 = rng.sample(Exp::new(1.0 / cfg.mean_wet_rain).expect("positive rate"));
    let rainfall = if wet { amount } else { 0.0 };

    let doy = f64::from(cfg.start_doy + day) - f64::from(cfg.coldest_doy);
    let season = (2.0 * PI * doy / 365.0).cos();
    let t_noise: f64 = rng.sample(StandardNormal);
    let s_noise: f64 = rng.sample(StandardNormal);
    let t_mean = cfg.temp_mean - cfg.temp_amplitude * season + cfg.temp_noise * t_noise;
    let srad = (cfg.srad_mean - cfg.srad_amplitude * season + cfg.srad_noise * s_noise).max(0.0);
    WeatherDay { rainfall, t_mean, srad }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed_and_day() {
        let cfg = SimConfig::default();
        assert_eq!(generate_weather(7, 3, &cfg), generate_weather(7, 3, &cfg));
        assert_ne!(generate_weather(7, 3, &cfg), generate_weather(8, 3, &cfg));
    }

    #[test]
    fn wet_fraction_matches_probability() {
        let cfg = SimConfig::default();
        let n = 10_000;
        let wet = (0..n)
            .filter(|&i| generate_weather(i as u64, (i % 365) as u32, &cfg).rainfall > 0.0)
            .count();
        let frac = wet as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.02, "wet fraction {frac}");
    }

    #[test]
    fn srad_and_rain_non_negative() {
        let mut cfg = SimConfig::default();
        cfg.srad_noise = 10.0;
        for i in 0..10_000u32 {
            let w = generate_weather(u64::from(i) * 31, i % 365, &cfg);
            assert!(w.srad >= 0.0 && w.rainfall >= 0.0);
            assert!(w.t_mean.is_finite());
        }
    }
}
