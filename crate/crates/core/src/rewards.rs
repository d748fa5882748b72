//! Reward functions of the three management tasks. All are pure functions of
//! one day's deltas.

use serde::{Deserialize, Serialize};

/// Cost per kg/ha of applied nitrogen in the fertilization reward.
pub const FERTILIZATION_N_COST: f64 = 0.5;
/// Cost per L/m² of applied water in the irrigation reward.
pub const IRRIGATION_WATER_COST: f64 = 15.0;

/// Weights of the mixed-task reward: yield, nitrogen, water, nitrate leakage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedRewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl Default for MixedRewardWeights {
    fn default() -> Self {
        Self { w1: 0.158, w2: 0.79, w3: 1.1, w4: 0.0 }
    }
}

impl MixedRewardWeights {
    pub fn is_valid(&self) -> bool {
        [self.w1, self.w2, self.w3, self.w4]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }
}

/// Quantities observed over one simulated day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDeltas {
    /// Plant nitrogen uptake over the day, kg N/ha.
    pub trnu: f64,
    /// Change in above-ground biomass, kg/ha.
    pub d_topwt: f64,
    /// Nitrogen applied by the agent, kg/ha.
    pub n_applied: f64,
    /// Water applied by the agent, L/m².
    pub w_applied: f64,
    /// Nitrate leached below the root zone, kg N/ha.
    pub n_leached: f64,
    /// Grain yield, kg/ha. Only meaningful when `is_harvest`.
    pub grain_yield: f64,
    pub is_harvest: bool,
}

pub fn reward_fertilization(d: &StepDeltas) -> f64 {
    d.trnu - FERTILIZATION_N_COST * d.n_applied
}

pub fn reward_irrigation(d: &StepDeltas) -> f64 {
    d.d_topwt - IRRIGATION_WATER_COST * d.w_applied
}

pub fn reward_mixed(d: &StepDeltas, w: &MixedRewardWeights) -> f64 {
    let yield_term = if d.is_harvest { w.w1 * d.grain_yield } else { 0.0 };
    yield_term - w.w2 * d.n_applied - w.w3 * d.w_applied - w.w4 * d.n_leached
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deltas() -> StepDeltas {
        StepDeltas::default()
    }

    #[test]
    fn fertilization_examples() {
        assert_eq!(reward_fertilization(&deltas()), 0.0);
        let d = StepDeltas { trnu: 3.0, n_applied: 4.0, ..deltas() };
        assert_eq!(reward_fertilization(&d), 1.0);
        let d = StepDeltas { n_applied: 200.0, ..deltas() };
        assert_eq!(reward_fertilization(&d), -100.0);
    }

    #[test]
    fn irrigation_examples() {
        let d = StepDeltas { d_topwt: 100.0, ..deltas() };
        assert_eq!(reward_irrigation(&d), 100.0);
        let d = StepDeltas { d_topwt: 150.0, w_applied: 6.0, ..deltas() };
        assert_eq!(reward_irrigation(&d), 60.0);
        let d = StepDeltas { w_applied: 50.0, ..deltas() };
        assert_eq!(reward_irrigation(&d), -750.0);
    }

    #[test]
    fn mixed_examples() {
        let w = MixedRewardWeights::default();
        let d = StepDeltas { n_applied: 40.0, w_applied: 6.0, ..deltas() };
        assert!((reward_mixed(&d, &w) - (-38.2)).abs() < 1e-12);
        let d = StepDeltas { grain_yield: 8000.0, is_harvest: true, ..deltas() };
        assert!((reward_mixed(&d, &w) - 1264.0).abs() < 1e-12);
        assert_eq!(reward_mixed(&deltas(), &w), 0.0);
    }

    #[test]
    fn yield_ignored_outside_harvest() {
        let w = MixedRewardWeights::default();
        let d = StepDeltas { grain_yield: 8000.0, ..deltas() };
        assert_eq!(reward_mixed(&d, &w), 0.0);
    }

    #[test]
    fn doubling_w2_doubles_nitrogen_penalty() {
        let w = MixedRewardWeights { w1: 0.0, w2: 0.79, w3: 0.0, w4: 0.0 };
        let w2x = MixedRewardWeights { w2: 1.58, ..w };
        let d = StepDeltas { n_applied: 37.0, ..deltas() };
        assert_eq!(reward_mixed(&d, &w2x), 2.0 * reward_mixed(&d, &w));
    }
}
