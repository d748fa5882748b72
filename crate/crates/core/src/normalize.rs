//! Running observation statistics (Welford) used to standardize network inputs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// Standardized values are clipped to `[-clip, clip]`.
    pub clip: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim], clip: 10.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "observation dimension mismatch");
        self.count += 1.0;
        for ((&xi, mean), m2) in x.iter().zip(&mut self.mean).zip(&mut self.m2) {
            let d = xi - *mean;
            *mean += d / self.count;
            *m2 += d * (xi - *mean);
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            return 1.0;
        }
        (self.m2[i] / self.count).sqrt().max(1e-6)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "observation dimension mismatch");
        x.iter()
            .enumerate()
            .map(|(i, &v)| ((v - self.mean[i]) / self.std(i)).clamp(-self.clip, self.clip))
            .collect()
    }
}
