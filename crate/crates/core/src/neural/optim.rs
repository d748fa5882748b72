use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip applied before the update.
    pub max_grad_norm: Option<f64>,
    pub t: u64,
    #[serde(skip)]
    m: Vec<f64>,
    #[serde(skip)]
    v: Vec<f64>,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    fn new(kind: OptimizerKind, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Self { kind, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: None, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn with_max_grad_norm(mut self, max_norm: Option<f64>) -> Self {
        self.max_grad_norm = max_norm;
        self
    }

    /// Scale applied to `grads` by the norm clip (1 when inactive).
    pub fn clip_scale(&self, grads: &[f64]) -> f64 {
        match self.max_grad_norm {
            Some(max) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }

    /// Applies one update to `params`. The moment buffers are sized on first
    /// use; later calls must pass vectors of the same length.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
        let scale = self.clip_scale(grads);
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * scale * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    assert!(self.m.is_empty(), "optimizer reused with a different parameter count");
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                }
                let t = self.t as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i] * scale;
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_one_step() {
        let mut p = [1.0];
        Optimizer::sgd(0.1).step(&mut p, &[0.5]);
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        for c in [-3.0, 1e-3, 7.5] {
            let mut p = [0.0];
            Optimizer::adam(0.01).step(&mut p, &[c]);
            assert!((p[0].abs() - 0.01).abs() < 1e-6, "c={c} step={}", p[0]);
            assert_eq!(p[0].signum(), -f64::signum(c));
        }
    }

    #[test]
    fn clipping_scales_gradient() {
        let opt = Optimizer::sgd(1.0).with_max_grad_norm(Some(1.0));
        let g = [6.0, 8.0];
        assert!((opt.clip_scale(&g) - 0.1).abs() < 1e-15);
        let mut p = [0.0, 0.0];
        let mut opt = opt;
        opt.step(&mut p, &g);
        assert!((p[0] + 0.6).abs() < 1e-12 && (p[1] + 0.8).abs() < 1e-12);
    }
}
