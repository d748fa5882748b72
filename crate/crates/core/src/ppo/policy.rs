use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::mdp::ActionSpace;
use crate::neural::{Activation, ForwardCache, MlpNetwork, NeuralError};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Box bounds in a JSON-safe form (infinite bounds become `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: Vec<Option<f64>>,
    pub high: Vec<Option<f64>>,
}

impl Bounds {
    pub fn from_space(space: &ActionSpace) -> Self {
        let fin = |v: &[f64]| v.iter().map(|&x| x.is_finite().then_some(x)).collect();
        match space {
            ActionSpace::Box { low, high } => Self { low: fin(low), high: fin(high) },
            ActionSpace::Discrete { .. } => {
                let n = space.dim();
                Self { low: vec![None; n], high: vec![None; n] }
            }
        }
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&v, (lo, hi))| {
                let v = lo.map_or(v, |l| v.max(l));
                hi.map_or(v, |h| v.min(h))
            })
            .collect()
    }
}

/// Diagonal Gaussian policy with a state-independent log standard deviation
/// and a scalar value head. With `shared`, one trunk emits the action mean
/// followed by the value.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: MlpNetwork,
    /// `None` when the value head shares `mean_net`.
    pub value_net: Option<MlpNetwork>,
    pub log_std: Vec<f64>,
    /// Environment action = clamp(scale ⊙ raw sample).
    pub action_scale: Vec<f64>,
    pub bounds: Bounds,
}

/// Output of one cached forward pass over both heads.
pub struct PolicyEval {
    pub mean: Vec<f64>,
    pub value: f64,
    mean_cache: ForwardCache,
    value_cache: Option<ForwardCache>,
}

impl GaussianPolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        activation: Activation,
        shared: bool,
        action_space: &ActionSpace,
        action_scale: Vec<f64>,
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let act_dim = action_space.dim();
        if action_scale.len() != act_dim {
            return Err(NeuralError::DimensionMismatch { expected: act_dim, got: action_scale.len() });
        }
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend(hidden);
            s.push(out);
            s
        };
        let (mean_net, value_net) = if shared {
            (MlpNetwork::new(&sizes(act_dim + 1), activation, rng)?, None)
        } else {
            let m = MlpNetwork::new(&sizes(act_dim), activation, rng)?;
            (m, Some(MlpNetwork::new(&sizes(1), activation, rng)?))
        };
        Ok(Self {
            mean_net,
            value_net,
            log_std: vec![init_log_std; act_dim],
            action_scale,
            bounds: Bounds::from_space(action_space),
        })
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn is_shared(&self) -> bool {
        self.value_net.is_none()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn evaluate(&self, obs: &[f64]) -> Result<PolicyEval, NeuralError> {
        let mean_cache = self.mean_net.forward_cached(obs)?;
        let out = mean_cache.output();
        let d = self.act_dim();
        match &self.value_net {
            None => Ok(PolicyEval { mean: out[..d].to_vec(), value: out[d], mean_cache, value_cache: None }),
            Some(v) => {
                let vc = v.forward_cached(obs)?;
                let value = vc.output()[0];
                Ok(PolicyEval { mean: out.to_vec(), value, mean_cache, value_cache: Some(vc) })
            }
        }
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        let mut out = self.mean_net.forward(obs).expect("observation dimension");
        out.truncate(self.act_dim());
        out
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        match &self.value_net {
            Some(v) => v.forward(obs).expect("observation dimension")[0],
            None => self.mean_net.forward(obs).expect("observation dimension")[self.act_dim()],
        }
    }

    pub fn log_prob(&self, mean: &[f64], raw: &[f64]) -> f64 {
        mean.iter()
            .zip(raw)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * LN_2PI
            })
            .sum()
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
    }

    /// Maps a raw policy-space action to the environment's units and bounds.
    pub fn to_env_action(&self, raw: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = raw.iter().zip(&self.action_scale).map(|(a, s)| a * s).collect();
        self.bounds.clamp(&scaled)
    }

    /// Returns `(env action, raw action, log-prob of raw)`. Deterministic mode
    /// uses the mean.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        deterministic: bool,
        rng: &mut R,
    ) -> (Vec<f64>, Vec<f64>, f64) {
        let mean = self.mean(obs);
        let raw: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(&self.log_std)
                .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let lp = self.log_prob(&mean, &raw);
        (self.to_env_action(&raw), raw, lp)
    }

    pub fn n_params(&self) -> usize {
        self.mean_net.n_params() + self.value_net.as_ref().map_or(0, MlpNetwork::n_params) + self.log_std.len()
    }

    /// Concatenation `[mean_net, value_net, log_std]`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(self.mean_net.params());
        if let Some(v) = &self.value_net {
            p.extend_from_slice(v.params());
        }
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter length mismatch");
        let (m, rest) = p.split_at(self.mean_net.n_params());
        self.mean_net.params_mut().copy_from_slice(m);
        let rest = match &mut self.value_net {
            Some(v) => {
                let (vp, rest) = rest.split_at(v.n_params());
                v.params_mut().copy_from_slice(vp);
                rest
            }
            None => rest,
        };
        self.log_std.copy_from_slice(rest);
    }

    /// Accumulates into the flat gradient `grads` given dL/d mean, dL/d value
    /// and dL/d log_std for one evaluated sample.
    pub(crate) fn accumulate(
        &self,
        eval: &PolicyEval,
        d_mean: &[f64],
        d_value: f64,
        d_log_std: &[f64],
        grads: &mut [f64],
    ) {
        let nm = self.mean_net.n_params();
        let (gm, rest) = grads.split_at_mut(nm);
        match (&self.value_net, &eval.value_cache) {
            (Some(v), Some(vc)) => {
                let (gv, gl) = rest.split_at_mut(v.n_params());
                self.mean_net.backward_cached(&eval.mean_cache, d_mean, gm).expect("dimension");
                v.backward_cached(vc, &[d_value], gv).expect("dimension");
                gl.iter_mut().zip(d_log_std).for_each(|(g, d)| *g += d);
            }
            _ => {
                let mut out = d_mean.to_vec();
                out.push(d_value);
                self.mean_net.backward_cached(&eval.mean_cache, &out, gm).expect("dimension");
                rest.iter_mut().zip(d_log_std).for_each(|(g, d)| *g += d);
            }
        }
    }
}
