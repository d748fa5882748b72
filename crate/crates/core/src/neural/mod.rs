//! Fully connected networks with exact backpropagation.
//!
//! Parameters live in one flat `Vec<f64>`; layer `l` stores its weights
//! row-major (`out x in`) followed by its biases. Gradients share that
//! layout, which lets optimizers and checkpoints treat a network as a plain
//! parameter vector.

mod checkpoint;
mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{read_network, write_network, NetworkMeta, CHECKPOINT_MAGIC};
pub use optim::{Optimizer, OptimizerKind};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Multilayer perceptron: hidden layers share one activation, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Intermediate values of one forward pass, consumed by [`MlpNetwork::backward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input vector of layer `l`; the last entry is the
    /// network output.
    layer_io: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.layer_io.last().expect("non-empty")
    }
}

fn layout(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut total = 0;
    for w in sizes.windows(2) {
        offsets.push(total);
        total += w[0] * w[1] + w[1];
    }
    (offsets, total)
}

impl MlpNetwork {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self, NeuralError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NeuralError::Architecture(format!(
                "need at least input and output layers of nonzero width, got {sizes:?}"
            )));
        }
        let (offsets, total) = layout(sizes);
        Ok(Self { sizes: sizes.to_vec(), activation, params: vec![0.0; total], offsets })
    }

    /// He-uniform weights for ReLU layers, Xavier-uniform for tanh layers and
    /// the linear output layer; zero biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(sizes, activation)?;
        let n_layers = net.n_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let hidden = l + 1 < n_layers;
            let limit = if hidden && activation == Activation::Relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let off = net.offsets[l];
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Range of the bias block of layer `l` within the parameter vector.
    pub fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.offsets[l] + self.sizes[l] * self.sizes[l + 1];
        start..start + self.sizes[l + 1]
    }

    pub fn copy_params_from(&mut self, other: &MlpNetwork) {
        assert_eq!(self.sizes, other.sizes, "architecture mismatch");
        self.params.copy_from_slice(&other.params);
    }

    fn affine(&self, l: usize, x: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        out.clear();
        for (row, bias) in w.chunks_exact(n_in).zip(b) {
            let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            out.push(dot + bias);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NeuralError> {
        if x.len() != self.input_dim() {
            return Err(NeuralError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.n_layers() {
            self.affine(l, &cur, &mut next);
            if l + 1 < self.n_layers() {
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache, NeuralError> {
        self.check_input(x)?;
        let mut layer_io = Vec::with_capacity(self.sizes.len());
        let mut pre = Vec::with_capacity(self.n_layers().saturating_sub(1));
        layer_io.push(x.to_vec());
        for l in 0..self.n_layers() {
            let mut z = Vec::with_capacity(self.sizes[l + 1]);
            self.affine(l, &layer_io[l], &mut z);
            if l + 1 < self.n_layers() {
                let y = z.iter().map(|&v| self.activation.apply(v)).collect();
                pre.push(z);
                layer_io.push(y);
            } else {
                layer_io.push(z);
            }
        }
        Ok(ForwardCache { layer_io, pre })
    }

    /// Backpropagates `out_grad` (dL/d output) through a cached pass, adding
    /// dL/dθ into `grads` and returning dL/d input.
    pub fn backward_cached(
        &self,
        cache: &ForwardCache,
        out_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NeuralError> {
        if out_grad.len() != self.output_dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.output_dim(),
                got: out_grad.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let mut delta = out_grad.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let input = &cache.layer_io[l];
            {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, &wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            if l > 0 {
                let z = &cache.pre[l - 1];
                let y = &cache.layer_io[l];
                for ((p, &zv), &yv) in prev.iter_mut().zip(z).zip(y) {
                    *p *= self.activation.derivative(zv, yv);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Parameter gradient of the scalar loss whose output gradient at `x` is
    /// `out_grad`.
    pub fn backward(&self, x: &[f64], out_grad: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let cache = self.forward_cached(x)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward_cached(&cache, out_grad, &mut grads)?;
        Ok(grads)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub(crate) fn from_parts(
        sizes: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(&sizes, activation)?;
        if params.len() != net.params.len() {
            return Err(NeuralError::DimensionMismatch { expected: net.params.len(), got: params.len() });
        }
        net.params = params;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNetwork::zeros(&[3, 5, 2], Activation::Relu).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn relu_clamps() {
        // 1 -> 1 hidden (relu, w=1) -> 1 linear (w=1)
        let mut net = MlpNetwork::zeros(&[1, 1, 1], Activation::Relu).unwrap();
        net.params_mut()[0] = 1.0;
        net.params_mut()[2] = 1.0;
        assert_eq!(net.forward(&[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn forward_is_deterministic_and_checks_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpNetwork::new(&[4, 8, 8, 3], Activation::Tanh, &mut rng).unwrap();
        let x = [0.1, -0.4, 2.0, 0.0];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert_eq!(net.forward_cached(&x).unwrap().output(), &net.forward(&x).unwrap()[..]);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(NeuralError::DimensionMismatch { expected: 4, got: 1 })
        ));
        assert!(net.backward(&x, &[1.0]).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpNetwork::new(&[3, 6, 2], Activation::Relu, &mut rng).unwrap();
        let g = net.backward(&[0.5, 1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_bias_gradient_of_sum_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpNetwork::new(&[3, 6, 6, 4], Activation::Tanh, &mut rng).unwrap();
        let g = net.backward(&[0.3, -0.2, 0.9], &[1.0; 4]).unwrap();
        for i in net.bias_range(net.n_layers() - 1) {
            assert_eq!(g[i], 1.0);
        }
    }

    #[test]
    fn init_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpNetwork::new(&[100, 50, 10], Activation::Relu, &mut rng).unwrap();
        let limit = (6.0f64 / 100.0).sqrt();
        assert!(net.params()[..5000].iter().all(|w| w.abs() <= limit));
        assert!(net.params()[net.bias_range(0)].iter().all(|&b| b == 0.0));
        assert!(MlpNetwork::zeros(&[3], Activation::Relu).is_err());
    }
}
