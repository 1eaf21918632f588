//! Fully connected policy network with a softmax head.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at the pre-activation `z`; ReLU-type kinks take the left slope.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }

    /// `f(a z) = a f(z)` for every `a > 0`.
    pub fn is_positively_homogeneous(self) -> bool {
        !matches!(self, Activation::Tanh)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// One affine layer followed by its activation. Weights are row-major
/// `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    #[inline]
    pub fn w(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.inputs..(row + 1) * self.inputs]
    }

    /// `z = W x + b`
    fn affine(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, &b)| b + dot(row, x)),
        );
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A layer stack `θ = (W¹, b¹, …, Wᴸ, bᴸ)`. The same type carries gradients
/// and optimizer accumulators, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

/// Intermediate values kept from a forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the observation.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pub pre: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl MlpParams {
    /// He-scaled normal weights and zero biases. Hidden layers use `hidden`,
    /// the last layer is linear (its softmax is applied by [`MlpParams::forward`]).
    pub fn init(sizes: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!(
                "layer size chain must have at least two positive entries, got {sizes:?}"
            )));
        }
        let mut rng = seed::rng(seed, Stream::Init, &[]);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let act = if i == last { Activation::Identity } else { hidden };
                let std = (2.0 / fan_in as f64).sqrt();
                let mut layer = DenseLayer::zeros(fan_in, fan_out, act);
                for v in &mut layer.weights {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = z * std;
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    /// Same shapes and activations, every entry zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs, l.activation))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape("parameter stacks have different layer shapes".into()))
        }
    }

    /// Checks that consecutive layers chain and buffers match their sizes.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Shape(format!("layer {i} buffers do not match its size")));
            }
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    w[0].outputs,
                    i + 1,
                    w[1].inputs
                )));
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable access to the `index`-th entry in [`MlpParams::iter`] order.
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for l in &mut self.layers {
            let (nw, nb) = (l.weights.len(), l.bias.len());
            if index < nw {
                return Some(&mut l.weights[index]);
            }
            if index < nw + nb {
                return Some(&mut l.bias[index - nw]);
            }
            index -= nw + nb;
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += *b;
        }
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Output-layer values before the softmax.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine(&cur, &mut z);
            cur.clear();
            cur.extend(z.iter().map(|&v| layer.activation.apply(v)));
        }
        Ok(cur)
    }

    /// Action probabilities: softmax of the logits.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> Result<()> {
        self.check_input(x)?;
        let n = self.layers.len();
        cache.inputs.resize_with(n, Vec::new);
        cache.pre.resize_with(n, Vec::new);
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(x);
        for i in 0..n {
            let layer = &self.layers[i];
            let (head, tail) = cache.inputs.split_at_mut(i + 1);
            layer.affine(&head[i], &mut cache.pre[i]);
            let out = if i + 1 < n {
                &mut tail[0]
            } else {
                &mut cache.probs
            };
            out.clear();
            out.extend(cache.pre[i].iter().map(|&v| layer.activation.apply(v)));
        }
        softmax_in_place(&mut cache.probs);
        Ok(())
    }

    /// Adds `scale * ∇θ log π(action | x)` into `grad`, reusing a forward cache.
    pub fn accumulate_grad_log_prob(
        &self,
        cache: &ForwardCache,
        action: usize,
        scale: f64,
        grad: &mut MlpParams,
    ) -> Result<()> {
        if action >= self.output_dim() {
            return Err(Error::Action(format!(
                "action {action} outside {} outputs",
                self.output_dim()
            )));
        }
        // d log softmax(a) / d logits = onehot(a) - p
        let mut delta: Vec<f64> = cache.probs.iter().map(|&p| -p).collect();
        delta[action] += 1.0;
        let n = self.layers.len();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if layer.activation != Activation::Identity {
                for (d, &z) in delta.iter_mut().zip(&cache.pre[i]) {
                    *d *= layer.activation.derivative(z);
                }
            }
            let g = &mut grad.layers[i];
            let x = &cache.inputs[i];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let sd = scale * d;
                g.bias[r] += sd;
                axpy(sd, x, &mut g.weights[r * layer.inputs..(r + 1) * layer.inputs]);
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (r, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, layer.row(r), &mut prev);
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Exact gradient of `log π(action | x)` with respect to every parameter.
    pub fn grad_log_prob(&self, x: &[f64], action: usize) -> Result<MlpParams> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        let mut grad = self.zeros_like();
        self.accumulate_grad_log_prob(&cache, action, 1.0, &mut grad)?;
        Ok(grad)
    }

    pub fn greedy_action(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Categorical draw by inverse CDF.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the accumulated mass
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_and_zero_bias() {
        let p = MlpParams::init(&[49, 500, 250, 120, 32], Activation::Relu, 1).unwrap();
        assert_eq!(p.layers.len(), 4);
        let shapes: Vec<_> = p.layers.iter().map(|l| (l.outputs, l.inputs)).collect();
        assert_eq!(shapes, vec![(500, 49), (250, 500), (120, 250), (32, 120)]);
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(p.layers[3].activation, Activation::Identity);
        p.validate().unwrap();
        let q = MlpParams::init(&[49, 500, 250, 120, 32], Activation::Relu, 1).unwrap();
        assert_eq!(p, q);
        assert!(MlpParams::init(&[5], Activation::Relu, 1).is_err());
        assert!(MlpParams::init(&[], Activation::Relu, 1).is_err());
    }

    #[test]
    fn zero_net_is_uniform() {
        let p = MlpParams::init(&[3, 4, 5], Activation::Relu, 0).unwrap().zeros_like();
        let probs = p.forward(&[1.0, -2.0, 0.5]).unwrap();
        for q in probs {
            assert!((q - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn output_bias_shift_invariance() {
        let p = MlpParams::init(&[3, 6, 4], Activation::Relu, 9).unwrap();
        let mut q = p.clone();
        for b in &mut q.layers[1].bias {
            *b += 3.7;
        }
        let x = [0.3, -0.1, 0.8];
        let a = p.forward(&x).unwrap();
        let b = q.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = MlpParams::init(&[3, 4, 2], Activation::Relu, 0).unwrap();
        assert!(p.forward(&[1.0]).is_err());
        assert!(p.grad_log_prob(&[1.0, 2.0], 0).is_err());
        assert!(p.grad_log_prob(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn output_bias_gradient_closed_form() {
        let p = MlpParams::init(&[4, 8, 6, 5], Activation::Relu, 2).unwrap();
        let x = [0.2, -0.4, 1.1, 0.5];
        let probs = p.forward(&x).unwrap();
        let g = p.grad_log_prob(&x, 3).unwrap();
        for (j, &pj) in probs.iter().enumerate() {
            let expected = if j == 3 { 1.0 - pj } else { -pj };
            assert!((g.layers[2].bias[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn one_hot_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs = [0.0, 0.0, 1.0, 0.0];
        for _ in 0..1000 {
            assert_eq!(sample_action(&probs, &mut rng), 2);
        }
    }

    #[test]
    fn sampling_reproducible() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let draw = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..50).map(|_| sample_action(&probs, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let probs = vec![1.0 / 32.0; 32];
        let n = 100_000;
        let mut counts = vec![0usize; 32];
        for _ in 0..n {
            counts[sample_action(&probs, &mut rng)] += 1;
        }
        let p = 1.0 / 32.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{c}");
        }
    }
}
