//! Small dense networks with hand-written backpropagation, plus SGD and
//! RMSProp.
//!
//! Parameters of a network live in one flat vector, layer by layer: the
//! row-major `outputs x inputs` weight matrix followed by the bias. Gradient
//! bundles use the same layout, so optimizers work on plain slices.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softmax,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    offset: usize,
}

impl LayerShape {
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    fn len(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Layer activations from one forward pass: entry 0 is the input, entry
/// `l + 1` the output of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input")
    }
}

/// Parameter gradients laid out like [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    values: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|g| *g == 0.0)
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        assert_eq!(self.values.len(), other.values.len(), "gradient shapes differ");
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|g| *g *= factor);
    }
}

impl Mlp {
    /// Builds a network with scaled-uniform weights, `±sqrt(6 / (fan_in +
    /// fan_out))`, and zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, layers: &[(usize, Activation)], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(input_dim, layers)?;
        for shape in &net.layers {
            let limit = (6.0 / (shape.inputs + shape.outputs) as f64).sqrt();
            for w in &mut net.params[shape.weight_range()] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(input_dim: usize, layers: &[(usize, Activation)]) -> Result<Self> {
        if input_dim == 0 || layers.is_empty() {
            return Err(Error::InvalidConfig("a network needs inputs and at least one layer".into()));
        }
        if let Some(k) = layers[..layers.len() - 1]
            .iter()
            .position(|(_, a)| *a == Activation::Softmax)
        {
            return Err(Error::InvalidConfig(format!("softmax on hidden layer {k}")));
        }
        if layers.iter().any(|(width, _)| *width == 0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let (mut inputs, mut offset) = (input_dim, 0);
        for &(outputs, activation) in layers {
            let shape = LayerShape {
                inputs,
                outputs,
                activation,
                offset,
            };
            offset += shape.len();
            inputs = outputs;
            shapes.push(shape);
        }
        Ok(Self {
            input_dim,
            layers: shapes,
            params: vec![0.0; offset],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        self.layers[layer].activation
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Row-major weight matrix of `layer`.
    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].weight_range()]
    }

    pub fn layer_weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let range = self.layers[layer].weight_range();
        &mut self.params[range]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].bias_range()]
    }

    pub fn layer_bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let range = self.layers[layer].bias_range();
        &mut self.params[range]
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for shape in &self.layers {
            let x = activations.last().expect("non-empty");
            let weights = &self.params[shape.weight_range()];
            let mut z = self.params[shape.bias_range()].to_vec();
            for (row, zo) in weights.chunks_exact(shape.inputs).zip(z.iter_mut()) {
                *zo += dot(row, x);
            }
            activate(shape.activation, &mut z);
            activations.push(z);
        }
        let output = activations.last().expect("non-empty").clone();
        Ok((output, ForwardCache { activations }))
    }

    /// Output only.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Gradients of `<output_grad, output>` with respect to every parameter
    /// and to the input.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(GradientBundle, Vec<f64>)> {
        self.check_cache(cache)?;
        let last = self.layers.last().expect("non-empty");
        if output_grad.len() != last.outputs {
            return Err(Error::DimensionMismatch {
                expected: last.outputs,
                got: output_grad.len(),
            });
        }
        let delta = activation_backward(last.activation, cache.output(), output_grad);
        Ok(self.backprop(cache, delta))
    }

    /// Like [`Mlp::backward`] but starting from the gradient with respect to
    /// the final layer's pre-activation (the logits, for a softmax head).
    pub fn backward_logits(&self, cache: &ForwardCache, logit_grad: &[f64]) -> Result<(GradientBundle, Vec<f64>)> {
        self.check_cache(cache)?;
        if logit_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: logit_grad.len(),
            });
        }
        Ok(self.backprop(cache, logit_grad.to_vec()))
    }

    /// Applies one optimizer step: `p <- p - lr * g` for SGD.
    pub fn step(&mut self, grads: &GradientBundle, opt: &mut OptimizerState) {
        opt.step(&mut self.params, grads.as_slice());
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let ok = cache.activations.len() == self.layers.len() + 1
            && cache.activations[0].len() == self.input_dim
            && self
                .layers
                .iter()
                .zip(&cache.activations[1..])
                .all(|(s, a)| s.outputs == a.len());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("forward cache does not match this network".into()))
        }
    }

    fn backprop(&self, cache: &ForwardCache, mut delta: Vec<f64>) -> (GradientBundle, Vec<f64>) {
        let mut grads = GradientBundle::zeros(self.params.len());
        for (l, shape) in self.layers.iter().enumerate().rev() {
            let x = &cache.activations[l];
            let w_range = shape.weight_range();
            for (o, d) in delta.iter().enumerate() {
                let row = &mut grads.values[w_range.start + o * shape.inputs..][..shape.inputs];
                row.iter_mut().zip(x).for_each(|(g, xi)| *g += d * xi);
            }
            grads.values[shape.bias_range()].copy_from_slice(&delta);

            let weights = &self.params[w_range];
            let mut input_grad = vec![0.0; shape.inputs];
            for (row, d) in weights.chunks_exact(shape.inputs).zip(&delta) {
                input_grad.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
            delta = if l == 0 {
                input_grad
            } else {
                activation_backward(self.layers[l - 1].activation, x, &input_grad)
            };
        }
        (grads, delta)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Gradient of `log p[action]` with respect to the logits of a softmax.
pub fn log_prob_logit_grad(probs: &[f64], action: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(k, p)| if k == action { 1.0 - p } else { -p })
        .collect()
}

/// Entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Gradient of the entropy with respect to the logits of a softmax:
/// `-p_k (ln p_k + H)`.
pub fn entropy_logit_grad(probs: &[f64]) -> Vec<f64> {
    let h = entropy(probs);
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
        .collect()
}

fn activate(activation: Activation, z: &mut [f64]) {
    match activation {
        Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::Softmax => softmax_in_place(z),
        Activation::Identity => {}
    }
}

/// Pulls an output gradient back through an activation, given its output.
fn activation_backward(activation: Activation, y: &[f64], grad: &[f64]) -> Vec<f64> {
    match activation {
        Activation::Tanh => y.iter().zip(grad).map(|(y, g)| g * (1.0 - y * y)).collect(),
        Activation::Sigmoid => y.iter().zip(grad).map(|(y, g)| g * y * (1.0 - y)).collect(),
        Activation::Identity => grad.to_vec(),
        Activation::Softmax => {
            let inner = dot(y, grad);
            y.iter().zip(grad).map(|(y, g)| y * (g - inner)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp { decay: f64, epsilon: f64 },
}

/// Optimizer settings plus per-parameter state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    mean_square: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn rmsprop(learning_rate: f64, decay: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) || epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!("rmsprop decay {decay}, epsilon {epsilon}")));
        }
        Self::new(OptimizerKind::RmsProp { decay, epsilon }, learning_rate)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        // Zero is allowed: it freezes the parameters.
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {learning_rate}")));
        }
        Ok(Self {
            kind,
            learning_rate,
            mean_square: Vec::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// RMSProp mean-square accumulators (empty until the first step).
    pub fn mean_square(&self) -> &[f64] {
        &self.mean_square
    }

    /// Descends along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                params.iter_mut().zip(grads).for_each(|(p, g)| *p -= lr * g);
            }
            OptimizerKind::RmsProp { decay, epsilon } => {
                if self.mean_square.is_empty() {
                    self.mean_square = vec![0.0; params.len()];
                }
                assert_eq!(self.mean_square.len(), params.len(), "optimizer reused on another parameter vector");
                for ((p, g), a) in params.iter_mut().zip(grads).zip(&mut self.mean_square) {
                    *a = decay * *a + (1.0 - decay) * g * g;
                    *p -= lr * g / (*a + epsilon).sqrt();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use Activation::*;

    #[test]
    fn zero_network_outputs() {
        let x = [0.3, -1.2, 0.7];
        let tanh = Mlp::zeros(3, &[(4, Tanh), (2, Tanh)]).unwrap();
        assert_eq!(tanh.predict(&x).unwrap(), vec![0.0, 0.0]);
        let sig = Mlp::zeros(3, &[(4, Tanh), (1, Sigmoid)]).unwrap();
        assert_eq!(sig.predict(&x).unwrap(), vec![0.5]);
        let soft = Mlp::zeros(3, &[(4, Tanh), (4, Softmax)]).unwrap();
        assert_eq!(soft.predict(&x).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::zeros(3, &[(4, Softmax), (2, Tanh)]).is_err());
        assert!(Mlp::zeros(0, &[(2, Tanh)]).is_err());
        assert!(Mlp::zeros(3, &[]).is_err());
        let net = Mlp::zeros(3, &[(2, Tanh)]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        let (_, cache) = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(net.backward(&cache, &[1.0]).is_err());
        let other = Mlp::zeros(2, &[(2, Tanh)]).unwrap();
        assert!(other.backward(&cache, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_bundle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(3, &[(5, Tanh), (3, Softmax)], &mut rng).unwrap();
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let (g, dx) = net.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_input_gradient_is_transpose_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(3, &[(2, Identity)], &mut rng).unwrap();
        let (_, cache) = net.forward(&[0.5, -0.5, 2.0]).unwrap();
        let g = [0.7, -1.1];
        let (_, dx) = net.backward(&cache, &g).unwrap();
        let w = net.layer_weights(0);
        for i in 0..3 {
            let expected = w[i] * g[0] + w[3 + i] * g[1];
            assert!((dx[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(4, &[(6, Tanh), (5, Softmax)], &mut rng).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y = net.predict(&x).unwrap();
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(y.iter().all(|p| *p > 0.0));
        }
        let extreme = softmax(&[1000.0, 0.0, -1000.0]);
        assert!(extreme.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn log_prob_and_entropy_grads_match_finite_differences() {
        let logits = [0.3, -1.0, 0.8, 0.1];
        let h = 1e-6;
        for a in 0..4 {
            let g = log_prob_logit_grad(&softmax(&logits), a);
            for k in 0..4 {
                let (mut up, mut down) = (logits, logits);
                up[k] += h;
                down[k] -= h;
                let fd = (softmax(&up)[a].ln() - softmax(&down)[a].ln()) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-8);
            }
        }
        let g = entropy_logit_grad(&softmax(&logits));
        for k in 0..4 {
            let (mut up, mut down) = (logits, logits);
            up[k] += h;
            down[k] -= h;
            let fd = (entropy(&softmax(&up)) - entropy(&softmax(&down))) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
        assert!(entropy_logit_grad(&[0.25; 4]).iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn sgd_step() {
        let mut opt = OptimizerState::sgd(0.1).unwrap();
        let mut p = [1.0];
        opt.step(&mut p, &[0.5]);
        assert!((p[0] - 0.95).abs() < 1e-15);
        opt.step(&mut p, &[0.0]);
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_step() {
        let mut opt = OptimizerState::rmsprop(0.01, 0.9, 1e-8).unwrap();
        let mut p = [1.0];
        opt.step(&mut p, &[1.0]);
        assert!((opt.mean_square()[0] - 0.1).abs() < 1e-15);
        assert!((p[0] - (1.0 - 0.01 / (0.1f64 + 1e-8).sqrt())).abs() < 1e-15);
        let before = p[0];
        opt.step(&mut p, &[0.0]);
        assert_eq!(p[0], before);
        assert!((opt.mean_square()[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn optimizer_rejects_bad_settings() {
        assert!(OptimizerState::sgd(-0.1).is_err());
        assert!(OptimizerState::sgd(f64::NAN).is_err());
        assert!(OptimizerState::rmsprop(0.1, 1.0, 1e-8).is_err());
        assert!(OptimizerState::rmsprop(0.1, 0.9, 0.0).is_err());
    }

    #[test]
    fn same_seed_same_network() {
        let a = Mlp::new(5, &[(10, Tanh), (3, Softmax)], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = Mlp::new(5, &[(10, Tanh), (3, Softmax)], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
