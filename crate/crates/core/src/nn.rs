//! Dense feed-forward networks with exact analytic gradients.
//!
//! A [`DenseNetwork`] is a stack of affine layers with `tanh` hidden
//! activations. The output layer is either the identity or a `tanh` squashed
//! into a per-coordinate `[low, high]` box. [`DenseNetwork::backward`] returns
//! the gradient of `output_grad · output` with respect to every parameter and
//! every input coordinate; the input part is what the actor update uses to
//! read `∇_a Q` off the critic.
//!
//! Weight matrices are stored row-major with shape `(fan_out × fan_in)`.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_len, Error, Result};

/// Activation applied by the last layer.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputKind {
    Identity,
    /// `mid + half_range * tanh(z)` per coordinate, so the output always lies
    /// in `[low, high]`.
    Bounded { low: Vec<f64>, high: Vec<f64> },
}

impl OutputKind {
    /// Plain `tanh` output in `[-1, 1]`.
    pub fn unit_bounded(dim: usize) -> Self {
        OutputKind::Bounded {
            low: vec![-1.0; dim],
            high: vec![1.0; dim],
        }
    }

    fn validate(&self, output_dim: usize) -> Result<()> {
        if let OutputKind::Bounded { low, high } = self {
            ensure_len("output lower bound", output_dim, low.len())?;
            ensure_len("output upper bound", output_dim, high.len())?;
            if low.iter().zip(high).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                return Err(Error::InvalidArchitecture(
                    "bounded output requires finite low < high".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Weights and biases of one layer (or gradients/moments shaped like them).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ParamBlock {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        ParamBlock {
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.biases.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    fn same_shape(&self, other: &ParamBlock) -> bool {
        self.weights.len() == other.weights.len() && self.biases.len() == other.biases.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    sizes: Vec<usize>,
    layers: Vec<ParamBlock>,
    output: OutputKind,
}

/// Intermediate values of one forward pass, reused by the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[k]` the output of layer `k`.
    activations: Vec<Vec<f64>>,
    /// `tanh(z)` of the output layer when the output is bounded.
    squashed: Option<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least an input and an output size, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidArchitecture(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl DenseNetwork {
    /// Builds a network with weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`. Identical seeds give
    /// bit-identical networks.
    pub fn new(layer_sizes: &[usize], seed: u64, output: OutputKind) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let bound = 1.0 / (layer_sizes[k] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound)
                .map_err(|e| Error::InvalidArchitecture(e.to_string()))?;
            for p in layer.values_mut() {
                *p = dist.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], output: OutputKind) -> Result<Self> {
        check_sizes(layer_sizes)?;
        output.validate(*layer_sizes.last().unwrap())?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| ParamBlock::zeros(w[0], w[1]))
            .collect();
        Ok(DenseNetwork {
            sizes: layer_sizes.to_vec(),
            layers,
            output,
        })
    }

    pub fn from_layers(
        layer_sizes: &[usize],
        layers: Vec<ParamBlock>,
        output: OutputKind,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output)?;
        ensure_len("layer count", net.layers.len(), layers.len())?;
        for (k, (dst, src)) in net.layers.iter_mut().zip(layers).enumerate() {
            if !dst.same_shape(&src) {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {k} expects {}x{} weights and {} biases",
                    layer_sizes[k + 1],
                    layer_sizes[k],
                    layer_sizes[k + 1]
                )));
            }
            if !src.values().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {k}")));
            }
            *dst = src;
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_kind(&self) -> &OutputKind {
        &self.output
    }

    pub fn layers(&self) -> &[ParamBlock] {
        &self.layers
    }

    /// Direct parameter access. Callers are responsible for keeping the
    /// parameters finite.
    pub fn layer_mut(&mut self, k: usize) -> &mut ParamBlock {
        &mut self.layers[k]
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.values().copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.values_mut())
    }

    pub fn same_architecture(&self, other: &DenseNetwork) -> bool {
        self.sizes == other.sizes && self.output == other.output
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// `max |self - other|` over all parameters.
    pub fn max_abs_diff(&self, other: &DenseNetwork) -> Result<f64> {
        if !self.same_architecture(other) {
            return Err(Error::InvalidArchitecture(
                "networks have different architectures".into(),
            ));
        }
        Ok(self
            .params()
            .zip(other.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(input)?;
        Ok(trace.activations.pop().unwrap())
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        ensure_len("network input", self.input_dim(), input.len())?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let mut squashed = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let x = &activations[k];
            let fan_in = x.len();
            let mut z: Vec<f64> = layer
                .weights
                .chunks_exact(fan_in)
                .zip(&layer.biases)
                .map(|(row, b)| b + dot(row, x))
                .collect();
            if k < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            } else if let OutputKind::Bounded { low, high } = &self.output {
                let t: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
                for (i, v) in z.iter_mut().enumerate() {
                    let half = 0.5 * (high[i] - low[i]);
                    let mid = 0.5 * (high[i] + low[i]);
                    *v = mid + half * t[i];
                }
                squashed = Some(t);
            }
            activations.push(z);
        }
        Ok(Trace {
            activations,
            squashed,
        })
    }

    /// Gradients of `output_grad · f(input)` with respect to all parameters
    /// and to the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(GradientSet, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        let mut grads = GradientSet::zeros_like(self);
        let input_grad = self.backward_trace(&trace, output_grad, Some(&mut grads))?;
        Ok((grads, input_grad))
    }

    /// Backward pass over a stored trace. Parameter gradients are
    /// *accumulated* into `grads` when given; the input gradient is returned.
    pub fn backward_trace(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        mut grads: Option<&mut GradientSet>,
    ) -> Result<Vec<f64>> {
        ensure_len("output gradient", self.output_dim(), output_grad.len())?;
        ensure_len("trace depth", self.layers.len() + 1, trace.activations.len())?;
        if let Some(g) = grads.as_deref() {
            if !g.congruent_with(self) {
                return Err(Error::InvalidArchitecture(
                    "gradient set does not match network".into(),
                ));
            }
        }

        let mut delta = output_grad.to_vec();
        if let (OutputKind::Bounded { low, high }, Some(t)) = (&self.output, &trace.squashed) {
            for (i, d) in delta.iter_mut().enumerate() {
                let half = 0.5 * (high[i] - low[i]);
                *d *= half * (1.0 - t[i] * t[i]);
            }
        }

        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &trace.activations[k];
            let fan_in = x.len();
            let mut dx = vec![0.0; fan_in];
            for (o, row) in layer.weights.chunks_exact(fan_in).enumerate() {
                let d = delta[o];
                if let Some(g) = grads.as_deref_mut() {
                    let gl = &mut g.layers[k];
                    axpy(d, x, &mut gl.weights[o * fan_in..(o + 1) * fan_in]);
                    gl.biases[o] += d;
                }
                axpy(d, row, &mut dx);
            }
            if k > 0 {
                // x is a tanh activation of the previous layer
                for (d, h) in dx.iter_mut().zip(x) {
                    *d *= 1.0 - h * h;
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// One optimizer step against `grads` (gradients of a loss to minimize).
    pub fn apply_gradients(&mut self, grads: &GradientSet, opt: &mut OptimizerState) -> Result<()> {
        opt.apply(self, grads)
    }

    /// `self ← tau * online + (1 - tau) * self`.
    pub fn soft_update(&mut self, online: &DenseNetwork, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidParameter(format!(
                "soft-update rate must lie in [0, 1], got {tau}"
            )));
        }
        if !self.same_architecture(online) {
            return Err(Error::InvalidArchitecture(
                "soft update between different architectures".into(),
            ));
        }
        for (t, o) in self.params_mut().zip(online.params()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        Ok(())
    }
}

/// Per-layer gradients shaped like a [`DenseNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<ParamBlock>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        GradientSet {
            layers: net
                .sizes
                .windows(2)
                .map(|w| ParamBlock::zeros(w[0], w[1]))
                .collect(),
        }
    }

    pub fn congruent_with(&self, net: &DenseNetwork) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| g.same_shape(l))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.values().copied())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.values_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values().map(f64::abs).fold(0.0, f64::max)
    }

    /// Index of the first layer holding a NaN or infinite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| !l.values().all(|v| v.is_finite()))
    }
}

/// Adaptive moment estimation state for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: GradientSet,
    second: GradientSet,
}

impl OptimizerState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(net: &DenseNetwork, learning_rate: f64) -> Result<Self> {
        Self::with_moments(net, learning_rate, Self::BETA1, Self::BETA2, Self::EPSILON)
    }

    pub fn with_moments(
        net: &DenseNetwork,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {b}"
                )));
            }
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: GradientSet::zeros_like(net),
            second: GradientSet::zeros_like(net),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn apply(&mut self, net: &mut DenseNetwork, grads: &GradientSet) -> Result<()> {
        if !grads.congruent_with(net) || !self.first.congruent_with(net) {
            return Err(Error::InvalidArchitecture(
                "gradient or optimizer state does not match network".into(),
            ));
        }
        if let Some(k) = grads.first_non_finite_layer() {
            return Err(Error::NonFinite(format!("gradient of layer {k}")));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            let params = layer.values_mut();
            let moments = m.values_mut().zip(v.values_mut());
            for ((p, gi), (mi, vi)) in params.zip(g.values()).zip(moments) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
