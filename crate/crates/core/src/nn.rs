//! Dense-network substrate: a flat parameter store with named layer slices,
//! MLP forward/backward with explicit tapes, an Adam optimizer, and the
//! scalar loss helpers the trainer composes.
//!
//! Gradients are accumulated additively into the store so several backward
//! passes (one per unroll step, several per batch) can share one parameter
//! vector before a single optimizer step consumes and zeroes them.

use rand::Rng;

use crate::{Error, Result};

/// One named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone)]
pub struct LayerSlice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter vector plus a matching gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamStore {
    values: Vec<f64>,
    grads: Vec<f64>,
    layout: Vec<LayerSlice>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            values: Vec::new(),
            grads: Vec::new(),
            layout: Vec::new(),
        }
    }

    /// Appends a new zero-initialized slice and returns its offset.
    pub fn register(&mut self, name: &str, len: usize) -> usize {
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        self.grads.resize(offset + len, 0.0);
        self.layout.push(LayerSlice {
            name: name.to_string(),
            offset,
            len,
        });
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &[LayerSlice] {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Gradient L2 norm over the named slice, for diagnostics and tests.
    pub fn grad_norm_of(&self, name: &str) -> f64 {
        self.layout
            .iter()
            .filter(|s| s.name.starts_with(name))
            .flat_map(|s| self.grads[s.offset..s.offset + s.len].iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Debug, Clone)]
struct LayerRef {
    weight_offset: usize,
    bias_offset: usize,
    rows: usize,
    cols: usize,
}

/// Multi-layer perceptron over slices of a shared [`ParamStore`]. Hidden
/// layers use one activation tag, the output layer is always linear; softmax
/// for policy heads is applied by the caller.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden_activation: Activation,
    layers: Vec<LayerRef>,
}

/// Activation record of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    input: Vec<f64>,
    post: Vec<Vec<f64>>,
}

impl Mlp {
    /// Registers weight and bias slices for each layer under `name` and
    /// returns the network handle. Parameters start at zero; see
    /// [`Mlp::init_uniform`].
    pub fn new(store: &mut ParamStore, name: &str, sizes: &[usize], hidden: Activation) -> Mlp {
        assert!(sizes.len() >= 2, "mlp needs at least input and output sizes");
        let mut layers = Vec::new();
        for i in 0..sizes.len() - 1 {
            let (cols, rows) = (sizes[i], sizes[i + 1]);
            let weight_offset = store.register(&format!("{name}.w{i}"), rows * cols);
            let bias_offset = store.register(&format!("{name}.b{i}"), rows);
            layers.push(LayerRef {
                weight_offset,
                bias_offset,
                rows,
                cols,
            });
        }
        Mlp {
            sizes: sizes.to_vec(),
            hidden_activation: hidden,
            layers,
        }
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total parameter count for these layer shapes.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.rows * (l.cols + 1)).sum()
    }

    /// Draws weights from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases stay zero.
    pub fn init_uniform<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for layer in &self.layers {
            let bound = 1.0 / (layer.cols as f64).sqrt();
            for i in 0..layer.rows * layer.cols {
                store.values[layer.weight_offset + i] = rng.gen_range(-bound..bound);
            }
        }
    }

    pub fn forward(&self, store: &ParamStore, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension {
                what: "mlp input",
                expected: self.input_size(),
                got: input.len(),
            });
        }
        let n_layers = self.layers.len();
        let mut post = Vec::with_capacity(n_layers);
        let mut current = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.rows];
            for r in 0..layer.rows {
                let w = &store.values[layer.weight_offset + r * layer.cols..];
                let mut acc = store.values[layer.bias_offset + r];
                for c in 0..layer.cols {
                    acc += w[c] * current[c];
                }
                z[r] = acc;
            }
            let activation = if i + 1 == n_layers {
                Activation::Identity
            } else {
                self.hidden_activation
            };
            if activation == Activation::Tanh {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            post.push(z.clone());
            current = z;
        }
        let tape = Tape {
            input: input.to_vec(),
            post,
        };
        Ok((current, tape))
    }

    /// Backpropagates `output_grad` through the tape, adding parameter
    /// gradients into the store, and returns the gradient w.r.t. the input.
    pub fn backward(&self, store: &mut ParamStore, tape: &Tape, output_grad: &[f64]) -> Vec<f64> {
        assert_eq!(
            output_grad.len(),
            self.output_size(),
            "output gradient length must match network output size"
        );
        assert_eq!(
            tape.post.len(),
            self.layers.len(),
            "tape does not match this network"
        );
        let n_layers = self.layers.len();
        let mut delta = output_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let activation = if i + 1 == n_layers {
                Activation::Identity
            } else {
                self.hidden_activation
            };
            // d/dz through the activation; tanh' = 1 - tanh^2, read off post.
            if activation == Activation::Tanh {
                for (d, a) in delta.iter_mut().zip(tape.post[i].iter()) {
                    *d *= 1.0 - a * a;
                }
            }
            let prev: &[f64] = if i == 0 { &tape.input } else { &tape.post[i - 1] };
            assert_eq!(prev.len(), layer.cols, "stale tape for this network");
            for r in 0..layer.rows {
                store.grads[layer.bias_offset + r] += delta[r];
                let row = layer.weight_offset + r * layer.cols;
                for c in 0..layer.cols {
                    store.grads[row + c] += delta[r] * prev[c];
                }
            }
            let mut next_delta = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let row = layer.weight_offset + r * layer.cols;
                for c in 0..layer.cols {
                    next_delta[c] += store.values[row + c] * delta[r];
                }
            }
            delta = next_delta;
        }
        delta
    }
}

/// Adam moment buffers and step counter for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step. The L2 penalty enters as an extra gradient
/// contribution `2 * l2_weight * theta`; gradients are zeroed afterwards.
pub fn adam_step(store: &mut ParamStore, opt: &mut AdamState, lr: f64, l2_weight: f64) {
    assert_eq!(opt.m.len(), store.len(), "optimizer state size mismatch");
    opt.t += 1;
    let bc1 = 1.0 - opt.beta1.powi(opt.t as i32);
    let bc2 = 1.0 - opt.beta2.powi(opt.t as i32);
    for i in 0..store.values.len() {
        let g = store.grads[i] + 2.0 * l2_weight * store.values[i];
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        let m_hat = opt.m[i] / bc1;
        let v_hat = opt.v[i] / bc2;
        store.values[i] -= lr * m_hat / (v_hat.sqrt() + opt.eps);
    }
    store.zero_grads();
}

/// Numerically stabilized softmax with a temperature.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of empty input".into()));
    }
    if temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "softmax temperature must be > 0, got {temperature}"
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

/// Mean squared error between two equal-length arrays.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mse length mismatch");
    if a.is_empty() {
        return 0.0;
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

pub const CROSS_ENTROPY_EPS: f64 = 1e-12;

/// `-sum target * ln(predicted + eps)`; `target` is a distribution.
pub fn cross_entropy(target: &[f64], predicted: &[f64]) -> f64 {
    assert_eq!(target.len(), predicted.len(), "cross_entropy length mismatch");
    -target
        .iter()
        .zip(predicted.iter())
        .map(|(t, p)| t * (p + CROSS_ENTROPY_EPS).ln())
        .sum::<f64>()
}
