//! Dense action-value network, its regression loss/gradient, and an Adam
//! optimizer. Everything is f64 and hand-rolled so gradients can be checked
//! against finite differences exactly.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{StateMatrix, NUM_QUESTIONS};
use crate::error::{Error, Result};
use crate::rng;

pub const INPUT_DIM: usize = NUM_QUESTIONS;
pub const OUTPUT_DIM: usize = NUM_QUESTIONS;

#[derive(Debug, Clone)]
struct DenseLayer {
    /// Row-major (outputs x inputs).
    weights: Vec<f64>,
    biases: Vec<f64>,
    inputs: usize,
    outputs: usize,
    relu: bool,
}

impl DenseLayer {
    fn forward(&self, x: &[f64], z: &mut Vec<f64>, a: &mut Vec<f64>) {
        z.clear();
        a.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut sum = self.biases[o];
            for (w, xi) in row.iter().zip(x) {
                sum += w * xi;
            }
            z.push(sum);
            a.push(if self.relu { sum.max(0.0) } else { sum });
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Feed-forward approximator mapping a flattened state to one value per
/// question in canonical order.
#[derive(Debug, Clone)]
pub struct QNetwork {
    layers: Vec<DenseLayer>,
}

impl QNetwork {
    /// Fresh network with the given hidden layer widths. Hidden layers use
    /// ReLU with He-initialized weights; the linear output layer starts at
    /// zero so that all actions open with equal value.
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(INPUT_DIM);
        dims.extend_from_slice(hidden);
        dims.push(OUTPUT_DIM);
        let mut rng = rng::rng_from(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (inputs, outputs) = (dims[k], dims[k + 1]);
            let last = k == dims.len() - 2;
            let scale = (2.0 / inputs as f64).sqrt();
            let weights = if last {
                vec![0.0; inputs * outputs]
            } else {
                (0..inputs * outputs).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
            };
            layers.push(DenseLayer { weights, biases: vec![0.0; outputs], inputs, outputs, relu: !last });
        }
        Self { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Action values for a state, with a finiteness check.
    pub fn predict(&self, s: &StateMatrix) -> Result<[f64; OUTPUT_DIM]> {
        let out = self.forward(&s.to_vector())?;
        let mut values = [0.0; OUTPUT_DIM];
        values.copy_from_slice(&out);
        Ok(values)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(x.len(), INPUT_DIM);
        let mut activation = x.to_vec();
        let mut z = Vec::new();
        let mut a = Vec::new();
        for layer in &self.layers {
            layer.forward(&activation, &mut z, &mut a);
            activation.clone_from(&a);
        }
        if activation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure("non-finite network output".into()));
        }
        Ok(activation)
    }

    /// Forward pass keeping pre-activations and activations per layer.
    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut z = Vec::new();
            let mut a = Vec::new();
            layer.forward(activations.last().expect("seeded with input"), &mut z, &mut a);
            zs.push(z);
            activations.push(a);
        }
        (zs, activations)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w_len = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + w_len]);
            offset += w_len;
            let b_len = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(())
    }

    /// Per-layer (weights, biases) copies for checkpointing.
    pub fn layer_arrays(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.layers.iter().map(|l| (l.weights.clone(), l.biases.clone())).collect()
    }

    /// Rebuild a network from checkpointed arrays.
    pub fn from_layer_arrays(dims: &[usize], arrays: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if dims.len() < 2 || dims.len() != arrays.len() + 1 {
            return Err(Error::InvalidInput("checkpoint dims do not match layer arrays".into()));
        }
        if dims[0] != INPUT_DIM || *dims.last().expect("non-empty") != OUTPUT_DIM {
            return Err(Error::InvalidInput(format!(
                "checkpoint endpoints must be {INPUT_DIM} and {OUTPUT_DIM}, got {dims:?}"
            )));
        }
        let mut layers = Vec::with_capacity(arrays.len());
        for (k, (weights, biases)) in arrays.into_iter().enumerate() {
            let (inputs, outputs) = (dims[k], dims[k + 1]);
            if weights.len() != inputs * outputs || biases.len() != outputs {
                return Err(Error::InvalidInput(format!("layer {k} arrays do not match dims {inputs}x{outputs}")));
            }
            let last = k == dims.len() - 2;
            layers.push(DenseLayer { weights, biases, inputs, outputs, relu: !last });
        }
        Ok(Self { layers })
    }
}

/// One regression target: push the value of `action` in state `input`
/// toward `target`.
#[derive(Debug, Clone)]
pub struct RegressionSample {
    pub input: [f64; INPUT_DIM],
    pub action: usize,
    pub target: f64,
}

/// Mean squared error between predicted action values and targets.
pub fn batch_loss(net: &QNetwork, batch: &[RegressionSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty regression batch".into()));
    }
    let mut total = 0.0;
    for sample in batch {
        let out = net.forward(&sample.input)?;
        let diff = out[sample.action] - sample.target;
        total += diff * diff;
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NumericFailure(format!("non-finite loss {loss}")));
    }
    Ok(loss)
}

/// Analytic gradient of [`batch_loss`] in [`QNetwork::params_flat`] order.
pub fn batch_gradient(net: &QNetwork, batch: &[RegressionSample]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty regression batch".into()));
    }
    let mut grad = vec![0.0; net.param_count()];
    let layer_offsets: Vec<usize> = {
        let mut offsets = Vec::with_capacity(net.layers.len());
        let mut off = 0;
        for layer in &net.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        offsets
    };
    let scale = 2.0 / batch.len() as f64;
    for sample in batch {
        let (zs, activations) = net.forward_cached(&sample.input);
        let out = activations.last().expect("output layer activation");
        let err = out[sample.action] - sample.target;
        if !err.is_finite() {
            return Err(Error::NumericFailure("non-finite prediction error".into()));
        }
        // output error is nonzero only at the taken action
        let mut delta = vec![0.0; out.len()];
        delta[sample.action] = scale * err;
        for l in (0..net.layers.len()).rev() {
            let layer = &net.layers[l];
            let prev = &activations[l];
            let base = layer_offsets[l];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d != 0.0 {
                    let row = base + o * layer.inputs;
                    for (i, p) in prev.iter().enumerate() {
                        grad[row + i] += d * p;
                    }
                    grad[base + layer.weights.len() + o] += d;
                }
            }
            if l > 0 {
                let below = &net.layers[l - 1];
                let mut next_delta = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (i, w) in row.iter().enumerate() {
                            next_delta[i] += w * d;
                        }
                    }
                }
                if below.relu {
                    for (i, nd) in next_delta.iter_mut().enumerate() {
                        if zs[l - 1][i] <= 0.0 {
                            *nd = 0.0;
                        }
                    }
                }
                delta = next_delta;
            }
        }
    }
    Ok(grad)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64, param_count: usize) -> Self {
        Self { learning_rate, beta1, beta2, epsilon, step: 0, m: vec![0.0; param_count], v: vec![0.0; param_count] }
    }

    pub fn apply(&mut self, net: &mut QNetwork, grad: &[f64]) -> Result<()> {
        if grad.len() != self.m.len() {
            return Err(Error::InvalidInput("gradient size does not match optimizer state".into()));
        }
        self.step += 1;
        let mut params = net.params_flat();
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        net.set_params_flat(&params)
    }
}
