//! Fully connected feed-forward networks with a flat parameter store.
//!
//! Parameters live in one contiguous `Vec<f64>`. For each layer, in order,
//! the weight matrix is stored row-major with shape `(outputs, inputs)`,
//! followed by the bias vector. Snapshots, optimizers and penalties all work
//! on this flat layout.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed in terms of the activation output `a`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
        }
    }

    #[inline]
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// A supervised example: input vector and target vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Example {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }
}

/// Layer activations recorded during a forward pass, `values[0]` being the input.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace always holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
    seed: u64,
}

impl DenseNet {
    /// Builds a network with weights drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_layers(&layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.iter().map(LayerSpec::param_count).sum());
        for layer in &layers {
            let limit = 1.0 / (layer.inputs as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            params.extend((0..layer.param_count()).map(|_| dist.sample(&mut rng)));
        }
        Ok(Self {
            layers,
            params,
            seed,
        })
    }

    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        validate_layers(&layers)?;
        let count = layers.iter().map(LayerSpec::param_count).sum();
        Ok(Self {
            layers,
            params: vec![0.0; count],
            seed: 0,
        })
    }

    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last layer `output`.
    pub fn from_sizes(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Result<Self> {
        Self::new(layers_from_sizes(sizes, hidden, output)?, seed)
    }

    pub fn from_parts(layers: Vec<LayerSpec>, params: Vec<f64>, seed: u64) -> Result<Self> {
        validate_layers(&layers)?;
        let expected: usize = layers.iter().map(LayerSpec::param_count).sum();
        if params.len() != expected {
            return Err(Error::shape(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            layers,
            params,
            seed,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_offset(&self, index: usize) -> usize {
        self.layers[..index].iter().map(LayerSpec::param_count).sum()
    }

    pub fn layer_weights(&self, index: usize) -> &[f64] {
        let start = self.layer_offset(index);
        let layer = &self.layers[index];
        &self.params[start..start + layer.inputs * layer.outputs]
    }

    pub fn layer_bias(&self, index: usize) -> &[f64] {
        let layer = &self.layers[index];
        let start = self.layer_offset(index) + layer.inputs * layer.outputs;
        &self.params[start..start + layer.outputs]
    }

    /// Zeroes the weights and bias of the final layer.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.len() - 1;
        let start = self.layer_offset(last);
        self.params[start..].iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        let mut offset = 0;
        for layer in &self.layers {
            current = layer_forward(layer, &self.params[offset..], &current);
            offset += layer.param_count();
        }
        Ok(current)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        let mut offset = 0;
        for layer in &self.layers {
            let next = layer_forward(layer, &self.params[offset..], values.last().unwrap());
            values.push(next);
            offset += layer.param_count();
        }
        Ok(Trace { values })
    }

    /// Backpropagates `d_output` (dL/d output) through a recorded trace.
    ///
    /// Parameter gradients are accumulated into `grad` (flat layout, same
    /// length as `params`). Returns dL/d input.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(d_output.len(), self.output_width());
        let mut delta = d_output.to_vec();
        let mut end = self.params.len();
        for (index, layer) in self.layers.iter().enumerate().rev() {
            let start = end - layer.param_count();
            let input = &trace.values[index];
            let output = &trace.values[index + 1];
            for (d, &a) in delta.iter_mut().zip(output) {
                *d *= layer.activation.derivative_from_output(a);
            }
            let weights = &self.params[start..start + layer.inputs * layer.outputs];
            let (grad_w, grad_b) =
                grad[start..end].split_at_mut(layer.inputs * layer.outputs);
            let mut d_input = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                grad_b[o] += d;
                let row = o * layer.inputs;
                for i in 0..layer.inputs {
                    grad_w[row + i] += d * input[i];
                    d_input[i] += d * weights[row + i];
                }
            }
            delta = d_input;
            end = start;
        }
        delta
    }

    /// Gradient of the batch MSE with respect to every weight and bias.
    pub fn gradients(&self, batch: &[Example]) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradients(batch)?.1)
    }

    pub fn loss_and_gradients(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::argument("gradient of an empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for example in batch {
            let trace = self.forward_trace(&example.input)?;
            let (l, d_out) = mse_with_grad(trace.output(), &example.target)?;
            loss += l * scale;
            let d_out: Vec<f64> = d_out.into_iter().map(|d| d * scale).collect();
            self.backward(&trace, &d_out, &mut grad);
        }
        Ok((loss, grad))
    }

    pub fn mse(&self, batch: &[Example]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::argument("loss of an empty batch"));
        }
        let mut total = 0.0;
        for example in batch {
            total += mse(&self.forward(&example.input)?, &example.target)?;
        }
        Ok(total / batch.len() as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::shape(format!(
                "input has width {}, network expects {}",
                x.len(),
                self.input_width()
            )));
        }
        Ok(())
    }
}

fn layer_forward(layer: &LayerSpec, params: &[f64], input: &[f64]) -> Vec<f64> {
    let weights = &params[..layer.inputs * layer.outputs];
    let bias = &params[layer.inputs * layer.outputs..layer.param_count()];
    (0..layer.outputs)
        .map(|o| {
            let row = &weights[o * layer.inputs..(o + 1) * layer.inputs];
            let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + bias[o];
            layer.activation.apply(z)
        })
        .collect()
}

pub fn layers_from_sizes(
    sizes: &[usize],
    hidden: Activation,
    output: Activation,
) -> Result<Vec<LayerSpec>> {
    if sizes.len() < 2 {
        return Err(Error::shape("a network needs at least an input and an output size"));
    }
    let last = sizes.len() - 2;
    Ok(sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| LayerSpec::new(w[0], w[1], if k == last { output } else { hidden }))
        .collect())
}

fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::shape("a network needs at least one layer"));
    }
    for (k, layer) in layers.iter().enumerate() {
        if layer.inputs == 0 || layer.outputs == 0 {
            return Err(Error::shape(format!("layer {k} has a zero dimension")));
        }
    }
    for (k, pair) in layers.windows(2).enumerate() {
        if pair[0].outputs != pair[1].inputs {
            return Err(Error::shape(format!(
                "layer {k} emits {} values but layer {} consumes {}",
                pair[0].outputs,
                k + 1,
                pair[1].inputs
            )));
        }
    }
    Ok(())
}

/// Mean over elements of the squared difference.
pub fn mse(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::shape(format!(
            "prediction width {} does not match target width {}",
            prediction.len(),
            target.len()
        )));
    }
    let sum: f64 = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / prediction.len() as f64)
}

pub(crate) fn mse_with_grad(prediction: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let loss = mse(prediction, target)?;
    let n = prediction.len() as f64;
    let grad = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok((loss, grad))
}
