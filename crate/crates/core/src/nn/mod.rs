//! Dense ReLU networks with hand-written reverse-mode gradients.
//!
//! Hidden layers use ReLU; the output layer is linear or tanh. Inputs are
//! batched row-wise (`batch × features`). Besides the usual parameter and
//! input gradients, [`Mlp::double_backward`] differentiates a function of the
//! input gradient with respect to the parameters, which the gradient penalty
//! needs.

mod adam;
pub mod checkpoint;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::AdamConfig;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("tape was recorded against generation {tape}, network is at {net}")]
    StaleTape { tape: u64, net: u64 },
    #[error("non-finite gradient rejected")]
    NonFiniteGradient,
    #[error("double backward requires a linear output layer")]
    NonLinearOutput,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub output_activation: OutputActivation,
}

impl MlpShape {
    /// Two hidden layers of `width` units: three weight layers in total.
    pub fn three_layer(input: usize, width: usize, output: usize, act: OutputActivation) -> Self {
        Self {
            input,
            hidden: vec![width, width],
            output,
            output_activation: act,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input];
        dims.extend(&self.hidden);
        dims.push(self.output);
        dims
    }
}

/// One dense layer: `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.nrows(), self.weight.ncols())
    }
}

/// Parameter-shaped container; also used for Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }

    /// Flattened in layer order, weights (row-major) then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Gradient,
    pub second: Gradient,
}

/// A multilayer perceptron plus its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    output_activation: OutputActivation,
    adam: AdamState,
    generation: u64,
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    input: Array2<f64>,
    /// Post-activation output of every layer; the last entry is the network output.
    activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("at least one layer")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.input
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(shape: &MlpShape, rng: &mut R) -> Self {
        let dims = shape.dims();
        let layers = dims
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let limit = (6.0 / (inp + out) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((out, inp), || rng.random_range(-limit..limit));
                Layer {
                    weight,
                    bias: Array1::zeros(out),
                }
            })
            .collect();
        Self::from_layers(layers, shape.output_activation).expect("shape spec composes")
    }

    pub fn from_layers(layers: Vec<Layer>, output_activation: OutputActivation) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Shape("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(NnError::Shape(format!("layer {k} bias length")));
            }
            if k > 0 && l.weight.ncols() != layers[k - 1].weight.nrows() {
                return Err(NnError::Shape(format!(
                    "layer {k} input does not match layer {}",
                    k - 1
                )));
            }
        }
        let zeros = Gradient {
            layers: layers.iter().map(Layer::zeros_like).collect(),
        };
        Ok(Self {
            layers,
            output_activation,
            adam: AdamState {
                step: 0,
                first: zeros.clone(),
                second: zeros,
            },
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub(crate) fn set_adam_state(&mut self, adam: AdamState) {
        self.adam = adam;
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    /// Same order as [`Gradient::to_flat`].
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter count mismatch");
        let mut values = flat.iter();
        for l in &mut self.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = *values.next().unwrap();
            }
        }
        self.generation += 1;
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Tape, NnError> {
        if input.ncols() != self.input_len() {
            return Err(NnError::Shape(format!(
                "input has {} features, network expects {}",
                input.ncols(),
                self.input_len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let x = if k == 0 { input } else { activations[k - 1].view() };
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else if self.output_activation == OutputActivation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(Tape {
            generation: self.generation,
            input: input.to_owned(),
            activations,
        })
    }

    /// Forward pass of a single input vector.
    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        self.forward(x).expect("input length matches").output().row(0).to_vec()
    }

    fn check_tape(&self, tape: &Tape) -> Result<(), NnError> {
        if tape.generation != self.generation {
            return Err(NnError::StaleTape {
                tape: tape.generation,
                net: self.generation,
            });
        }
        Ok(())
    }

    /// Gradient of `Σ cotangent ⊙ output` with respect to the parameters and
    /// the input.
    pub fn backward(&self, tape: &Tape, cotangent: ArrayView2<f64>) -> Result<(Gradient, Array2<f64>), NnError> {
        self.check_tape(tape)?;
        if cotangent.dim() != tape.output().dim() {
            return Err(NnError::Shape("cotangent must match output".into()));
        }
        let mut delta = cotangent.to_owned();
        if self.output_activation == OutputActivation::Tanh {
            delta.zip_mut_with(tape.output(), |d, &y| *d *= 1.0 - y * y);
        }
        Ok(self.backward_delta(tape, delta))
    }

    /// Output-layer pre-activation `z` (equal to the output for a linear head).
    pub fn preactivation(&self, tape: &Tape) -> Result<Array2<f64>, NnError> {
        self.check_tape(tape)?;
        let last = self.layers.len() - 1;
        let x = if last == 0 {
            &tape.input
        } else {
            &tape.activations[last - 1]
        };
        let layer = &self.layers[last];
        let mut z = x.dot(&layer.weight.t());
        z += &layer.bias;
        Ok(z)
    }

    /// Like [`Mlp::backward`], with an extra cotangent applied directly to the
    /// output pre-activation: the gradient of `Σ c_out ⊙ y + Σ c_pre ⊙ z`.
    pub fn backward_with_preactivation(
        &self,
        tape: &Tape,
        cot_output: ArrayView2<f64>,
        cot_pre: ArrayView2<f64>,
    ) -> Result<(Gradient, Array2<f64>), NnError> {
        self.check_tape(tape)?;
        if cot_output.dim() != tape.output().dim() || cot_pre.dim() != tape.output().dim() {
            return Err(NnError::Shape("cotangent must match output".into()));
        }
        let mut delta = cot_output.to_owned();
        if self.output_activation == OutputActivation::Tanh {
            delta.zip_mut_with(tape.output(), |d, &y| *d *= 1.0 - y * y);
        }
        delta += &cot_pre;
        Ok(self.backward_delta(tape, delta))
    }

    fn backward_delta(&self, tape: &Tape, mut delta: Array2<f64>) -> (Gradient, Array2<f64>) {
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut input_grad = None;
        for k in (0..self.layers.len()).rev() {
            let x = if k == 0 { &tape.input } else { &tape.activations[k - 1] };
            let weight = delta.t().dot(x);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Layer { weight, bias });
            let mut back = delta.dot(&self.layers[k].weight);
            if k > 0 {
                back.zip_mut_with(&tape.activations[k - 1], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            } else {
                input_grad = Some(back);
            }
        }
        grads.reverse();
        (Gradient { layers: grads }, input_grad.unwrap())
    }

    /// Parameter gradient of `Σ_rows γ · g` where `g` is the input gradient of
    /// `Σ cotangent ⊙ output` (as returned by [`Mlp::backward`]).
    ///
    /// ReLU masks are treated as locally constant, so biases get zero gradient.
    pub fn double_backward(
        &self,
        tape: &Tape,
        cotangent: ArrayView2<f64>,
        gamma: ArrayView2<f64>,
    ) -> Result<Gradient, NnError> {
        self.check_tape(tape)?;
        if self.output_activation != OutputActivation::Linear {
            return Err(NnError::NonLinearOutput);
        }
        if gamma.dim() != tape.input.dim() || cotangent.dim() != tape.output().dim() {
            return Err(NnError::Shape("double backward operand shapes".into()));
        }
        let n = self.layers.len();
        // backward signals a[k] entering layer k from above
        let mut signals: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n];
        signals[n - 1] = cotangent.to_owned();
        for k in (1..n).rev() {
            let mut below = signals[k].dot(&self.layers[k].weight);
            below.zip_mut_with(&tape.activations[k - 1], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            signals[k - 1] = below;
        }
        let mut grads = Vec::with_capacity(n);
        let mut adjoint = gamma.to_owned();
        for k in 0..n {
            let weight = signals[k].t().dot(&adjoint);
            grads.push(Layer {
                weight,
                bias: Array1::zeros(self.layers[k].bias.len()),
            });
            if k + 1 < n {
                let mut up = adjoint.dot(&self.layers[k].weight.t());
                up.zip_mut_with(&tape.activations[k], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                adjoint = up;
            }
        }
        Ok(Gradient { layers: grads })
    }

    /// Soft target update: `self ← (1 − τ) self + τ online`.
    pub fn polyak_update(&mut self, online: &Mlp, tau: f64) {
        assert!(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
        assert_eq!(self.layers.len(), online.layers.len(), "incongruent networks");
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            assert_eq!(t.weight.dim(), o.weight.dim(), "incongruent networks");
            if tau == 1.0 {
                t.weight.assign(&o.weight);
                t.bias.assign(&o.bias);
            } else {
                t.weight
                    .zip_mut_with(&o.weight, |a, &b| *a = (1.0 - tau) * *a + tau * b);
                t.bias.zip_mut_with(&o.bias, |a, &b| *a = (1.0 - tau) * *a + tau * b);
            }
        }
        self.generation += 1;
    }
}
