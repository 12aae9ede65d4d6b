//! Dense feed-forward classifier with inverted dropout on hidden units.
//!
//! The same type backs both teachers and students. Dropout mode draws an
//! independent keep-mask per hidden unit, which is how a Monte-Carlo pass
//! samples a masked copy of the weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dist::{kl_to_logits, softmax, Distribution};
use super::matrix::DenseMatrix;
use super::optim::OptimizerState;
use super::rng::RngStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidInput(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Deterministic,
    Dropout,
}

/// One affine layer: `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    dropout_rate: f64,
    activation: Activation,
}

fn check_dropout(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Randomly initialised network. Weights are drawn from
    /// `U(-1/√fan_in, 1/√fan_in)`, biases start at zero.
    pub fn new(layer_dims: &[usize], dropout_rate: f64, rng: &mut RngStream) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "layer dims {layer_dims:?} must have at least two positive entries"
            )));
        }
        check_dropout(dropout_rate)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| (2.0 * rng.next_unit() - 1.0) * bound)
                    .collect();
                Layer {
                    weights: DenseMatrix::from_vec(fan_out, fan_in, data).expect("sizes match by construction"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            dropout_rate,
            activation: Activation::Relu,
        })
    }

    /// Assembles a model from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>, dropout_rate: f64, activation: Activation) -> Result<Self> {
        check_dropout(dropout_rate)?;
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidInput("a model needs at least one layer".into()))?;
        let mut dims = vec![first.weights.cols()];
        for layer in &layers {
            let prev = *dims.last().expect("non-empty");
            if layer.weights.cols() != prev {
                return Err(Error::shape(prev, layer.weights.cols()));
            }
            if layer.bias.len() != layer.weights.rows() {
                return Err(Error::shape(layer.weights.rows(), layer.bias.len()));
            }
            if layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidInput("non-finite bias".into()));
            }
            dims.push(layer.weights.rows());
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput(format!("zero-width layer in {dims:?}")));
        }
        Ok(Self {
            layer_dims: dims,
            layers,
            dropout_rate,
            activation,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Parameter tensors in the fixed order `w0, b0, w1, b1, …`.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        Ok(())
    }

    /// Logits for `x`. Deterministic mode ignores `rng`; dropout mode
    /// consumes it.
    pub fn forward(&self, x: &[f64], mode: ForwardMode, rng: &mut RngStream) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x, mode, rng).logits)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut unused = RngStream::new(0, 0);
        Ok(self.trace(x, ForwardMode::Deterministic, &mut unused).logits)
    }

    /// Softmax of the deterministic logits.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Distribution> {
        softmax(&self.logits(x)?, 1.0)
    }

    fn trace(&self, x: &[f64], mode: ForwardMode, rng: &mut RngStream) -> Trace {
        let dropping = mode == ForwardMode::Dropout && self.dropout_rate > 0.0;
        let keep = 1.0 - self.dropout_rate;
        let scale = 1.0 / keep;
        let last = self.layers.len() - 1;

        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut masks = Vec::with_capacity(last);
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.weights.rows()];
            layer.weights.matvec_into(&a, &mut z);
            z.iter_mut().zip(&layer.bias).for_each(|(zi, b)| *zi += b);
            inputs.push(std::mem::take(&mut a));
            if l == last {
                return Trace {
                    inputs,
                    pre,
                    masks,
                    logits: z,
                };
            }
            let mask: Vec<f64> = if dropping {
                (0..z.len())
                    .map(|_| if rng.next_unit() < keep { scale } else { 0.0 })
                    .collect()
            } else {
                Vec::new()
            };
            a = z.iter().map(|&v| self.activation.apply(v)).collect();
            if dropping {
                a.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            }
            pre.push(z);
            masks.push(mask);
        }
        unreachable!("loop returns at the last layer")
    }

    /// Accumulates `scale · ∂(dlogits · logits)/∂θ` into `grads`.
    fn backward(&self, trace: &Trace, dlogits: &[f64], scale: f64, grads: &mut Gradients) {
        let mut delta = dlogits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            g.weights.add_outer(scale, &delta, &trace.inputs[l]);
            g.bias.iter_mut().zip(&delta).for_each(|(b, d)| *b += scale * d);
            if l == 0 {
                break;
            }
            let mut upstream = vec![0.0; layer.weights.cols()];
            layer.weights.matvec_transposed_into(&delta, &mut upstream);
            let z = &trace.pre[l - 1];
            let mask = &trace.masks[l - 1];
            for (j, u) in upstream.iter_mut().enumerate() {
                let m = if mask.is_empty() { 1.0 } else { mask[j] };
                *u *= m * self.activation.derivative(z[j]);
            }
            delta = upstream;
        }
    }
}

struct Trace {
    /// Input to each layer (post-activation, post-dropout for hidden layers).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    /// Dropout scale factors of hidden layers; empty when no dropout applied.
    masks: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weights: DenseMatrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Gradient tensors in the same order as [`MlpModel::params`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0))
    }
}

/// Target restricted to a subset of the model's outputs; the model's logits
/// at `indices` are softmaxed on their own before comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetTarget {
    pub indices: Vec<usize>,
    pub target: Distribution,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossTarget {
    /// `KL(target ‖ softmax(logits))` over all outputs.
    Full(Distribution),
    /// `Σᵢ KL(targetᵢ ‖ softmax(logits[indicesᵢ]))`.
    Subsets(Vec<SubsetTarget>),
}

impl LossTarget {
    /// Loss and its gradient with respect to the logits.
    pub fn loss_and_grad(&self, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            LossTarget::Full(t) => {
                let loss = kl_to_logits(t, logits)?;
                let s = softmax(logits, 1.0)?;
                let grad = s.probs().iter().zip(t.probs()).map(|(s, t)| s - t).collect();
                Ok((loss, grad))
            }
            LossTarget::Subsets(parts) => {
                let mut loss = 0.0;
                let mut grad = vec![0.0; logits.len()];
                for part in parts {
                    if part.indices.len() != part.target.len() {
                        return Err(Error::shape(part.indices.len(), part.target.len()));
                    }
                    let sub = part
                        .indices
                        .iter()
                        .map(|&i| logits.get(i).copied().ok_or_else(|| Error::shape(logits.len(), i + 1)))
                        .collect::<Result<Vec<f64>>>()?;
                    loss += kl_to_logits(&part.target, &sub)?;
                    let s = softmax(&sub, 1.0)?;
                    for ((&i, s), t) in part.indices.iter().zip(s.probs()).zip(part.target.probs()) {
                        grad[i] += s - t;
                    }
                }
                Ok((loss, grad))
            }
        }
    }

    fn check_width(&self, width: usize) -> Result<()> {
        match self {
            LossTarget::Full(t) if t.len() != width => Err(Error::shape(width, t.len())),
            LossTarget::Subsets(parts) => match parts.iter().flat_map(|p| &p.indices).find(|&&i| i >= width) {
                Some(&i) => Err(Error::shape(width, i + 1)),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// One weighted training instance.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub target: &'a LossTarget,
    pub weight: f64,
}

fn validate_batch(model: &MlpModel, batch: &[Example<'_>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    for ex in batch {
        model.check_input(ex.features)?;
        ex.target.check_width(model.output_dim())?;
        if !(0.0..=1.0).contains(&ex.weight) {
            return Err(Error::InvalidInput(format!(
                "instance weight {} outside [0, 1]",
                ex.weight
            )));
        }
    }
    Ok(())
}

/// Mean weighted loss `(1/B) Σ v(x) · loss(x)` in dropout mode. Instance `j`
/// draws its dropout masks from `rng.substream(j)`.
pub fn batch_loss(model: &MlpModel, batch: &[Example<'_>], rng: &RngStream) -> Result<f64> {
    validate_batch(model, batch)?;
    let mut total = 0.0;
    for (j, ex) in batch.iter().enumerate() {
        if ex.weight == 0.0 {
            continue;
        }
        let mut r = rng.substream(j as u64);
        let trace = model.trace(ex.features, ForwardMode::Dropout, &mut r);
        let (loss, _) = ex.target.loss_and_grad(&trace.logits)?;
        total += ex.weight * loss;
    }
    Ok(total / batch.len() as f64)
}

/// [`batch_loss`] together with its exact gradient.
pub fn batch_gradient(model: &MlpModel, batch: &[Example<'_>], rng: &RngStream) -> Result<(f64, Gradients)> {
    validate_batch(model, batch)?;
    let mut grads = Gradients::zeros_like(model);
    let inv_b = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (j, ex) in batch.iter().enumerate() {
        if ex.weight == 0.0 {
            continue;
        }
        let mut r = rng.substream(j as u64);
        let trace = model.trace(ex.features, ForwardMode::Dropout, &mut r);
        let (loss, dlogits) = ex.target.loss_and_grad(&trace.logits)?;
        total += ex.weight * loss;
        model.backward(&trace, &dlogits, ex.weight * inv_b, &mut grads);
    }
    Ok((total * inv_b, grads))
}

/// One optimisation step on `batch`; returns the loss before the update.
pub fn train_step(
    model: &mut MlpModel,
    batch: &[Example<'_>],
    opt: &mut OptimizerState,
    rng: &RngStream,
) -> Result<f64> {
    let (loss, grads) = batch_gradient(model, batch, rng)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged {
            step: opt.step_count(),
            loss,
        });
    }
    opt.apply(model, &grads)?;
    Ok(loss)
}
