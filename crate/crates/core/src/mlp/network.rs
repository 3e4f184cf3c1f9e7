use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use crate::error::{Error, Result};

/// How the weight update consumes the training set each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// One step per epoch along the mean gradient.
    #[default]
    FullBatch,
    /// One step per sample, samples visited in a seeded shuffled order.
    Online,
}

/// Class code to scalar target for the single output node. Decoding picks
/// the nearest target; exact ties go to the lower class code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCoding {
    pub codes: Vec<(u8, f64)>,
}

impl TargetCoding {
    /// Default placement of `num_classes` (3 or 4) targets inside the range
    /// of `output`.
    pub fn for_activation(output: ActivationKind, num_classes: u8) -> Result<Self> {
        let targets: &[f64] = match (output, num_classes) {
            (ActivationKind::TanSig, 3) => &[-0.8, 0.0, 0.8],
            (ActivationKind::LogSig, 3) => &[0.15, 0.5, 0.85],
            (ActivationKind::PureLin, 3) => &[1.0, 2.0, 3.0],
            (ActivationKind::TanSig, 4) => &[-0.9, -0.3, 0.3, 0.9],
            (ActivationKind::LogSig, 4) => &[0.1, 0.35, 0.65, 0.9],
            (ActivationKind::PureLin, 4) => &[1.0, 2.0, 3.0, 4.0],
            _ => {
                return Err(Error::Config(format!(
                    "no target coding for {num_classes} classes"
                )))
            }
        };
        Ok(Self {
            codes: targets
                .iter()
                .enumerate()
                .map(|(i, &t)| (i as u8 + 1, t))
                .collect(),
        })
    }

    pub fn validate(&self, output: ActivationKind) -> Result<()> {
        if self.codes.len() < 2 {
            return Err(Error::Config(
                "target coding needs at least two classes".into(),
            ));
        }
        for pair in self.codes.windows(2) {
            if !(pair[0].0 < pair[1].0 && pair[0].1 < pair[1].1) {
                return Err(Error::Config(
                    "target values must increase strictly with class code".into(),
                ));
            }
        }
        for &(code, t) in &self.codes {
            let inside = match output.output_range() {
                Some((lo, hi)) => lo < t && t < hi,
                None => t.is_finite(),
            };
            if !inside {
                return Err(Error::Config(format!(
                    "target {t} for class {code} is outside the {output} output range"
                )));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.codes.len()
    }

    pub fn target(&self, code: u8) -> Option<f64> {
        self.codes.iter().find(|(c, _)| *c == code).map(|(_, t)| *t)
    }

    pub fn decode(&self, output: f64) -> u8 {
        let mut best = self.codes[0];
        for &(code, t) in &self.codes[1..] {
            if (output - t).abs() < (output - best.1).abs() {
                best = (code, t);
            }
        }
        best.0
    }

    /// Distance from `output` to each class target, in class order.
    pub fn distances(&self, output: f64) -> Vec<(u8, f64)> {
        self.codes
            .iter()
            .map(|&(c, t)| (c, (output - t).abs()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_arity: usize,
    pub hidden_layers: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub output_activation: ActivationKind,
    pub learning_rate: f64,
    /// Number of epochs.
    pub iterations: usize,
    pub seed: u64,
    pub target_coding: TargetCoding,
    #[serde(default)]
    pub update: UpdateRule,
}

impl MlpConfig {
    /// One hidden layer of 5 nodes, tanh everywhere, learning rate 0.04,
    /// 3000 epochs.
    pub fn default_for(input_arity: usize) -> Self {
        Self {
            input_arity,
            hidden_layers: vec![5],
            hidden_activation: ActivationKind::TanSig,
            output_activation: ActivationKind::TanSig,
            learning_rate: 0.04,
            iterations: 3000,
            seed: 0,
            target_coding: TargetCoding::for_activation(ActivationKind::TanSig, 3).unwrap(),
            update: UpdateRule::FullBatch,
        }
    }

    /// Sets both activations and re-derives the default target coding for
    /// the current number of classes.
    pub fn with_activations(mut self, hidden: ActivationKind, output: ActivationKind) -> Self {
        let n = self.target_coding.num_classes() as u8;
        self.hidden_activation = hidden;
        self.output_activation = output;
        self.target_coding = TargetCoding::for_activation(output, n).unwrap();
        self
    }

    pub fn with_num_classes(mut self, num_classes: u8) -> Result<Self> {
        self.target_coding = TargetCoding::for_activation(self.output_activation, num_classes)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_arity == 0 {
            return Err(Error::Config("input_arity must be at least 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config(
                "every hidden layer needs at least one node".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        self.target_coding.validate(self.output_activation)
    }

    /// Layer widths from input to the single output node.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_arity);
        w.extend(&self.hidden_layers);
        w.push(1);
        w
    }
}

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: ActivationKind,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Per-feature affine map from the training `[min, max]` onto `[-1, 1]`.
/// Constant features map to 0; values outside the fitted range are not
/// clipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub min: f64,
    pub max: f64,
}

impl FeatureScale {
    pub const IDENTITY: FeatureScale = FeatureScale {
        min: -1.0,
        max: 1.0,
    };

    pub fn apply(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            2.0 * (x - self.min) / span - 1.0
        } else {
            0.0
        }
    }
}

pub fn fit_scaling<'a>(
    rows: impl IntoIterator<Item = &'a [f64]>,
    arity: usize,
) -> Vec<FeatureScale> {
    let mut scale = vec![
        FeatureScale {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        arity
    ];
    for row in rows {
        for (s, &v) in scale.iter_mut().zip(row) {
            s.min = s.min.min(v);
            s.max = s.max.max(v);
        }
    }
    for s in &mut scale {
        if !s.min.is_finite() {
            *s = FeatureScale { min: 0.0, max: 0.0 };
        }
    }
    scale
}

pub fn scale_inputs(features: &[f64], scaling: &[FeatureScale]) -> Vec<f64> {
    features
        .iter()
        .zip(scaling)
        .map(|(&x, s)| s.apply(x))
        .collect()
}

/// A trained (or freshly initialised) network with its input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub layers: Vec<Layer>,
    pub input_scaling: Vec<FeatureScale>,
}

/// Same shape as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w);
            out.extend(b);
        }
        out
    }

    pub(crate) fn clear(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Buffers reused across forward/backward passes.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    /// activations[0] is the scaled input; activations[l + 1] is layer l's output.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    pub(crate) fn new(model: &MlpModel) -> Self {
        let mut activations = vec![vec![0.0; model.config.input_arity]];
        activations.extend(model.layers.iter().map(|l| vec![0.0; l.outputs]));
        Self {
            activations,
            pre: model.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            delta: model.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
        }
    }
}

impl MlpModel {
    /// Builds the layer chain with weights and biases drawn uniformly from
    /// `[-bound, bound]`. Input scaling starts as the identity.
    pub fn initialize<R: Rng>(config: MlpConfig, bound: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let widths = config.layer_widths();
        let n_layers = widths.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for (i, pair) in widths.windows(2).enumerate() {
            let (inputs, outputs) = (pair[0], pair[1]);
            let weights = (0..inputs * outputs)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            let biases = (0..outputs)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            let activation = if i + 1 == n_layers {
                config.output_activation
            } else {
                config.hidden_activation
            };
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                biases,
                activation,
            });
        }
        let input_scaling = vec![FeatureScale::IDENTITY; config.input_arity];
        Ok(Self {
            config,
            layers,
            input_scaling,
        })
    }

    /// Checks the shape chain, scaling length, activations and finiteness.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let widths = self.config.layer_widths();
        if self.layers.len() != widths.len() - 1 {
            return Err(Error::Shape(format!(
                "expected {} layers, found {}",
                widths.len() - 1,
                self.layers.len()
            )));
        }
        for (i, (layer, pair)) in self.layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.inputs != pair[0] || layer.outputs != pair[1] {
                return Err(Error::Shape(format!(
                    "layer {i} is {}x{}, expected {}x{}",
                    layer.outputs, layer.inputs, pair[1], pair[0]
                )));
            }
            if layer.weights.len() != layer.inputs * layer.outputs {
                return Err(Error::Shape(format!(
                    "layer {i} has {} weights, expected {}",
                    layer.weights.len(),
                    layer.inputs * layer.outputs
                )));
            }
            if layer.biases.len() != layer.outputs {
                return Err(Error::Shape(format!(
                    "layer {i} has {} biases, expected {}",
                    layer.biases.len(),
                    layer.outputs
                )));
            }
            let expected = if i + 1 == self.layers.len() {
                self.config.output_activation
            } else {
                self.config.hidden_activation
            };
            if layer.activation != expected {
                return Err(Error::Shape(format!(
                    "layer {i} activation {} does not match config {expected}",
                    layer.activation
                )));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.biases)
                .any(|v| !v.is_finite())
            {
                return Err(Error::Domain(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        if self.input_scaling.len() != self.config.input_arity {
            return Err(Error::Shape(format!(
                "{} scaling pairs for {} inputs",
                self.input_scaling.len(),
                self.config.input_arity
            )));
        }
        if self
            .input_scaling
            .iter()
            .any(|s| !(s.min.is_finite() && s.max.is_finite() && s.min <= s.max))
        {
            return Err(Error::Domain("invalid input scaling pair".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(&l.weights);
            out.extend(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.biases.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
    }

    fn check_arity(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.config.input_arity {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.config.input_arity,
                features.len()
            )));
        }
        Ok(())
    }

    pub fn scale(&self, features: &[f64]) -> Vec<f64> {
        scale_inputs(features, &self.input_scaling)
    }

    /// Output of the single output node for unscaled `features`.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        self.check_arity(features)?;
        let mut scratch = Scratch::new(self);
        Ok(self.forward_into(&self.scale(features), &mut scratch))
    }

    pub fn predict_class(&self, features: &[f64]) -> Result<u8> {
        Ok(self.config.target_coding.decode(self.forward(features)?))
    }

    /// Forward pass on already-scaled input, leaving every layer's
    /// pre-activation and output in `scratch`.
    pub(crate) fn forward_into(&self, scaled: &[f64], scratch: &mut Scratch) -> f64 {
        scratch.activations[0].copy_from_slice(scaled);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = scratch.activations.split_at_mut(l + 1);
            let input = &before[l];
            let output = &mut after[0];
            let pre = &mut scratch.pre[l];
            for j in 0..layer.outputs {
                let row = &layer.weights[j * layer.inputs..(j + 1) * layer.inputs];
                let z = layer.biases[j] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                pre[j] = z;
                output[j] = layer.activation.apply(z);
            }
        }
        scratch.activations[self.layers.len()][0]
    }

    /// Adds `weight * dL/dθ` for L = ½(y − target)² at one scaled sample to
    /// `grad`, using `derivative(kind, z, a)` for each activation. Returns
    /// the network output.
    pub(crate) fn accumulate_gradient<F>(
        &self,
        scaled: &[f64],
        target: f64,
        weight: f64,
        derivative: &F,
        scratch: &mut Scratch,
        grad: &mut Gradient,
    ) -> f64
    where
        F: Fn(ActivationKind, f64, f64) -> f64,
    {
        let y = self.forward_into(scaled, scratch);
        let last = self.layers.len() - 1;
        {
            let layer = &self.layers[last];
            let z = scratch.pre[last][0];
            scratch.delta[last][0] = (y - target) * derivative(layer.activation, z, y);
        }
        for l in (0..last).rev() {
            let (lower, upper) = scratch.delta.split_at_mut(l + 1);
            let next_delta = &upper[0];
            let next = &self.layers[l + 1];
            let layer = &self.layers[l];
            for j in 0..layer.outputs {
                let back: f64 = (0..next.outputs)
                    .map(|k| next.weights[k * next.inputs + j] * next_delta[k])
                    .sum();
                let z = scratch.pre[l][j];
                let a = scratch.activations[l + 1][j];
                lower[l][j] = back * derivative(layer.activation, z, a);
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &scratch.activations[l];
            let delta = &scratch.delta[l];
            let gw = &mut grad.weights[l];
            let gb = &mut grad.biases[l];
            for j in 0..layer.outputs {
                let d = weight * delta[j];
                gb[j] += d;
                for (g, a) in gw[j * layer.inputs..(j + 1) * layer.inputs]
                    .iter_mut()
                    .zip(input)
                {
                    *g += d * a;
                }
            }
        }
        y
    }
}

pub(crate) fn analytic_derivative(kind: ActivationKind, _z: f64, a: f64) -> f64 {
    kind.derivative_given_output(a)
}

/// Exact gradient of ½(forward(x) − target)² with respect to every weight
/// and bias (input scaling held fixed).
pub fn backprop_gradient(model: &MlpModel, features: &[f64], target: f64) -> Result<Gradient> {
    backprop_gradient_with(model, features, target, analytic_derivative)
}

/// As [`backprop_gradient`] with a caller-supplied activation derivative
/// `derivative(kind, z, f(z))`.
pub fn backprop_gradient_with<F>(
    model: &MlpModel,
    features: &[f64],
    target: f64,
    derivative: F,
) -> Result<Gradient>
where
    F: Fn(ActivationKind, f64, f64) -> f64,
{
    model.check_arity(features)?;
    let mut scratch = Scratch::new(model);
    let mut grad = Gradient::zeros_like(model);
    grad.clear();
    model.accumulate_gradient(
        &model.scale(features),
        target,
        1.0,
        &derivative,
        &mut scratch,
        &mut grad,
    );
    Ok(grad)
}
