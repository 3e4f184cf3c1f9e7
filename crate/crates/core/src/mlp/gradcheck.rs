//! Backpropagation versus central finite differences on random small nets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use super::network::{
    analytic_derivative, backprop_gradient_with, FeatureScale, MlpConfig, MlpModel, TargetCoding,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub max_inputs: usize,
    pub max_hidden: usize,
    pub max_hidden_layers: usize,
    /// Finite-difference step.
    pub step: f64,
    /// Gradient magnitudes below this are compared absolutely.
    pub scale_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            max_inputs: 3,
            max_hidden: 5,
            max_hidden_layers: 1,
            step: 1e-5,
            scale_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Worst `|bp - fd| / max(|bp|, |fd|, scale_floor)` over every parameter.
    pub max_rel_deviation: f64,
    /// Random nets checked (trials x 9 activation pairs).
    pub nets_checked: usize,
    pub params_checked: usize,
    pub no_trials: bool,
    pub worst_pair: Option<(ActivationKind, ActivationKind)>,
}

pub fn check_gradients(config: &GradCheckConfig, n_trials: usize, seed: u64) -> GradCheckReport {
    check_gradients_with(config, n_trials, seed, analytic_derivative)
}

/// Like [`check_gradients`], but backpropagates with the supplied
/// `derivative(kind, z, f(z))`.
pub fn check_gradients_with<F>(
    config: &GradCheckConfig,
    n_trials: usize,
    seed: u64,
    derivative: F,
) -> GradCheckReport
where
    F: Fn(ActivationKind, f64, f64) -> f64 + Copy,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_deviation: 0.0,
        nets_checked: 0,
        params_checked: 0,
        no_trials: n_trials == 0,
        worst_pair: None,
    };
    for _ in 0..n_trials {
        for hidden in ActivationKind::ALL {
            for output in ActivationKind::ALL {
                let (model, x, target) = random_case(config, hidden, output, &mut rng);
                let dev = max_deviation(&model, &x, target, config, derivative);
                report.nets_checked += 1;
                report.params_checked += model.param_count();
                if report.worst_pair.is_none() || dev > report.max_rel_deviation {
                    report.max_rel_deviation = dev;
                    report.worst_pair = Some((hidden, output));
                }
            }
        }
    }
    report
}

fn random_case(
    config: &GradCheckConfig,
    hidden: ActivationKind,
    output: ActivationKind,
    rng: &mut ChaCha8Rng,
) -> (MlpModel, Vec<f64>, f64) {
    let inputs = rng.random_range(1..=config.max_inputs);
    let depth = rng.random_range(1..=config.max_hidden_layers);
    let hidden_layers = (0..depth)
        .map(|_| rng.random_range(1..=config.max_hidden))
        .collect();
    let cfg = MlpConfig {
        input_arity: inputs,
        hidden_layers,
        hidden_activation: hidden,
        output_activation: output,
        learning_rate: 0.1,
        iterations: 0,
        seed: 0,
        target_coding: TargetCoding::for_activation(output, 3).unwrap(),
        update: Default::default(),
    };
    let mut model = MlpModel::initialize(cfg, 1.0, rng).unwrap();
    model.input_scaling = vec![FeatureScale::IDENTITY; inputs];
    let x = (0..inputs).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let target = match output.output_range() {
        Some((lo, hi)) => rng.random_range(lo..hi),
        None => rng.random_range(-2.0..=2.0),
    };
    (model, x, target)
}

fn loss(model: &MlpModel, x: &[f64], target: f64) -> f64 {
    let y = model.forward(x).unwrap();
    0.5 * (y - target) * (y - target)
}

fn max_deviation<F>(
    model: &MlpModel,
    x: &[f64],
    target: f64,
    config: &GradCheckConfig,
    derivative: F,
) -> f64
where
    F: Fn(ActivationKind, f64, f64) -> f64,
{
    let analytic = backprop_gradient_with(model, x, target, derivative)
        .unwrap()
        .flatten();
    let params = model.params();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut p = params.clone();
        p[i] = params[i] + config.step;
        probe.set_params(&p);
        let up = loss(&probe, x, target);
        p[i] = params[i] - config.step;
        probe.set_params(&p);
        let down = loss(&probe, x, target);
        let numeric = (up - down) / (2.0 * config.step);
        let scale = a.abs().max(numeric.abs()).max(config.scale_floor);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}
