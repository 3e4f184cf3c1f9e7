use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{
    analytic_derivative, fit_scaling, Gradient, MlpConfig, MlpModel, Scratch, UpdateRule,
};
use crate::error::{Error, Result};
use crate::preprocess::CleanRecord;

/// Half-width of the uniform weight initialisation interval.
pub const INIT_BOUND: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error over the training set at the start of each epoch.
    pub mse: Vec<f64>,
    pub final_accuracy: f64,
    pub epochs_run: usize,
}

/// Seeded initial network for `config`, before any scaling or training.
pub fn initial_model(config: &MlpConfig) -> Result<MlpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    MlpModel::initialize(config.clone(), INIT_BOUND, &mut rng)
}

/// Trains by gradient descent on the mean squared error between the output
/// node and each record's coded target. Runs exactly `config.iterations`
/// epochs.
pub fn train(config: &MlpConfig, records: &[CleanRecord]) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut targets = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.features.len() != config.input_arity {
            return Err(Error::Shape(format!(
                "record {i} has {} features, config expects {}",
                r.features.len(),
                config.input_arity
            )));
        }
        let t = config.target_coding.target(r.label).ok_or_else(|| {
            Error::Domain(format!("record {i} label {} has no target code", r.label))
        })?;
        targets.push(t);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::initialize(config.clone(), INIT_BOUND, &mut rng)?;
    model.input_scaling = fit_scaling(
        records.iter().map(|r| r.features.as_slice()),
        config.input_arity,
    );
    let inputs: Vec<Vec<f64>> = records.iter().map(|r| model.scale(&r.features)).collect();

    let n = records.len();
    let mut scratch = Scratch::new(&model);
    let mut grad = Gradient::zeros_like(&model);
    let mut mse = Vec::with_capacity(config.iterations);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.iterations {
        let mut sq_err = 0.0;
        match config.update {
            UpdateRule::FullBatch => {
                grad.clear();
                let w = 1.0 / n as f64;
                for (x, &t) in inputs.iter().zip(&targets) {
                    let y = model.accumulate_gradient(
                        x,
                        t,
                        w,
                        &analytic_derivative,
                        &mut scratch,
                        &mut grad,
                    );
                    sq_err += (y - t) * (y - t);
                }
                apply_step(&mut model, &grad, config.learning_rate);
            }
            UpdateRule::Online => {
                order.shuffle(&mut rng);
                for &i in &order {
                    grad.clear();
                    let y = model.accumulate_gradient(
                        &inputs[i],
                        targets[i],
                        1.0,
                        &analytic_derivative,
                        &mut scratch,
                        &mut grad,
                    );
                    sq_err += (y - targets[i]) * (y - targets[i]);
                    apply_step(&mut model, &grad, config.learning_rate);
                }
            }
        }
        let loss = sq_err / n as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        mse.push(loss);
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence {
            epoch: config.iterations,
            loss: f64::NAN,
        });
    }

    let mut scratch = Scratch::new(&model);
    let correct = inputs
        .iter()
        .zip(records)
        .filter(|(x, r)| {
            config
                .target_coding
                .decode(model.forward_into(x, &mut scratch))
                == r.label
        })
        .count();
    let report = TrainReport {
        mse,
        final_accuracy: correct as f64 / n as f64,
        epochs_run: config.iterations,
    };
    Ok((model, report))
}

fn apply_step(model: &mut MlpModel, grad: &Gradient, lr: f64) {
    for ((layer, gw), gb) in model.layers.iter_mut().zip(&grad.weights).zip(&grad.biases) {
        for (w, g) in layer.weights.iter_mut().zip(gw) {
            *w -= lr * g;
        }
        for (b, g) in layer.biases.iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }
}
