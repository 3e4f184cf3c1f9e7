//! Stratified k-fold cross-validation with fold-averaged confusion
//! matrices.
//!
//! Matrices are oriented with columns indexing the true class and rows the
//! predicted class.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{train, MlpConfig, MlpModel};
use crate::preprocess::{CleanDataset, CleanRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold index of each record, in record order.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Shuffles each class (seeded) and deals its records round-robin across
/// folds. The deal continues from where the previous class stopped, so fold
/// sizes also stay within one of each other.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::Config(format!(
            "{} records cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment {
        k,
        assignment,
        seed,
    })
}

/// Square matrix, `cells[pred][truth]`, classes indexed from code 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub cells: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            cells: vec![vec![0.0; n]; n],
        }
    }

    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn record(&mut self, predicted: u8, truth: u8) {
        let n = self.size();
        let (p, t) = (predicted as usize, truth as usize);
        assert!(
            (1..=n).contains(&p) && (1..=n).contains(&t),
            "class code out of range"
        );
        self.cells[p - 1][t - 1] += 1.0;
    }

    pub fn get(&self, predicted: u8, truth: u8) -> f64 {
        self.cells[predicted as usize - 1][truth as usize - 1]
    }

    pub fn column_sum(&self, truth: u8) -> f64 {
        self.cells.iter().map(|row| row[truth as usize - 1]).sum()
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.size()).map(|i| self.cells[i][i]).sum()
    }

    /// Diagonal over column sum; `None` when the class never occurs.
    pub fn recall(&self, truth: u8) -> Option<f64> {
        let col = self.column_sum(truth);
        (col > 0.0).then(|| self.get(truth, truth) / col)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0.0).then(|| self.trace() / total)
    }

    /// Cell-wise mean.
    pub fn mean(matrices: &[ConfusionMatrix]) -> ConfusionMatrix {
        let n = matrices.first().map_or(0, ConfusionMatrix::size);
        let mut out = ConfusionMatrix::zeros(n);
        for m in matrices {
            for (orow, row) in out.cells.iter_mut().zip(&m.cells) {
                for (o, v) in orow.iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        let k = matrices.len().max(1) as f64;
        out.cells.iter_mut().flatten().for_each(|v| *v /= k);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub per_fold_matrices: Vec<ConfusionMatrix>,
    pub averaged_matrix: ConfusionMatrix,
    /// Recall per class code; `None` when the class never occurs.
    pub per_class_recall: Vec<Option<f64>>,
    /// Mean of the per-fold accuracies.
    pub average_accuracy: f64,
    pub config: serde_json::Value,
}

impl CvReport {
    pub fn recall(&self, code: u8) -> Option<f64> {
        self.per_class_recall
            .get(code as usize - 1)
            .copied()
            .flatten()
    }
}

/// A fitted model usable on feature vectors.
pub trait Classifier {
    fn predict(&self, features: &[f64]) -> Result<u8>;
}

impl Classifier for MlpModel {
    fn predict(&self, features: &[f64]) -> Result<u8> {
        self.predict_class(features)
    }
}

/// Produces a classifier from a training split.
pub trait Learner: Sync {
    type Model: Classifier;

    fn fit(&self, train: &[CleanRecord], seed: u64) -> Result<Self::Model>;

    /// Configuration echoed into the report.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Trains a perceptron per fold; the fold seed replaces `config.seed`.
#[derive(Debug, Clone)]
pub struct MlpLearner {
    pub config: MlpConfig,
}

impl Learner for MlpLearner {
    type Model = MlpModel;

    fn fit(&self, train_set: &[CleanRecord], seed: u64) -> Result<MlpModel> {
        let mut cfg = self.config.clone();
        cfg.seed = seed;
        Ok(train(&cfg, train_set)?.0)
    }

    fn describe(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.config).unwrap_or_default();
        if let Some(obj) = v.as_object_mut() {
            obj.remove("seed");
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// Folds run on the rayon pool; results are identical to sequential.
    Parallel,
}

/// Cross-validates the default perceptron learner.
pub fn run_cv(config: &MlpConfig, data: &CleanDataset, k: usize, seed: u64) -> Result<CvReport> {
    run_cv_exec(config, data, k, seed, Execution::Sequential)
}

/// [`run_cv`] with a choice of fold execution.
pub fn run_cv_exec(
    config: &MlpConfig,
    data: &CleanDataset,
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<CvReport> {
    let config = if config.target_coding.num_classes() != data.num_classes as usize {
        config.clone().with_num_classes(data.num_classes)?
    } else {
        config.clone()
    };
    run_cv_with(&MlpLearner { config }, data, k, seed, execution)
}

/// Fold `i` trains on every other fold with seed `seed + i` and is scored
/// on its own records.
pub fn run_cv_with<L: Learner>(
    learner: &L,
    data: &CleanDataset,
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<CvReport> {
    let labels = data.labels();
    let folds = stratified_folds(&labels, k, seed)?;
    let n_classes = data.num_classes as usize;

    let run_fold = |fold: usize| -> Result<ConfusionMatrix> {
        let train_set: Vec<CleanRecord> = folds
            .train_indices(fold)
            .into_iter()
            .map(|i| data.records[i].clone())
            .collect();
        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let model = learner
            .fit(&train_set, seed.wrapping_add(fold as u64))
            .map_err(wrap)?;
        let mut m = ConfusionMatrix::zeros(n_classes);
        for i in folds.test_indices(fold) {
            let r = &data.records[i];
            let predicted = model.predict(&r.features).map_err(wrap)?;
            if predicted == 0 || predicted as usize > n_classes {
                return Err(wrap(Error::Domain(format!(
                    "predicted class {predicted} outside 1..={n_classes}"
                ))));
            }
            m.record(predicted, r.label);
        }
        Ok(m)
    };

    let per_fold: Vec<ConfusionMatrix> = match execution {
        Execution::Sequential => (0..k).map(run_fold).collect::<Result<_>>()?,
        Execution::Parallel => (0..k)
            .into_par_iter()
            .map(run_fold)
            .collect::<Result<_>>()?,
    };

    let averaged = ConfusionMatrix::mean(&per_fold);
    let per_class_recall = (1..=n_classes as u8).map(|c| averaged.recall(c)).collect();
    let average_accuracy = per_fold
        .iter()
        .map(|m| m.accuracy().unwrap_or(0.0))
        .sum::<f64>()
        / k as f64;
    Ok(CvReport {
        k,
        seed,
        per_fold_matrices: per_fold,
        averaged_matrix: averaged,
        per_class_recall,
        average_accuracy,
        config: learner.describe(),
    })
}

/// Renders the averaged matrix, recall row and average accuracy as a text
/// table. Cells carry one decimal; recall is a percentage with one decimal,
/// or an em dash when the class never occurs.
pub fn format_confusion(report: &CvReport) -> String {
    format_matrix(&report.averaged_matrix, report.average_accuracy)
}

pub fn format_matrix(matrix: &ConfusionMatrix, average_accuracy: f64) -> String {
    const W: usize = 10;
    let n = matrix.size();
    let mut s = String::new();
    let _ = writeln!(s, "columns = true class, rows = predicted class");
    let _ = write!(s, "{:<W$}", "");
    for t in 1..=n {
        let _ = write!(s, "{:>W$}", format!("true {t}"));
    }
    s.push('\n');
    for p in 1..=n {
        let _ = write!(s, "{:<W$}", format!("pred {p}"));
        for t in 1..=n {
            let _ = write!(s, "{:>W$.1}", matrix.get(p as u8, t as u8));
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<W$}", "recall");
    for t in 1..=n {
        let cell = match matrix.recall(t as u8) {
            Some(r) => format!("{:.1}%", r * 100.0),
            None => "—".to_string(),
        };
        let _ = write!(s, "{:>W$}", cell);
    }
    s.push('\n');
    let _ = writeln!(s, "average accuracy {:.1}%", average_accuracy * 100.0);
    s
}
