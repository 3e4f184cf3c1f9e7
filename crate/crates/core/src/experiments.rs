//! Search protocols over activations, learning rate × iterations and hidden
//! layer shapes, plus the five-way covariate ablation. Every cell runs the
//! same cross-validation with the same `k` and base seed; only the swept
//! parameter changes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossval::{run_cv_exec, CvReport, Execution};
use crate::error::{Error, Result};
use crate::mlp::{ActivationKind, MlpConfig};
use crate::model::{FeatureSet, RawRecord, TherapeuticRange};
use crate::preprocess::{build_variant_with_missing_class, run_pipeline, PreprocessReport};

pub const ACTIVATION_GRID_RATE: f64 = 0.15;
pub const ACTIVATION_GRID_ITERATIONS: usize = 100;
pub const DEFAULT_RATES: [f64; 6] = [0.005, 0.01, 0.04, 0.1, 0.15, 0.3];
pub const DEFAULT_ITERATIONS: [usize; 4] = [100, 500, 1000, 3000];

/// Label attached to published figures shown next to synthetic results.
pub const REFERENCE_LABEL: &str = "published result, original cohort (not reproducible here)";

/// A published number carried alongside a result for side-by-side display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub label: String,
    pub what: String,
    pub value: f64,
}

fn reference(what: &str, value: f64) -> ReferenceValue {
    ReferenceValue {
        label: REFERENCE_LABEL.to_string(),
        what: what.to_string(),
        value,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub row: String,
    pub col: String,
    pub average_accuracy: f64,
    pub diverged: bool,
    /// Absent for diverged cells.
    pub report: Option<CvReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub name: String,
    pub row_axis: String,
    pub col_axis: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major.
    pub cells: Vec<GridCell>,
    /// `(row, col)` of the highest accuracy, first in row-major order on ties.
    pub best: (usize, usize),
    pub references: Vec<ReferenceValue>,
}

/// Index of the first maximum; `None` for an empty slice.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

impl GridResult {
    fn build(
        name: &str,
        (row_axis, rows): (&str, Vec<String>),
        (col_axis, cols): (&str, Vec<String>),
        cells: Vec<GridCell>,
        references: Vec<ReferenceValue>,
    ) -> Self {
        debug_assert_eq!(cells.len(), rows.len() * cols.len());
        let acc: Vec<f64> = cells.iter().map(|c| c.average_accuracy).collect();
        let i = argmax_first(&acc).unwrap_or(0);
        let width = cols.len().max(1);
        Self {
            name: name.to_string(),
            row_axis: row_axis.to_string(),
            col_axis: col_axis.to_string(),
            rows,
            cols,
            cells,
            best: (i / width, i % width),
            references,
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> &GridCell {
        &self.cells[row * self.cols.len() + col]
    }

    pub fn best_cell(&self) -> &GridCell {
        self.cell(self.best.0, self.best.1)
    }

    /// Accuracy table with rows and columns labelled by axis values; the
    /// best cell is starred and diverged cells show `diverged`.
    pub fn to_text(&self) -> String {
        let label_w = self
            .rows
            .iter()
            .map(String::len)
            .chain([self.row_axis.len()])
            .max()
            .unwrap_or(0);
        let w = self.cols.iter().map(String::len).max().unwrap_or(0).max(9) + 2;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} (rows = {}, columns = {})",
            self.name, self.row_axis, self.col_axis
        );
        let _ = write!(s, "{:<label_w$}", self.row_axis);
        for c in &self.cols {
            let _ = write!(s, "{c:>w$}");
        }
        s.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "{row:<label_w$}");
            for c in 0..self.cols.len() {
                let cell = self.cell(r, c);
                let text = if cell.diverged {
                    "diverged".to_string()
                } else {
                    let star = if (r, c) == self.best { "*" } else { "" };
                    format!("{star}{:.3}", cell.average_accuracy)
                };
                let _ = write!(s, "{text:>w$}");
            }
            s.push('\n');
        }
        let best = self.best_cell();
        let _ = writeln!(
            s,
            "best: {} = {}, {} = {}, accuracy {:.3}",
            self.row_axis, best.row, self.col_axis, best.col, best.average_accuracy
        );
        for r in &self.references {
            let _ = writeln!(s, "{}: {} = {}", r.label, r.what, r.value);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},average_accuracy,diverged\n",
            self.row_axis, self.col_axis
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                c.row, c.col, c.average_accuracy, c.diverged
            );
        }
        s
    }
}

struct Job {
    row: String,
    col: String,
    config: MlpConfig,
    /// Divergence becomes a flagged cell instead of an error.
    isolate_divergence: bool,
}

fn run_jobs(
    jobs: Vec<Job>,
    data: &crate::preprocess::CleanDataset,
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<GridCell>> {
    let run = |job: &Job| -> Result<GridCell> {
        match run_cv_exec(&job.config, data, k, seed, Execution::Sequential) {
            Ok(report) => Ok(GridCell {
                row: job.row.clone(),
                col: job.col.clone(),
                average_accuracy: report.average_accuracy,
                diverged: false,
                report: Some(report),
            }),
            Err(e) if job.isolate_divergence && e.is_divergence() => Ok(GridCell {
                row: job.row.clone(),
                col: job.col.clone(),
                average_accuracy: 0.0,
                diverged: true,
                report: None,
            }),
            Err(e) => Err(e.context(format!("cell {} / {}", job.row, job.col))),
        }
    };
    match execution {
        Execution::Sequential => jobs.iter().map(run).collect(),
        Execution::Parallel => jobs.par_iter().map(run).collect(),
    }
}

fn base_config(data: &crate::preprocess::CleanDataset) -> Result<MlpConfig> {
    MlpConfig::default_for(data.feature_set.arity()).with_num_classes(data.num_classes)
}

/// All nine hidden × output activation pairs at a fixed short schedule.
pub fn activation_grid(
    data: &crate::preprocess::CleanDataset,
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<GridResult> {
    let base = base_config(data)?;
    let kinds = ActivationKind::ALL;
    let mut jobs = Vec::new();
    for hidden in kinds {
        for output in kinds {
            let mut config = base.clone().with_activations(hidden, output);
            config.learning_rate = ACTIVATION_GRID_RATE;
            config.iterations = ACTIVATION_GRID_ITERATIONS;
            jobs.push(Job {
                row: hidden.to_string(),
                col: output.to_string(),
                config,
                isolate_divergence: false,
            });
        }
    }
    let cells = run_jobs(jobs, data, k, seed, execution)?;
    let names = || kinds.iter().map(ToString::to_string).collect();
    Ok(GridResult::build(
        "activation grid",
        ("hidden", names()),
        ("output", names()),
        cells,
        vec![reference(
            "best cell (tansig/tansig) average accuracy",
            0.649,
        )],
    ))
}

/// Full cross product of learning rates and iteration counts; diverging
/// cells are flagged with accuracy 0.
pub fn rate_iteration_search(
    data: &crate::preprocess::CleanDataset,
    rates: &[f64],
    iteration_counts: &[usize],
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<GridResult> {
    if rates.is_empty() || iteration_counts.is_empty() {
        return Err(Error::Config(
            "rate and iteration axes must be nonempty".into(),
        ));
    }
    let base = base_config(data)?;
    let mut jobs = Vec::new();
    for &rate in rates {
        for &iterations in iteration_counts {
            let mut config = base.clone();
            config.learning_rate = rate;
            config.iterations = iterations;
            config.validate()?;
            jobs.push(Job {
                row: rate.to_string(),
                col: iterations.to_string(),
                config,
                isolate_divergence: true,
            });
        }
    }
    let cells = run_jobs(jobs, data, k, seed, execution)?;
    Ok(GridResult::build(
        "learning rate x iterations",
        ("rate", rates.iter().map(ToString::to_string).collect()),
        (
            "iterations",
            iteration_counts.iter().map(ToString::to_string).collect(),
        ),
        cells,
        vec![reference(
            "average accuracy at rate 0.04, 3000 iterations",
            0.835,
        )],
    ))
}

/// Hidden-layer shapes written as `5`, `10`, `5x5`.
pub fn shape_label(shape: &[usize]) -> String {
    shape
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

pub fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let shape: Vec<usize> = text
        .split(['x', ','])
        .map(|t| {
            t.trim().parse().map_err(|_| Error::Parse {
                field: "hidden layer shape",
                value: text.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Config(format!(
            "invalid hidden layer shape {text:?}"
        )));
    }
    Ok(shape)
}

pub fn default_shapes() -> Vec<Vec<usize>> {
    vec![
        vec![2],
        vec![5],
        vec![10],
        vec![20],
        vec![5, 5],
        vec![10, 5],
    ]
}

/// One CV run per hidden-layer shape at the default rate and iterations.
pub fn architecture_search(
    data: &crate::preprocess::CleanDataset,
    shapes: &[Vec<usize>],
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<GridResult> {
    if shapes.is_empty() {
        return Err(Error::Config(
            "architecture search needs at least one shape".into(),
        ));
    }
    let base = base_config(data)?;
    let mut jobs = Vec::new();
    for shape in shapes {
        let mut config = base.clone();
        config.hidden_layers = shape.clone();
        config.validate()?;
        jobs.push(Job {
            row: shape_label(shape),
            col: "accuracy".into(),
            config,
            isolate_divergence: false,
        });
    }
    let cells = run_jobs(jobs, data, k, seed, execution)?;
    Ok(GridResult::build(
        "architecture search",
        ("hidden", shapes.iter().map(|s| shape_label(s)).collect()),
        ("metric", vec!["accuracy".into()]),
        cells,
        Vec::new(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub preprocess: PreprocessReport,
    pub cv: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub sets: BTreeMap<FeatureSet, AblationEntry>,
    pub references: Vec<ReferenceValue>,
}

impl AblationResult {
    pub fn accuracy(&self, set: FeatureSet) -> f64 {
        self.sets[&set].cv.average_accuracy
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("set   arity  records  accuracy  recall(1,2,3)\n");
        for (set, entry) in &self.sets {
            let recalls: Vec<String> = entry
                .cv
                .per_class_recall
                .iter()
                .map(|r| r.map_or("-".to_string(), |v| format!("{:.1}%", v * 100.0)))
                .collect();
            let _ = writeln!(
                s,
                "{:<5} {:>5}  {:>7}  {:>8.3}  {}",
                set.to_string(),
                set.arity(),
                entry.preprocess.output_count,
                entry.cv.average_accuracy,
                recalls.join(" ")
            );
        }
        for r in &self.references {
            let _ = writeln!(s, "{}: {} = {}", r.label, r.what, r.value);
        }
        s
    }
}

/// Preprocess and cross-validate each of the five feature sets with the
/// default network.
pub fn ablation(
    raw: &[RawRecord],
    range: &TherapeuticRange,
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<AblationResult> {
    let run = |set: FeatureSet| -> Result<(FeatureSet, AblationEntry)> {
        let inner = || -> Result<AblationEntry> {
            let (data, preprocess) = run_pipeline(raw, range, set)?;
            let cv = run_cv_exec(&base_config(&data)?, &data, k, seed, Execution::Sequential)?;
            Ok(AblationEntry { preprocess, cv })
        };
        inner()
            .map(|e| (set, e))
            .map_err(|e| e.context(format!("feature set {set}")))
    };
    let entries: Result<Vec<_>> = match execution {
        Execution::Sequential => FeatureSet::ALL.iter().map(|&s| run(s)).collect(),
        Execution::Parallel => FeatureSet::ALL.par_iter().map(|&s| run(s)).collect(),
    };
    Ok(AblationResult {
        sets: entries?.into_iter().collect(),
        references: vec![
            reference("set5 recall, under range", 0.826),
            reference("set5 recall, in range", 0.883),
            reference("set5 recall, over range", 0.854),
            reference("set5 average accuracy", 0.863),
        ],
    })
}

/// Cross-validation of the uncleaned arm: missing outcomes kept as a fourth
/// class, interim gaps zero-filled, all sixteen covariates.
pub fn missing_class_run(
    raw: &[RawRecord],
    range: &TherapeuticRange,
    k: usize,
    seed: u64,
    execution: Execution,
) -> Result<CvReport> {
    let data = build_variant_with_missing_class(raw, range)?;
    run_cv_exec(&base_config(&data)?, &data, k, seed, execution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{CleanDataset, CleanRecord};

    fn toy() -> CleanDataset {
        let mut records = Vec::new();
        for i in 0..30 {
            let class = (i % 3) as u8 + 1;
            let x = f64::from(class) + (i as f64) * 0.01;
            records.push(CleanRecord {
                features: vec![x; FeatureSet::Set3.arity()],
                label: class,
            });
        }
        CleanDataset::new(FeatureSet::Set3, records).unwrap()
    }

    #[test]
    fn argmax_takes_first_maximum() {
        assert_eq!(argmax_first(&[0.5, 0.9, 0.9, 0.1]), Some(1));
        assert_eq!(argmax_first(&[]), None);
        assert_eq!(argmax_first(&[0.0, 0.0]), Some(0));
    }

    #[test]
    fn tied_grid_prefers_row_major_first() {
        let cell = |r: &str, c: &str, a: f64| GridCell {
            row: r.into(),
            col: c.into(),
            average_accuracy: a,
            diverged: false,
            report: None,
        };
        let g = GridResult::build(
            "tie",
            ("r", vec!["a".into(), "b".into()]),
            ("c", vec!["x".into(), "y".into()]),
            vec![
                cell("a", "x", 0.2),
                cell("a", "y", 0.7),
                cell("b", "x", 0.7),
                cell("b", "y", 0.1),
            ],
            Vec::new(),
        );
        assert_eq!(g.best, (0, 1));
        assert!(g.to_text().contains("*0.700"));
    }

    #[test]
    fn activation_grid_has_nine_cells_with_shared_cv_settings() {
        let g = activation_grid(&toy(), 3, 4, Execution::Parallel).unwrap();
        assert_eq!(g.cells.len(), 9);
        for c in &g.cells {
            let r = c.report.as_ref().unwrap();
            assert_eq!((r.k, r.seed), (3, 4));
            assert_eq!(r.config["learning_rate"], 0.15);
            assert!((0.0..=1.0).contains(&c.average_accuracy));
        }
    }

    #[test]
    fn rate_search_cardinality() {
        let g = rate_iteration_search(&toy(), &[0.04, 0.15], &[5, 50], 3, 0, Execution::Sequential)
            .unwrap();
        assert_eq!(g.cells.len(), 4);
        assert_eq!(g.cell(1, 0).row, "0.15");
        assert_eq!(g.cell(1, 0).col, "5");
        assert_eq!(g.to_csv().lines().count(), 5);
    }

    #[test]
    fn divergence_is_isolated_to_its_cell() {
        let data = toy();
        let linear = base_config(&data)
            .unwrap()
            .with_activations(ActivationKind::PureLin, ActivationKind::PureLin);
        let job = |rate: f64, isolate_divergence: bool| Job {
            row: rate.to_string(),
            col: "200".into(),
            config: MlpConfig {
                learning_rate: rate,
                iterations: 200,
                ..linear.clone()
            },
            isolate_divergence,
        };
        let cells = run_jobs(
            vec![job(0.01, true), job(50.0, true)],
            &data,
            3,
            0,
            Execution::Sequential,
        )
        .unwrap();
        assert!(!cells[0].diverged);
        assert!(cells[1].diverged);
        assert_eq!(cells[1].average_accuracy, 0.0);
        assert!(cells[1].report.is_none());

        let err = run_jobs(vec![job(50.0, false)], &data, 3, 0, Execution::Sequential).unwrap_err();
        assert!(err.is_divergence());
        assert!(err.to_string().contains("cell 50 / 200"));
    }

    #[test]
    fn empty_axes_rejected() {
        assert!(rate_iteration_search(&toy(), &[], &[5], 3, 0, Execution::Sequential).is_err());
        assert!(architecture_search(&toy(), &[], 3, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn shapes() {
        assert_eq!(parse_shape("5x5").unwrap(), vec![5, 5]);
        assert_eq!(parse_shape("10").unwrap(), vec![10]);
        assert!(parse_shape("0").is_err());
        assert!(parse_shape("a").is_err());
        assert_eq!(shape_label(&[10, 5]), "10x5");
        assert!(default_shapes().contains(&vec![5]));
    }

    #[test]
    fn parallel_matches_sequential() {
        let data = toy();
        let shapes = [vec![2], vec![3]];
        let a = architecture_search(&data, &shapes, 3, 1, Execution::Sequential).unwrap();
        let b = architecture_search(&data, &shapes, 3, 1, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2);
    }
}
