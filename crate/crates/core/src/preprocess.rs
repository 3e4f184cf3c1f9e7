//! The cleaning pipeline that turns raw cohort records into a modelling
//! table: staged exclusions, day-7 outcome imputation, categorisation,
//! zero-fill, total-loading derivation and feature-set projection.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    categorize_inr, Column, FeatureSet, RawRecord, ResponseClass, TherapeuticRange,
};

/// Label code given to records with no day-7 INR in the data-quality variant.
pub const MISSING_OUTCOME_CODE: u8 = 4;

/// A fully numeric instance. `label` is a class code: 1..=3 for
/// [`ResponseClass`], 4 only in the missing-outcome variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub features: Vec<f64>,
    pub label: u8,
}

impl CleanRecord {
    pub fn response_class(&self) -> Option<ResponseClass> {
        ResponseClass::from_code(self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanDataset {
    pub feature_set: FeatureSet,
    pub column_names: Vec<String>,
    pub records: Vec<CleanRecord>,
    /// Number of class codes the labels range over (3, or 4 for the variant).
    pub num_classes: u8,
}

impl CleanDataset {
    pub fn new(feature_set: FeatureSet, records: Vec<CleanRecord>) -> Result<Self> {
        Self::with_classes(feature_set, records, 3)
    }

    pub fn with_classes(
        feature_set: FeatureSet,
        records: Vec<CleanRecord>,
        num_classes: u8,
    ) -> Result<Self> {
        let arity = feature_set.arity();
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != arity {
                return Err(Error::Shape(format!(
                    "record {i} has {} features, {feature_set} needs {arity}",
                    r.features.len()
                )));
            }
            if let Some(v) = r.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "record {i} has non-finite feature {v}"
                )));
            }
            if r.label == 0 || r.label > num_classes {
                return Err(Error::Domain(format!(
                    "record {i} has label {} outside 1..={num_classes}",
                    r.label
                )));
            }
        }
        Ok(Self {
            feature_set,
            column_names: feature_set.column_names(),
            records,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label).or_insert(0) += 1;
        }
        counts
    }
}

/// Stage-by-stage record accounting for one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input_count: usize,
    pub dropped_body_demo: usize,
    pub dropped_loading: usize,
    pub dropped_day7_unrecoverable: usize,
    pub dropped_interim: usize,
    pub imputed_from_day8: usize,
    pub imputed_from_day6: usize,
    pub zero_filled_cells: usize,
    pub output_count: usize,
    pub class_counts: BTreeMap<u8, usize>,
    pub warnings: Vec<String>,
}

impl PreprocessReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped_body_demo
            + self.dropped_loading
            + self.dropped_day7_unrecoverable
            + self.dropped_interim
    }

    /// Flat `key=value` rendering, one line per field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_count={}", self.input_count);
        let _ = writeln!(s, "dropped_body_demo={}", self.dropped_body_demo);
        let _ = writeln!(s, "dropped_loading={}", self.dropped_loading);
        let _ = writeln!(
            s,
            "dropped_day7_unrecoverable={}",
            self.dropped_day7_unrecoverable
        );
        let _ = writeln!(s, "dropped_interim={}", self.dropped_interim);
        let _ = writeln!(s, "imputed_from_day8={}", self.imputed_from_day8);
        let _ = writeln!(s, "imputed_from_day6={}", self.imputed_from_day6);
        let _ = writeln!(s, "zero_filled_cells={}", self.zero_filled_cells);
        let _ = writeln!(s, "output_count={}", self.output_count);
        for (code, n) in &self.class_counts {
            let _ = writeln!(s, "class_{code}={n}");
        }
        for (i, w) in self.warnings.iter().enumerate() {
            let _ = writeln!(s, "warning_{i}={w}");
        }
        s
    }
}

fn all_missing(values: &[Option<f64>]) -> bool {
    values.iter().all(Option::is_none)
}

fn retain_counting<T>(records: Vec<T>, keep: impl Fn(&T) -> bool) -> (Vec<T>, usize) {
    let before = records.len();
    let kept: Vec<T> = records.into_iter().filter(|r| keep(r)).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Drops records missing all of height, weight, BMI, sex and age.
pub fn stage_exclude_body_demo<T: Borrow<RawRecord>>(records: Vec<T>) -> (Vec<T>, usize) {
    retain_counting(records, |r| {
        let r = r.borrow();
        !(all_missing(&[r.height, r.weight, r.bmi, r.age]) && r.gender.is_none())
    })
}

/// Drops records missing all three loading doses.
pub fn stage_exclude_loading<T: Borrow<RawRecord>>(records: Vec<T>) -> (Vec<T>, usize) {
    retain_counting(records, |r| {
        let r = r.borrow();
        !all_missing(&[r.dose_day1, r.dose_day2, r.dose_day3])
    })
}

/// Drops records missing all interim INRs (days 4, 5 and 6).
pub fn stage_exclude_interim<T: Borrow<RawRecord>>(records: Vec<T>) -> (Vec<T>, usize) {
    retain_counting(records, |r| {
        let r = r.borrow();
        !all_missing(&[r.inr_day4, r.inr_day5, r.inr_day6])
    })
}

/// Where an outcome INR came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Day7Source {
    Day7,
    Day8,
    Day6,
}

/// Day-7 INR, falling back to day 8 then day 6.
pub fn impute_day7(record: &RawRecord) -> Option<f64> {
    impute_day7_with_source(record).map(|(v, _)| v)
}

pub fn impute_day7_with_source(record: &RawRecord) -> Option<(f64, Day7Source)> {
    record
        .inr_day7
        .map(|v| (v, Day7Source::Day7))
        .or_else(|| record.inr_day8.map(|v| (v, Day7Source::Day8)))
        .or_else(|| record.inr_day6.map(|v| (v, Day7Source::Day6)))
}

/// Every covariate column plus total loading after zero-fill, indexed by
/// [`Column`] discriminant.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledRow([f64; 17]);

impl FilledRow {
    pub fn get(&self, column: Column) -> f64 {
        self.0[column as usize]
    }

    pub fn project(&self, feature_set: FeatureSet) -> Vec<f64> {
        feature_set
            .included_columns()
            .into_iter()
            .map(|c| self.get(c))
            .collect()
    }
}

/// Replaces each missing covariate with 0 and returns the row with the
/// number of cells filled. Total loading is summed after the fill.
pub fn zero_fill(record: &RawRecord) -> (FilledRow, usize) {
    let mut row = [0.0; 17];
    let mut filled = 0;
    for c in Column::COVARIATES {
        match record.covariate(c) {
            Some(v) => row[c as usize] = v,
            None => filled += 1,
        }
    }
    row[Column::TotalLoading as usize] =
        row[Column::Dose1 as usize] + row[Column::Dose2 as usize] + row[Column::Dose3 as usize];
    (FilledRow(row), filled)
}

struct Labelled {
    index: usize,
    record: RawRecord,
    label: ResponseClass,
}

impl Borrow<RawRecord> for Labelled {
    fn borrow(&self) -> &RawRecord {
        &self.record
    }
}

struct Indexed(usize, RawRecord);

impl Borrow<RawRecord> for Indexed {
    fn borrow(&self) -> &RawRecord {
        &self.1
    }
}

/// Runs the full cleaning flow and projects onto `feature_set`.
pub fn run_pipeline(
    raw: &[RawRecord],
    range: &TherapeuticRange,
    feature_set: FeatureSet,
) -> Result<(CleanDataset, PreprocessReport)> {
    run_pipeline_traced(raw, range, feature_set).map(|(d, r, _)| (d, r))
}

/// As [`run_pipeline`], also returning the input index of each output record.
pub fn run_pipeline_traced(
    raw: &[RawRecord],
    range: &TherapeuticRange,
    feature_set: FeatureSet,
) -> Result<(CleanDataset, PreprocessReport, Vec<usize>)> {
    let mut report = PreprocessReport {
        input_count: raw.len(),
        ..Default::default()
    };

    let indexed = raw
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, r)| Indexed(i, r))
        .collect();
    let (records, dropped) = stage_exclude_body_demo(indexed);
    report.dropped_body_demo = dropped;
    let (records, dropped) = stage_exclude_loading(records);
    report.dropped_loading = dropped;

    let mut labelled = Vec::with_capacity(records.len());
    for Indexed(index, mut record) in records {
        let Some((inr, source)) = impute_day7_with_source(&record) else {
            report.dropped_day7_unrecoverable += 1;
            continue;
        };
        match source {
            Day7Source::Day7 => {}
            Day7Source::Day8 => report.imputed_from_day8 += 1,
            Day7Source::Day6 => report.imputed_from_day6 += 1,
        }
        record.inr_day7 = Some(inr);
        let label = categorize_inr(inr, range)
            .map_err(|e| e.context(format!("record {:?}", record.patient_id)))?;
        labelled.push(Labelled {
            index,
            record,
            label,
        });
    }

    let (labelled, dropped) = stage_exclude_interim(labelled);
    report.dropped_interim = dropped;

    let mut out = Vec::with_capacity(labelled.len());
    let mut indices = Vec::with_capacity(labelled.len());
    for item in labelled {
        let (row, filled) = zero_fill(&item.record);
        report.zero_filled_cells += filled;
        indices.push(item.index);
        out.push(CleanRecord {
            features: row.project(feature_set),
            label: item.label.code(),
        });
    }

    report.output_count = out.len();
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dataset = CleanDataset::new(feature_set, out)?;
    report.class_counts = dataset.class_counts();
    for class in ResponseClass::ALL {
        if !report.class_counts.contains_key(&class.code()) {
            report
                .warnings
                .push(format!("class {} ({class}) has no records", class.code()));
        }
    }
    Ok((dataset, report, indices))
}

/// The uncleaned comparison arm: only the body/demographic and loading
/// exclusions apply, records without a day-7 INR are labelled
/// [`MISSING_OUTCOME_CODE`], and every other gap is zero-filled. Uses the
/// full sixteen-covariate set.
pub fn build_variant_with_missing_class(
    raw: &[RawRecord],
    range: &TherapeuticRange,
) -> Result<CleanDataset> {
    let (records, _) = stage_exclude_body_demo(raw.to_vec());
    let (records, _) = stage_exclude_loading(records);
    let mut out = Vec::with_capacity(records.len());
    for record in &records {
        let label = match record.inr_day7 {
            Some(inr) => categorize_inr(inr, range)?.code(),
            None => MISSING_OUTCOME_CODE,
        };
        let (row, _) = zero_fill(record);
        out.push(CleanRecord {
            features: row.project(FeatureSet::Set1),
            label,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    CleanDataset::with_classes(FeatureSet::Set1, out, MISSING_OUTCOME_CODE)
}
