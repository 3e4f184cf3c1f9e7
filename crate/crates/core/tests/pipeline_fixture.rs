//! The twelve-record fixture, traced by hand through the cleaning rules.
//!
//! r01, r02: no height/weight/BMI/age/sex          -> body/demo exclusion
//! r03:      no doses                              -> loading exclusion
//! r04:      no day 6, 7 or 8 INR                  -> unrecoverable outcome
//! r05:      no day 4, 5 or 6 INR                  -> interim exclusion
//! r06..r12 survive; r07 takes day 8, r08 takes day 6.

use std::path::PathBuf;

use inrclass::io::read_raw_csv_file;
use inrclass::preprocess::{
    build_variant_with_missing_class, run_pipeline, run_pipeline_traced, stage_exclude_body_demo,
    stage_exclude_loading,
};
use inrclass::{FeatureSet, RawRecord, TherapeuticRange};

fn fixture() -> Vec<RawRecord> {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pipeline_fixture.csv");
    read_raw_csv_file(path).unwrap()
}

#[test]
fn stage_counts_and_labels() {
    let raw = fixture();
    let (data, report) =
        run_pipeline(&raw, &TherapeuticRange::default(), FeatureSet::Set5).unwrap();
    assert_eq!(report.input_count, 12);
    assert_eq!(report.dropped_body_demo, 2);
    assert_eq!(report.dropped_loading, 1);
    assert_eq!(report.dropped_day7_unrecoverable, 1);
    assert_eq!(report.dropped_interim, 1);
    assert_eq!(report.imputed_from_day8, 1);
    assert_eq!(report.imputed_from_day6, 1);
    assert_eq!(report.output_count, 7);
    assert_eq!(
        report.dropped_total() + report.output_count,
        report.input_count
    );
    assert_eq!(data.labels(), vec![2, 2, 1, 1, 3, 2, 3]);
    assert_eq!(
        report.class_counts.into_iter().collect::<Vec<_>>(),
        vec![(1, 2), (2, 3), (3, 2)]
    );
    assert!(report.warnings.is_empty());
}

#[test]
fn survivors_keep_input_order() {
    let (_, _, idx) =
        run_pipeline_traced(&fixture(), &TherapeuticRange::default(), FeatureSet::Set1).unwrap();
    assert_eq!(idx, vec![5, 6, 7, 8, 9, 10, 11]);
}

#[test]
fn zero_fill_count() {
    // r06..r12 missing cells among the sixteen covariates:
    // r07 d5; r08 d5; r09 bsa bmi; r10 dose2 dose3 d5 d6; r11 sex weight height bsa bmi
    let (_, report) =
        run_pipeline(&fixture(), &TherapeuticRange::default(), FeatureSet::Set1).unwrap();
    assert_eq!(report.zero_filled_cells, 1 + 1 + 2 + 4 + 5);
}

#[test]
fn set5_projection_of_partial_dose_record() {
    let (data, _) =
        run_pipeline(&fixture(), &TherapeuticRange::default(), FeatureSet::Set5).unwrap();
    // r10 is the fifth survivor; its missing doses count as 0 in total_loading.
    assert_eq!(
        data.records[4].features,
        vec![55.0, 1.0, 95.0, 1.85, 2.21, 27.8, 0.0, 2.0, 1.0, 10.0, 0.0, 0.0, 1.0, 10.0]
    );
    assert_eq!(
        data.column_names.last().map(String::as_str),
        Some("total_loading")
    );
}

#[test]
fn exclusion_order_matters() {
    // r02 lacks both demographics and doses, so it is counted by whichever
    // of the two exclusions runs first.
    let raw = fixture();
    let (after_body, body) = stage_exclude_body_demo(raw.clone());
    let (_, loading) = stage_exclude_loading(after_body);
    assert_eq!((body, loading), (2, 1));
    let (after_loading, loading_first) = stage_exclude_loading(raw);
    let (_, body_second) = stage_exclude_body_demo(after_loading);
    assert_eq!((loading_first, body_second), (2, 1));
}

#[test]
fn report_text_is_reproducible() {
    let raw = fixture();
    let a = run_pipeline(&raw, &TherapeuticRange::default(), FeatureSet::Set5)
        .unwrap()
        .1;
    let b = run_pipeline(&fixture(), &TherapeuticRange::default(), FeatureSet::Set5)
        .unwrap()
        .1;
    assert_eq!(a.to_text(), b.to_text());
    assert!(a.to_text().starts_with("input_count=12\n"));
}

#[test]
fn missing_class_variant() {
    let data = build_variant_with_missing_class(&fixture(), &TherapeuticRange::default()).unwrap();
    // r04..r12: no interim exclusion and no day-7 fallback.
    assert_eq!(data.labels(), vec![4, 2, 2, 4, 4, 1, 3, 2, 3]);
    assert_eq!(data.num_classes, 4);
    assert_eq!(data.feature_set, FeatureSet::Set1);
}

#[test]
fn narrower_range_relabels() {
    let range: TherapeuticRange = "2.0:2.4".parse().unwrap();
    let (data, _) = run_pipeline(&fixture(), &range, FeatureSet::Set3).unwrap();
    // day-7 values 2.5 2.4 1.8 1.5 3.4 2.0 3.01
    assert_eq!(data.labels(), vec![3, 2, 1, 1, 3, 2, 3]);
}
