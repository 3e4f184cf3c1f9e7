use inrclass::crossval::stratified_folds;
use inrclass::mlp::{ActivationKind, TargetCoding};
use inrclass::preprocess::{run_pipeline, run_pipeline_traced};
use inrclass::{
    categorize_inr, total_loading, Cyp2c9, FeatureSet, Gender, RawRecord, ResponseClass,
    TherapeuticRange, Vkorc1,
};
use proptest::prelude::*;

fn maybe<T: std::fmt::Debug + Clone>(
    s: impl Strategy<Value = T>,
) -> impl Strategy<Value = Option<T>> {
    prop_oneof![1 => Just(None), 3 => s.prop_map(Some)]
}

fn raw_record() -> impl Strategy<Value = RawRecord> {
    let body = (
        maybe(18.0..95.0f64),
        maybe(prop_oneof![Just(Gender::Male), Just(Gender::Female)]),
        maybe(40.0..130.0f64),
        maybe(1.4..2.0f64),
        maybe(1.3..2.5f64),
        maybe(17.0..40.0f64),
        maybe(any::<bool>()),
        maybe(prop::sample::select(Vkorc1::ALL.to_vec())),
        maybe(prop::sample::select(Cyp2c9::ALL.to_vec())),
    );
    let doses = (
        maybe(0.0..15.0f64),
        maybe(0.0..15.0f64),
        maybe(0.0..15.0f64),
    );
    let inrs = (
        maybe(0.8..1.5f64),
        maybe(0.8..4.0f64),
        maybe(0.8..4.0f64),
        maybe(0.8..4.0f64),
        maybe(0.8..5.0f64),
        maybe(0.8..5.0f64),
    );
    (body, doses, inrs).prop_map(|(b, d, i)| RawRecord {
        patient_id: String::new(),
        age: b.0,
        gender: b.1,
        weight: b.2,
        height: b.3,
        bsa: b.4,
        bmi: b.5,
        amiodarone: b.6,
        vkorc1: b.7,
        cyp2c9: b.8,
        dose_day1: d.0,
        dose_day2: d.1,
        dose_day3: d.2,
        inr_baseline: i.0,
        inr_day4: i.1,
        inr_day5: i.2,
        inr_day6: i.3,
        inr_day7: i.4,
        inr_day8: i.5,
    })
}

proptest! {
    #[test]
    fn categorize_partitions_positive_inrs(inr in 1e-6..10.0f64, low in 0.5..3.0f64, width in 0.1..2.0f64) {
        let range = TherapeuticRange::new(low, low + width).unwrap();
        let class = categorize_inr(inr, &range).unwrap();
        let expected = if inr < range.low() {
            ResponseClass::Under
        } else if inr <= range.high() {
            ResponseClass::InRange
        } else {
            ResponseClass::Over
        };
        prop_assert_eq!(class, expected);
    }

    #[test]
    fn total_loading_is_symmetric(a in 0.0..20.0f64, b in 0.0..20.0f64, c in 0.0..20.0f64) {
        let t = total_loading(a, b, c);
        prop_assert_eq!(t, total_loading(c, a, b));
        prop_assert_eq!(t, total_loading(b, c, a));
        prop_assert_eq!(t == 0.0, a == 0.0 && b == 0.0 && c == 0.0);
    }

    #[test]
    fn folds_are_balanced_partitions(labels in prop::collection::vec(1u8..=3, 30..300), k in 2usize..=10, seed: u64) {
        let folds = stratified_folds(&labels, k, seed).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for f in 0..k {
            for i in folds.test_indices(f) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for class in 1..=3u8 {
            let counts: Vec<usize> = (0..k)
                .map(|f| folds.test_indices(f).iter().filter(|&&i| labels[i] == class).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} counts {:?}", class, counts);
        }
    }

    #[test]
    fn decoding_ignores_a_common_shift(output in -3.0..3.0f64, shift in -5.0..5.0f64) {
        let coding = TargetCoding::for_activation(ActivationKind::TanSig, 3).unwrap();
        let shifted = TargetCoding {
            codes: coding.codes.iter().map(|&(c, t)| (c, t + shift)).collect(),
        };
        prop_assert_eq!(coding.decode(output), shifted.decode(output + shift));
    }

    #[test]
    fn pipeline_accounts_for_every_record(raw in prop::collection::vec(raw_record(), 1..60)) {
        let range = TherapeuticRange::default();
        match run_pipeline_traced(&raw, &range, FeatureSet::Set1) {
            Ok((data, report, idx)) => {
                prop_assert_eq!(report.output_count + report.dropped_total(), raw.len());
                prop_assert_eq!(report.class_counts.values().sum::<usize>(), report.output_count);
                prop_assert_eq!(idx.len(), data.len());
                prop_assert!(data.records.iter().all(|r| r.features.iter().all(|v| v.is_finite())));

                // Survivors pass through a second time untouched.
                let survivors: Vec<RawRecord> = idx.iter().map(|&i| raw[i].clone()).collect();
                let (again, report2) = run_pipeline(&survivors, &range, FeatureSet::Set1).unwrap();
                prop_assert_eq!(again, data);
                prop_assert_eq!(report2.dropped_total(), 0);
            }
            Err(e) => prop_assert_eq!(e.to_string(), "empty dataset"),
        }
    }
}
