//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use inrclass::crossval::{
    format_confusion, run_cv, stratified_folds, ConfusionMatrix, CvReport, Execution,
};
use inrclass::experiments::{ablation, missing_class_run};
use inrclass::io::read_raw_csv_file;
use inrclass::mlp::{check_gradients, train, ActivationKind, GradCheckConfig, MlpConfig};
use inrclass::predict::{PredictRequest, WhatIfRequest};
use inrclass::preprocess::run_pipeline;
use inrclass::store::{train_document, LoadedModel};
use inrclass::synth::{
    generate_patients, oracle_accuracy, CohortSpec, LatentInputs, LatentResponseModel,
    SyntheticPatient,
};
use inrclass::{CleanRecord, FeatureSet, RawRecord, TherapeuticRange};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use common::{check_twice, http, make_artifacts};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Result<String, String> {
    let s = elapsed.as_secs_f64();
    ensure(s < limit_s, format!("{detail}; {s:.2} s of {limit_s} s"))
}

fn default_patients() -> Vec<SyntheticPatient> {
    generate_patients(&CohortSpec::default(), &LatentResponseModel::default()).unwrap()
}

fn observed(patients: &[SyntheticPatient]) -> Vec<RawRecord> {
    patients.iter().map(|p| p.observed.clone()).collect()
}

fn gradient_oracle() -> Result<String, String> {
    let start = Instant::now();
    let report = check_gradients(&GradCheckConfig::default(), 120, 2024);
    let elapsed = start.elapsed();
    let detail = format!(
        "{} nets, {} parameters, max relative deviation {:.2e}",
        report.nets_checked, report.params_checked, report.max_rel_deviation
    );
    if report.nets_checked < 900 || report.max_rel_deviation > 1e-6 {
        return Err(detail);
    }
    within(elapsed, 10.0, detail)
}

fn stratification() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0usize;
    for trial in 0..1000u64 {
        let n = rng.random_range(30..=600);
        let weights: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let total: f64 = weights.iter().sum();
        let labels: Vec<u8> = (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                if u < weights[0] {
                    1
                } else if u < weights[0] + weights[1] {
                    2
                } else {
                    3
                }
            })
            .collect();
        let folds = stratified_folds(&labels, 10, trial).map_err(|e| e.to_string())?;
        for class in 1..=3u8 {
            let mut counts = [0usize; 10];
            for (i, &l) in labels.iter().enumerate() {
                if l == class {
                    counts[folds.assignment[i]] += 1;
                }
            }
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            worst = worst.max(spread);
        }
    }
    let detail = format!("1000 label vectors, worst per-class fold spread {worst}");
    if worst > 1 {
        return Err(detail);
    }
    within(start.elapsed(), 5.0, detail)
}

fn preprocessing_fixture() -> Result<String, String> {
    let raw = read_raw_csv_file(common::fixture_path()).map_err(|e| e.to_string())?;
    let range = TherapeuticRange::default();
    let (data, report) = run_pipeline(&raw, &range, FeatureSet::Set5).map_err(|e| e.to_string())?;
    let stages = [
        report.input_count,
        report.dropped_body_demo,
        report.dropped_loading,
        report.dropped_day7_unrecoverable,
        report.dropped_interim,
        report.imputed_from_day8,
        report.imputed_from_day6,
        report.output_count,
    ];
    if stages != [12, 2, 1, 1, 1, 1, 1, 7] {
        return Err(format!("stage counts {stages:?}"));
    }
    if data.labels() != [2, 2, 1, 1, 3, 2, 3] {
        return Err(format!("labels {:?}", data.labels()));
    }

    let mut texts = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        std::fs::copy(common::fixture_path(), dir.path().join("f.csv"))
            .map_err(|e| e.to_string())?;
        let out = common::run_in(
            dir.path(),
            &["preprocess", "f.csv", "--seed", "4", "--out", "o"],
        );
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).to_string());
        }
        texts.push(std::fs::read(dir.path().join("o/report.txt")).map_err(|e| e.to_string())?);
    }
    ensure(
        texts[0] == texts[1] && texts[0] == report.to_text().as_bytes(),
        "output_count=7, stage drops 2/1/1/1, labels 2 2 1 1 3 2 3, report identical across runs"
            .to_string(),
    )
}

fn separable_toy() -> Result<String, String> {
    let mut records = Vec::new();
    for class in 0..3u8 {
        for i in 0..10 {
            records.push(CleanRecord {
                features: vec![
                    f64::from(class) * 10.0 + f64::from(i) * 0.6,
                    f64::from((i * 7) % 5),
                ],
                label: class + 1,
            });
        }
    }
    let cfg = MlpConfig::default_for(2);
    let is_final = cfg.hidden_layers == [5]
        && cfg.hidden_activation == ActivationKind::TanSig
        && cfg.output_activation == ActivationKind::TanSig
        && cfg.learning_rate == 0.04
        && cfg.iterations == 3000;
    if !is_final {
        return Err("default configuration drifted".into());
    }
    let start = Instant::now();
    let (_, report) = train(&cfg, &records).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!("30 points, training accuracy {:.3}", report.final_accuracy);
    if report.final_accuracy != 1.0 {
        return Err(detail);
    }
    within(elapsed, 5.0, detail)
}

fn synthetic_protocol() -> Result<String, String> {
    let start = Instant::now();
    let patients = default_patients();
    let range = TherapeuticRange::default();
    let (data, _) =
        run_pipeline(&observed(&patients), &range, FeatureSet::Set5).map_err(|e| e.to_string())?;
    let cfg = MlpConfig::default_for(FeatureSet::Set5.arity());
    let cv = run_cv(&cfg, &data, 10, 0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let oracle = oracle_accuracy(&LatentResponseModel::default(), &patients, &range)
        .map_err(|e| e.to_string())?;
    let acc = cv.average_accuracy;
    let detail = format!(
        "n=300 -> {} records, CV accuracy {acc:.3}, oracle {oracle:.3}, gap {:.1} points",
        data.len(),
        (oracle - acc) * 100.0
    );
    if acc < 0.75 || (oracle - acc).abs() > 0.10 {
        return Err(detail);
    }
    within(elapsed, 60.0, detail)
}

fn ablation_direction() -> Result<String, String> {
    let model = LatentResponseModel::default();
    let patients = default_patients();
    let x = LatentInputs::from_record(&patients[0].complete).map_err(|e| e.to_string())?;
    let heavier = LatentInputs {
        total_dose: x.total_dose + 10.0,
        ..x
    };
    if model.mean_day7(&heavier) <= model.mean_day7(&x) {
        return Err("latent model ignores total dose".into());
    }
    let raw = observed(&patients);
    let range = TherapeuticRange::default();
    let result = ablation(&raw, &range, 10, 0, Execution::Parallel).map_err(|e| e.to_string())?;
    let variant =
        missing_class_run(&raw, &range, 10, 0, Execution::Parallel).map_err(|e| e.to_string())?;
    let (set3, set5) = (
        result.accuracy(FeatureSet::Set3),
        result.accuracy(FeatureSet::Set5),
    );
    let detail = format!(
        "set5 {set5:.3} vs set3 {set3:.3}; missing-outcome set1 variant {:.3}",
        variant.average_accuracy
    );
    ensure(set5 > set3 && variant.average_accuracy < set5, detail)
}

fn cli_determinism() -> Result<String, String> {
    let artifacts = make_artifacts(300);
    let cohort = [("c.csv", artifacts.cohort.as_slice())];
    let fixture = std::fs::read(common::fixture_path()).map_err(|e| e.to_string())?;
    let cases: Vec<(Vec<&str>, Vec<(&str, &[u8])>)> = vec![
        (vec!["synth", "--seed", "7"], vec![]),
        (
            vec!["preprocess", "f.csv", "--seed", "7"],
            vec![("f.csv", fixture.as_slice())],
        ),
        (vec!["preprocess", "c.csv", "--seed", "7"], cohort.to_vec()),
        (vec!["train", "c.csv", "--seed", "7"], cohort.to_vec()),
        (vec!["crossval", "c.csv", "--seed", "7"], cohort.to_vec()),
        (
            vec!["gridsearch", "activations", "c.csv", "--seed", "7"],
            cohort.to_vec(),
        ),
        (
            vec![
                "gridsearch",
                "rates",
                "c.csv",
                "--seed",
                "7",
                "--rates",
                "0.04,0.15",
                "--iterations",
                "100,500",
                "--parallel",
            ],
            cohort.to_vec(),
        ),
        (
            vec![
                "gridsearch",
                "arch",
                "c.csv",
                "--seed",
                "7",
                "--shapes",
                "2,5,5x5",
                "--parallel",
            ],
            cohort.to_vec(),
        ),
        (
            vec!["ablate", "c.csv", "--seed", "7", "--parallel"],
            cohort.to_vec(),
        ),
        (
            vec![
                "predict",
                "--model",
                "m.mlpmodel",
                "--seed",
                "7",
                "--age",
                "70",
                "--doses",
                "10,10,5",
                "--doses",
                "5,5,5",
            ],
            vec![("m.mlpmodel", artifacts.model.as_slice())],
        ),
    ];
    let mut names = Vec::new();
    for (args, inputs) in &cases {
        check_twice(args, inputs)?;
        names.push(args[..if args[0] == "gridsearch" { 2 } else { 1 }].join(" "));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("m.mlpmodel"), &artifacts.model).map_err(|e| e.to_string())?;
    let body = r#"{"age":70,"sex":"F","dose1":10,"dose2":10,"dose3":5}"#;
    let mut replies = Vec::new();
    for _ in 0..2 {
        let server = common::spawn_server(dir.path(), "m.mlpmodel");
        replies.push((
            http(&server.addr, "POST", "/predict", body),
            http(&server.addr, "GET", "/model", ""),
        ));
    }
    if replies[0] != replies[1] {
        return Err("serve answers differ across restarts".into());
    }
    names.dedup();
    names.push("serve".into());
    Ok(format!("byte-identical outputs for {}", names.join(", ")))
}

fn random_patient(rng: &mut ChaCha8Rng) -> serde_json::Map<String, Value> {
    let mut p = serde_json::Map::new();
    p.insert("age".into(), json!(rng.random_range(18.0..95.0)));
    let maybe = |rng: &mut ChaCha8Rng| rng.random_bool(0.8);
    if maybe(rng) {
        p.insert(
            "sex".into(),
            json!(if rng.random_bool(0.5) { "M" } else { "F" }),
        );
    }
    if maybe(rng) {
        p.insert("weight_kg".into(), json!(rng.random_range(40.0..140.0)));
    }
    if maybe(rng) {
        p.insert("height_m".into(), json!(rng.random_range(1.45..2.0)));
    }
    if maybe(rng) {
        p.insert("amiodarone".into(), json!(rng.random_bool(0.1)));
    }
    if maybe(rng) {
        p.insert(
            "vkorc1".into(),
            json!(["GG", "AA", "AG"][rng.random_range(0..3)]),
        );
    }
    if maybe(rng) {
        let g = ["*1/*1", "*1/*2", "*1/*3", "*2/*2", "*2/*3", "*3/*3"][rng.random_range(0..6)];
        p.insert("cyp2c9".into(), json!(g));
    }
    if maybe(rng) {
        p.insert("inr_base".into(), json!(rng.random_range(0.8..1.4)));
    }
    p
}

fn random_regimen(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut dose = || f64::from(rng.random_range(0..=6)) * 2.5;
    [dose(), dose(), dose()]
}

fn service_consistency() -> Result<String, String> {
    let raw = observed(&default_patients());
    let range = TherapeuticRange::default();
    let (data, _) = run_pipeline(&raw, &range, FeatureSet::Set5).map_err(|e| e.to_string())?;
    let cfg = MlpConfig::default_for(FeatureSet::Set5.arity());
    let (doc, _) = train_document(&data, &cfg, range, None).map_err(|e| e.to_string())?;
    let model = LoadedModel::new(doc).map_err(|e| e.to_string())?;
    let state = Arc::new(inrclass_serve::AppState::new(Some(model.clone())));

    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .map_err(|e| e.to_string())?;
    let addr = listener
        .local_addr()
        .map_err(|e| e.to_string())?
        .to_string();
    runtime.spawn(inrclass_serve::serve(
        listener,
        state,
        std::future::pending(),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut classes = BTreeMap::new();
    for i in 0..50 {
        let mut body = random_patient(&mut rng);
        for (k, d) in ["dose1", "dose2", "dose3"]
            .iter()
            .zip(random_regimen(&mut rng))
        {
            body.insert((*k).into(), json!(d));
        }
        let body = Value::Object(body);
        let (status, reply) = http(&addr, "POST", "/predict", &body.to_string());
        if status != 200 {
            return Err(format!("request {i}: status {status}: {reply}"));
        }
        let reply: Value = serde_json::from_str(&reply).map_err(|e| e.to_string())?;
        let request = PredictRequest::from_value(&body).map_err(|e| e.to_string())?;
        let features = model.features(&request);
        let class = model
            .model
            .predict_class(&features)
            .map_err(|e| e.to_string())?;
        let output = model.model.forward(&features).map_err(|e| e.to_string())?;
        let served_output = reply["output"].as_f64().unwrap_or(f64::NAN);
        if reply["class_code"] != json!(class) || served_output.to_bits() != output.to_bits() {
            return Err(format!(
                "request {i}: served {reply} vs library class {class} output {output:e}"
            ));
        }
        *classes.entry(class).or_insert(0) += 1;
    }

    for i in 0..10 {
        let patient = random_patient(&mut rng);
        let regimens: Vec<[f64; 3]> = (0..4).map(|_| random_regimen(&mut rng)).collect();
        let body = json!({ "patient": patient, "regimens": regimens });
        WhatIfRequest::from_value(&body).map_err(|e| e.to_string())?;
        let (status, batch) = http(&addr, "POST", "/whatif", &body.to_string());
        if status != 200 {
            return Err(format!("whatif {i}: status {status}"));
        }
        let batch: Value = serde_json::from_str(&batch).map_err(|e| e.to_string())?;
        for (j, regimen) in regimens.iter().enumerate() {
            let mut flat = patient.clone();
            for (k, d) in ["dose1", "dose2", "dose3"].iter().zip(regimen) {
                flat.insert((*k).into(), json!(d));
            }
            let (_, single) = http(&addr, "POST", "/predict", &Value::Object(flat).to_string());
            let single: Value = serde_json::from_str(&single).map_err(|e| e.to_string())?;
            if batch["results"][j] != single {
                return Err(format!("whatif {i} regimen {j} differs from /predict"));
            }
        }
    }
    runtime.shutdown_background();
    Ok(format!(
        "50 predicts bit-exact (classes {classes:?}), 10 what-if batches of 4 equal looped predicts"
    ))
}

fn report_formatting() -> Result<String, String> {
    let matrix = ConfusionMatrix {
        cells: vec![
            vec![4.0, 1.5, 0.0],
            vec![0.5, 15.0, 2.5],
            vec![0.0, 0.0, 3.0],
        ],
    };
    let report = CvReport {
        k: 10,
        seed: 0,
        per_fold_matrices: Vec::new(),
        per_class_recall: (1..=3).map(|c| matrix.recall(c)).collect(),
        averaged_matrix: matrix,
        average_accuracy: 0.8517,
        config: Value::Null,
    };
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/confusion.txt");
    let golden = std::fs::read_to_string(golden_path).map_err(|e| e.to_string())?;
    let rendered = format_confusion(&report);
    if rendered != golden {
        return Err(format!("rendered:\n{rendered}golden:\n{golden}"));
    }
    Ok("3x3 matrix matches golden file".into())
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("gradient oracle", gradient_oracle),
        ("stratification", stratification),
        ("preprocessing fixture", preprocessing_fixture),
        ("separable toy", separable_toy),
        ("synthetic protocol", synthetic_protocol),
        ("ablation direction", ablation_direction),
        ("CLI determinism", cli_determinism),
        ("service consistency", service_consistency),
        ("report formatting", report_formatting),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {p:?}")));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
