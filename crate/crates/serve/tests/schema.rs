//! The published schema and the bodies the service actually produces and
//! accepts must name the same fields.

use std::collections::BTreeSet;

use inrclass::mlp::MlpConfig;
use inrclass::preprocess::{CleanDataset, CleanRecord};
use inrclass::store::{train_document, LoadedModel};
use inrclass::{FeatureSet, TherapeuticRange};
use inrclass_serve::{handle_health, handle_model, handle_predict, handle_whatif, AppState};
use serde_json::{json, Value};

fn schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/api.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn def<'a>(schema: &'a Value, name: &str) -> &'a Value {
    &schema["$defs"][name]
}

fn property_names(def: &Value) -> BTreeSet<String> {
    def["properties"]
        .as_object()
        .unwrap()
        .keys()
        .cloned()
        .collect()
}

fn required(def: &Value) -> BTreeSet<String> {
    def["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

/// Every key of `body` is declared and every required key is present.
fn conforms(schema: &Value, name: &str, body: &Value) {
    let d = def(schema, name);
    let keys: BTreeSet<String> = body.as_object().unwrap().keys().cloned().collect();
    assert!(
        keys.is_subset(&property_names(d)),
        "{name}: undeclared {keys:?}"
    );
    assert!(
        required(d).is_subset(&keys),
        "{name}: missing required in {keys:?}"
    );
}

fn state() -> AppState {
    let records = (0..30)
        .map(|i| CleanRecord {
            features: vec![f64::from(i % 3) + f64::from(i) * 0.01; FeatureSet::Set5.arity()],
            label: (i % 3) as u8 + 1,
        })
        .collect();
    let data = CleanDataset::new(FeatureSet::Set5, records).unwrap();
    let mut cfg = MlpConfig::default_for(FeatureSet::Set5.arity());
    cfg.iterations = 20;
    let doc = train_document(&data, &cfg, TherapeuticRange::default(), Some(1))
        .unwrap()
        .0;
    AppState::new(Some(LoadedModel::new(doc).unwrap()))
}

#[test]
fn responses_match_declared_fields() {
    let s = schema();
    let state = state();
    let predict = handle_predict(&state, br#"{"age":70,"dose1":5,"dose2":5,"dose3":5}"#).unwrap();
    let predict = serde_json::to_value(predict).unwrap();
    conforms(&s, "PredictResponse", &predict);
    conforms(&s, "Score", &predict["scores"][0]);

    let whatif = handle_whatif(&state, br#"{"patient":{"age":70},"regimens":[[5,5,5]]}"#).unwrap();
    let whatif = serde_json::to_value(whatif).unwrap();
    conforms(&s, "WhatIfResponse", &whatif);
    conforms(&s, "PredictResponse", &whatif["results"][0]);

    let info = serde_json::to_value(handle_model(&state).unwrap()).unwrap();
    conforms(&s, "ModelInfo", &info);
    conforms(&s, "TrainingMetadata", &info["training"]);

    conforms(
        &s,
        "Health",
        &serde_json::to_value(handle_health(&state)).unwrap(),
    );
    let err = handle_predict(&state, br#"{"bogus":1}"#).unwrap_err();
    let err = serde_json::to_value(&err.body).unwrap();
    conforms(&s, "ErrorBody", &err);
    conforms(&s, "FieldError", &err["fields"][0]);
}

#[test]
fn every_declared_request_field_is_accepted() {
    let s = schema();
    let state = state();
    let sample = |field: &str| -> Value {
        match field {
            "id" => json!("p1"),
            "sex" => json!("F"),
            "amiodarone" => json!(true),
            "vkorc1" => json!("AG"),
            "cyp2c9" => json!("*1/*2"),
            _ => json!(1.5),
        }
    };
    let predict_fields = property_names(def(&s, "PredictRequest"));
    let body: serde_json::Map<String, Value> = predict_fields
        .iter()
        .map(|f| (f.clone(), sample(f)))
        .collect();
    handle_predict(&state, Value::Object(body).to_string().as_bytes()).unwrap();

    let patient_fields = property_names(def(&s, "Patient"));
    let patient: serde_json::Map<String, Value> = patient_fields
        .iter()
        .map(|f| (f.clone(), sample(f)))
        .collect();
    let body = json!({ "patient": patient, "regimens": [[1, 2, 3]] });
    handle_whatif(&state, body.to_string().as_bytes()).unwrap();

    let doses: BTreeSet<String> = ["dose1", "dose2", "dose3"].map(String::from).into();
    assert_eq!(predict_fields, &patient_fields | &doses);
}
