//! Day-0 prediction requests: parsing with per-field diagnostics, and the
//! pure predict / what-if handlers behind the CLI and the HTTP service.
//!
//! Missing optional covariates are zero-filled exactly as in preprocessing;
//! no day-7 imputation happens because no outcome exists yet.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{total_loading, Cyp2c9, Gender, RawRecord, ResponseClass, Vkorc1};
use crate::preprocess::zero_fill;
use crate::store::LoadedModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Every problem found in a request body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestError {
    pub errors: Vec<FieldError>,
}

impl RequestError {
    fn single(field: &str, message: impl Into<String>) -> Self {
        Self {
            errors: vec![FieldError {
                field: field.to_string(),
                message: message.into(),
            }],
        }
    }

    pub fn fields(&self) -> Vec<&str> {
        self.errors.iter().map(|e| e.field.as_str()).collect()
    }
}

impl fmt::Display for RequestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .errors
            .iter()
            .map(|e| format!("{}: {}", e.field, e.message))
            .collect();
        write!(f, "invalid request ({})", parts.join("; "))
    }
}

impl std::error::Error for RequestError {}

pub const DOSE_FIELDS: [&str; 3] = ["dose1", "dose2", "dose3"];

const PATIENT_FIELDS: [&str; 14] = [
    "age",
    "sex",
    "weight_kg",
    "height_m",
    "bsa",
    "bmi",
    "amiodarone",
    "vkorc1",
    "cyp2c9",
    "inr_base",
    "inr_d4",
    "inr_d5",
    "inr_d6",
    "id",
];

/// Pre-treatment covariates of one patient. Only `age` is mandatory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatientInput {
    pub id: Option<String>,
    pub age: f64,
    pub gender: Option<Gender>,
    pub weight: Option<f64>,
    pub height: Option<f64>,
    pub bsa: Option<f64>,
    pub bmi: Option<f64>,
    pub amiodarone: Option<bool>,
    pub vkorc1: Option<Vkorc1>,
    pub cyp2c9: Option<Cyp2c9>,
    pub inr_baseline: Option<f64>,
    pub inr_day4: Option<f64>,
    pub inr_day5: Option<f64>,
    pub inr_day6: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictRequest {
    pub patient: PatientInput,
    pub doses: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfRequest {
    pub patient: PatientInput,
    pub regimens: Vec<[f64; 3]>,
}

#[derive(Clone, Copy)]
enum Bound {
    NonNegative,
    Positive,
}

struct Fields<'a> {
    obj: &'a Map<String, Value>,
    prefix: &'a str,
    errors: Vec<FieldError>,
}

impl<'a> Fields<'a> {
    fn new(obj: &'a Map<String, Value>, prefix: &'a str) -> Self {
        Self {
            obj,
            prefix,
            errors: Vec::new(),
        }
    }

    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            field: format!("{}{field}", self.prefix),
            message: message.into(),
        });
    }

    fn present(&self, field: &str) -> Option<&'a Value> {
        self.obj.get(field).filter(|v| !v.is_null())
    }

    fn number(&mut self, field: &str, bound: Bound) -> Option<f64> {
        let value = self.present(field)?;
        let Some(v) = value.as_f64() else {
            self.fail(field, "expected a number");
            return None;
        };
        let ok = match bound {
            Bound::NonNegative => v >= 0.0,
            Bound::Positive => v > 0.0,
        };
        if !ok || !v.is_finite() {
            let rule = match bound {
                Bound::NonNegative => ">= 0",
                Bound::Positive => "> 0",
            };
            self.fail(field, format!("must be {rule}, got {v}"));
            return None;
        }
        Some(v)
    }

    fn required_number(&mut self, field: &str, bound: Bound) -> Option<f64> {
        if self.present(field).is_none() {
            self.fail(field, "is required");
            return None;
        }
        self.number(field, bound)
    }

    fn parsed<T: std::str::FromStr>(&mut self, field: &str, expected: &str) -> Option<T> {
        let value = self.present(field)?;
        match value.as_str().map(str::parse::<T>) {
            Some(Ok(v)) => Some(v),
            _ => {
                self.fail(field, format!("expected one of {expected}"));
                None
            }
        }
    }

    fn boolean(&mut self, field: &str) -> Option<bool> {
        let value = self.present(field)?;
        match value.as_bool() {
            Some(b) => Some(b),
            None => {
                self.fail(field, "expected true or false");
                None
            }
        }
    }

    fn reject_unknown(&mut self, allowed: &[&str]) {
        let unknown: Vec<String> = self
            .obj
            .keys()
            .filter(|k| !allowed.contains(&k.as_str()))
            .cloned()
            .collect();
        for k in unknown {
            self.fail(&k, "unknown field");
        }
    }

    fn patient(&mut self) -> Option<PatientInput> {
        let id = match self.present("id") {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.fail("id", "expected a string");
                None
            }
        };
        let age = self.required_number("age", Bound::NonNegative);
        let patient = PatientInput {
            id,
            age: age.unwrap_or(0.0),
            gender: self.parsed("sex", "\"M\", \"F\""),
            weight: self.number("weight_kg", Bound::Positive),
            height: self.number("height_m", Bound::Positive),
            bsa: self.number("bsa", Bound::Positive),
            bmi: self.number("bmi", Bound::Positive),
            amiodarone: self.boolean("amiodarone"),
            vkorc1: self.parsed("vkorc1", "\"GG\", \"AA\", \"AG\""),
            cyp2c9: self.parsed(
                "cyp2c9",
                "\"*1/*1\", \"*1/*2\", \"*1/*3\", \"*2/*2\", \"*2/*3\", \"*3/*3\"",
            ),
            inr_baseline: self.number("inr_base", Bound::Positive),
            inr_day4: self.number("inr_d4", Bound::Positive),
            inr_day5: self.number("inr_d5", Bound::Positive),
            inr_day6: self.number("inr_d6", Bound::Positive),
        };
        age.map(|_| patient)
    }

    fn finish<T>(self, value: Option<T>) -> std::result::Result<T, RequestError> {
        match value {
            Some(v) if self.errors.is_empty() => Ok(v),
            _ => Err(RequestError {
                errors: self.errors,
            }),
        }
    }
}

fn object<'a>(
    value: &'a Value,
    what: &str,
) -> std::result::Result<&'a Map<String, Value>, RequestError> {
    value
        .as_object()
        .ok_or_else(|| RequestError::single(what, "expected a JSON object"))
}

fn check_doses(doses: [f64; 3]) -> std::result::Result<[f64; 3], String> {
    if doses.iter().all(|d| d.is_finite() && *d >= 0.0) {
        Ok(doses)
    } else {
        Err(format!("doses must be >= 0, got {doses:?}"))
    }
}

impl PredictRequest {
    pub fn new(patient: PatientInput, doses: [f64; 3]) -> Self {
        Self { patient, doses }
    }

    /// Flat object: the patient fields plus `dose1`..`dose3`.
    pub fn from_value(value: &Value) -> std::result::Result<Self, RequestError> {
        let obj = object(value, "body")?;
        let mut f = Fields::new(obj, "");
        let allowed: Vec<&str> = PATIENT_FIELDS.iter().chain(&DOSE_FIELDS).copied().collect();
        f.reject_unknown(&allowed);
        let patient = f.patient();
        let doses = DOSE_FIELDS.map(|d| f.required_number(d, Bound::NonNegative));
        let req = match (patient, doses) {
            (Some(patient), [Some(a), Some(b), Some(c)]) => Some(Self::new(patient, [a, b, c])),
            _ => None,
        };
        f.finish(req)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, RequestError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| RequestError::single("body", e.to_string()))?;
        Self::from_value(&value)
    }

    /// The request as a record without outcomes.
    pub fn to_record(&self) -> RawRecord {
        let p = &self.patient;
        RawRecord {
            patient_id: p.id.clone().unwrap_or_default(),
            age: Some(p.age),
            gender: p.gender,
            weight: p.weight,
            height: p.height,
            bsa: p.bsa,
            bmi: p.bmi,
            amiodarone: p.amiodarone,
            vkorc1: p.vkorc1,
            cyp2c9: p.cyp2c9,
            dose_day1: Some(self.doses[0]),
            dose_day2: Some(self.doses[1]),
            dose_day3: Some(self.doses[2]),
            inr_baseline: p.inr_baseline,
            inr_day4: p.inr_day4,
            inr_day5: p.inr_day5,
            inr_day6: p.inr_day6,
            inr_day7: None,
            inr_day8: None,
        }
    }
}

impl WhatIfRequest {
    /// `{"patient": {...}, "regimens": [[d1, d2, d3], ...]}`.
    pub fn from_value(value: &Value) -> std::result::Result<Self, RequestError> {
        let obj = object(value, "body")?;
        let mut top = Fields::new(obj, "");
        top.reject_unknown(&["patient", "regimens"]);
        let mut errors = std::mem::take(&mut top.errors);

        let patient = match obj.get("patient") {
            Some(Value::Object(p)) => {
                let mut f = Fields::new(p, "patient.");
                f.reject_unknown(&PATIENT_FIELDS);
                let patient = f.patient();
                errors.extend(f.errors);
                patient
            }
            _ => {
                errors.push(FieldError {
                    field: "patient".into(),
                    message: "expected an object of covariates".into(),
                });
                None
            }
        };

        let mut regimens = Vec::new();
        match obj.get("regimens") {
            Some(Value::Array(items)) if !items.is_empty() => {
                for (i, item) in items.iter().enumerate() {
                    let triple = item.as_array().filter(|a| a.len() == 3).and_then(|a| {
                        let v: Vec<f64> = a.iter().filter_map(Value::as_f64).collect();
                        <[f64; 3]>::try_from(v).ok()
                    });
                    match triple.map(check_doses) {
                        Some(Ok(d)) => regimens.push(d),
                        Some(Err(message)) => errors.push(FieldError {
                            field: format!("regimens[{i}]"),
                            message,
                        }),
                        None => errors.push(FieldError {
                            field: format!("regimens[{i}]"),
                            message: "expected three numeric doses".into(),
                        }),
                    }
                }
            }
            Some(Value::Array(_)) => errors.push(FieldError {
                field: "regimens".into(),
                message: "must not be empty".into(),
            }),
            _ => errors.push(FieldError {
                field: "regimens".into(),
                message: "expected a list of dose triples".into(),
            }),
        }

        match patient {
            Some(patient) if errors.is_empty() => Ok(Self { patient, regimens }),
            _ => Err(RequestError { errors }),
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, RequestError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| RequestError::single("body", e.to_string()))?;
        Self::from_value(&value)
    }

    /// One single-regimen request per entry, in order.
    pub fn expand(&self) -> Vec<PredictRequest> {
        self.regimens
            .iter()
            .map(|&d| PredictRequest::new(self.patient.clone(), d))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub class: String,
    pub class_code: u8,
    pub target: f64,
    /// |output − target|; smaller is closer.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub class: String,
    pub class_code: u8,
    pub output: f64,
    pub doses: [f64; 3],
    pub total_loading: f64,
    pub scores: Vec<Score>,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub results: Vec<PredictResponse>,
}

/// Public metadata of the loaded model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub fingerprint: String,
    pub format_version: u32,
    pub feature_set: crate::model::FeatureSet,
    pub column_names: Vec<String>,
    pub therapeutic_range: crate::model::TherapeuticRange,
    pub hidden_layers: Vec<usize>,
    pub hidden_activation: crate::mlp::ActivationKind,
    pub output_activation: crate::mlp::ActivationKind,
    pub classes: Vec<Score>,
    pub training: crate::store::TrainingMetadata,
}

pub fn class_name(code: u8) -> String {
    ResponseClass::from_code(code).map_or_else(|| format!("Class{code}"), |c| c.name().to_string())
}

impl LoadedModel {
    /// Zero-filled feature vector for the model's feature set.
    pub fn features(&self, request: &PredictRequest) -> Vec<f64> {
        zero_fill(&request.to_record())
            .0
            .project(self.document.feature_set)
    }

    pub fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        check_doses(request.doses).map_err(Error::Domain)?;
        let features = self.features(request);
        let output = self.model.forward(&features)?;
        let coding = &self.model.config.target_coding;
        let code = coding.decode(output);
        let scores = coding
            .codes
            .iter()
            .map(|&(c, target)| Score {
                class: class_name(c),
                class_code: c,
                target,
                distance: (output - target).abs(),
            })
            .collect();
        let [d1, d2, d3] = request.doses;
        Ok(PredictResponse {
            class: class_name(code),
            class_code: code,
            output,
            doses: request.doses,
            total_loading: total_loading(d1, d2, d3),
            scores,
            model_fingerprint: self.fingerprint.clone(),
        })
    }

    pub fn whatif(&self, request: &WhatIfRequest) -> Result<WhatIfResponse> {
        let results = request
            .expand()
            .iter()
            .map(|r| self.predict(r))
            .collect::<Result<_>>()?;
        Ok(WhatIfResponse { results })
    }

    pub fn info(&self) -> ModelInfo {
        let d = &self.document;
        ModelInfo {
            fingerprint: self.fingerprint.clone(),
            format_version: d.format_version,
            feature_set: d.feature_set,
            column_names: d.column_names.clone(),
            therapeutic_range: d.therapeutic_range,
            hidden_layers: self.model.config.hidden_layers.clone(),
            hidden_activation: d.hidden_activation,
            output_activation: d.output_activation,
            classes: d
                .target_coding
                .codes
                .iter()
                .map(|&(c, target)| Score {
                    class: class_name(c),
                    class_code: c,
                    target,
                    distance: 0.0,
                })
                .collect(),
            training: d.training.clone(),
        }
    }
}
