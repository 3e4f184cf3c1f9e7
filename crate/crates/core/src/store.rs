//! The persisted model document (`.mlpmodel`, JSON).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mlp::{
    train, ActivationKind, FeatureScale, Layer, MlpConfig, MlpModel, TargetCoding, TrainReport,
    UpdateRule,
};
use crate::model::{FeatureSet, TherapeuticRange};
use crate::preprocess::CleanDataset;

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_EXTENSION: &str = "mlpmodel";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: ActivationKind,
    /// One row of `inputs` weights per output node.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub update: UpdateRule,
    pub records: usize,
    pub class_counts: BTreeMap<u8, usize>,
    pub final_training_accuracy: f64,
    /// SHA-256 of the training table, see [`data_fingerprint`].
    pub data_fingerprint: String,
    /// Seconds since the Unix epoch; not part of the model fingerprint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub feature_set: FeatureSet,
    pub column_names: Vec<String>,
    pub therapeutic_range: TherapeuticRange,
    pub input_scaling: Vec<FeatureScale>,
    pub hidden_activation: ActivationKind,
    pub output_activation: ActivationKind,
    pub layers: Vec<LayerDocument>,
    pub target_coding: TargetCoding,
    pub training: TrainingMetadata,
}

/// SHA-256 over column names, feature bit patterns and labels.
pub fn data_fingerprint(data: &CleanDataset) -> String {
    let mut h = Sha256::new();
    for name in &data.column_names {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for r in &data.records {
        for v in &r.features {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([r.label]);
    }
    hex::encode(h.finalize())
}

impl ModelDocument {
    pub fn from_model(
        model: &MlpModel,
        feature_set: FeatureSet,
        range: TherapeuticRange,
        training: TrainingMetadata,
    ) -> Result<Self> {
        model.validate()?;
        if model.config.input_arity != feature_set.arity() {
            return Err(Error::Shape(format!(
                "model takes {} inputs but {feature_set} has {}",
                model.config.input_arity,
                feature_set.arity()
            )));
        }
        let layers = model
            .layers
            .iter()
            .map(|l| LayerDocument {
                inputs: l.inputs,
                outputs: l.outputs,
                activation: l.activation,
                weights: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                biases: l.biases.clone(),
            })
            .collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            feature_set,
            column_names: feature_set.column_names(),
            therapeutic_range: range,
            input_scaling: model.input_scaling.clone(),
            hidden_activation: model.config.hidden_activation,
            output_activation: model.config.output_activation,
            layers,
            target_coding: model.config.target_coding.clone(),
            training,
        })
    }

    /// Rebuilds the network, checking every shape along the way.
    pub fn to_model(&self) -> Result<MlpModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if self.column_names != self.feature_set.column_names() {
            return Err(Error::InvalidModel(format!(
                "column_names do not match feature set {}",
                self.feature_set
            )));
        }
        TherapeuticRange::new(self.therapeutic_range.low(), self.therapeutic_range.high())?;
        let Some((last, hidden)) = self.layers.split_last() else {
            return Err(Error::InvalidModel("no layers".into()));
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.outputs || l.weights.iter().any(|row| row.len() != l.inputs) {
                return Err(Error::Shape(format!(
                    "layer {i} weights are not {} rows of {}",
                    l.outputs, l.inputs
                )));
            }
            layers.push(Layer {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: l.weights.concat(),
                biases: l.biases.clone(),
                activation: l.activation,
            });
        }
        let config = MlpConfig {
            input_arity: self.column_names.len(),
            hidden_layers: hidden.iter().map(|l| l.outputs).collect(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            learning_rate: self.training.learning_rate,
            iterations: self.training.iterations,
            seed: self.training.seed,
            target_coding: self.target_coding.clone(),
            update: self.training.update,
        };
        if last.outputs != 1 {
            return Err(Error::Shape(format!(
                "output layer has {} nodes",
                last.outputs
            )));
        }
        let model = MlpModel {
            config,
            layers,
            input_scaling: self.input_scaling.clone(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    /// Parses and validates; documents of another version are rejected
    /// before their body is interpreted.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::InvalidModel("missing format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::UnsupportedVersion {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        let doc: ModelDocument = serde_json::from_value(value)?;
        doc.to_model()?;
        Ok(doc)
    }

    /// SHA-256 of the document with the training timestamp removed.
    pub fn fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.training.trained_at_unix = None;
        hex::encode(Sha256::digest(copy.to_json().as_bytes()))
    }
}

pub fn save_model(doc: &ModelDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelDocument> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelDocument::from_json(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Trains on the whole of `data` and wraps the result in a document.
pub fn train_document(
    data: &CleanDataset,
    config: &MlpConfig,
    range: TherapeuticRange,
    trained_at_unix: Option<u64>,
) -> Result<(ModelDocument, TrainReport)> {
    let config = if config.target_coding.num_classes() != usize::from(data.num_classes) {
        config.clone().with_num_classes(data.num_classes)?
    } else {
        config.clone()
    };
    let (model, report) = train(&config, &data.records)?;
    let meta = TrainingMetadata {
        seed: config.seed,
        learning_rate: config.learning_rate,
        iterations: config.iterations,
        update: config.update,
        records: data.len(),
        class_counts: data.class_counts(),
        final_training_accuracy: report.final_accuracy,
        data_fingerprint: data_fingerprint(data),
        trained_at_unix,
    };
    Ok((
        ModelDocument::from_model(&model, data.feature_set, range, meta)?,
        report,
    ))
}

/// A validated document together with its rebuilt network.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub document: ModelDocument,
    pub model: MlpModel,
    pub fingerprint: String,
}

impl LoadedModel {
    pub fn new(document: ModelDocument) -> Result<Self> {
        let model = document.to_model()?;
        let fingerprint = document.fingerprint();
        Ok(Self {
            document,
            model,
            fingerprint,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_model(path)?)
    }
}
