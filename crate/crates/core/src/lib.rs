//! Classifier for a patient's day-7 INR response to a warfarin loading
//! regimen (under, within or over the therapeutic range).
//!
//! The crate covers the whole modelling flow: ingesting raw cohort records
//! ([`io`]), cleaning them into a numeric table ([`preprocess`]), a
//! single-output perceptron ([`mlp`]), stratified k-fold evaluation
//! ([`crossval`]), the search and ablation protocols ([`experiments`]), a
//! synthetic cohort generator with a known optimal classifier ([`synth`]),
//! the persisted model document ([`store`]) and day-0 prediction requests
//! ([`predict`]).

pub mod crossval;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mlp;
pub mod model;
pub mod predict;
pub mod preprocess;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    categorize_inr, total_loading, Column, Cyp2c9, FeatureSet, Gender, RawRecord, ResponseClass,
    TherapeuticRange, Vkorc1,
};
pub use preprocess::{CleanDataset, CleanRecord, PreprocessReport};
