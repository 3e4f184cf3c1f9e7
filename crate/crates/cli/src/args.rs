use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inrclass::experiments::{ACTIVATION_GRID_ITERATIONS, ACTIVATION_GRID_RATE};
use inrclass::mlp::{ActivationKind, UpdateRule};
use inrclass::model::{FeatureSet, TherapeuticRange};
use serde::Serialize;

/// Loading-dose INR response classifier.
///
/// Data flows through standard streams when `--out` is absent, so
/// `inrclass synth | inrclass preprocess | inrclass crossval` runs the whole
/// protocol on a synthetic cohort with the default settings.
#[derive(Debug, Parser, Serialize)]
#[command(name = "inrclass", version, max_term_width = 100)]
pub struct Cli {
    /// Master seed; every random stream in the run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Therapeutic INR range, bounds inclusive.
    #[arg(long, global = true, value_name = "LOW:HIGH", default_value = "2:3")]
    pub range: TherapeuticRange,

    /// Covariate set used when raw records are preprocessed.
    #[arg(long, global = true, value_name = "SET", default_value = "set5")]
    pub feature_set: FeatureSet,

    /// Directory for output files and the run manifest. Without it, results
    /// go to standard output and nothing is written to disk.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Print reports as JSON documents instead of text tables.
    #[arg(long, global = true)]
    pub json: bool,

    /// Run folds or grid cells on all cores. Results are unchanged.
    #[arg(long, global = true)]
    pub parallel: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic cohort in the raw CSV layout.
    Synth(SynthArgs),
    /// Apply exclusions, day-7 imputation and zero-fill; emit the clean table
    /// and the record-accounting report.
    Preprocess(InputArgs),
    /// Train one network on the whole dataset and save the model document.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation with a fold-averaged confusion
    /// matrix (columns = true class).
    Crossval(CrossvalArgs),
    /// Hyperparameter grids scored by cross-validated accuracy.
    Gridsearch(GridsearchArgs),
    /// Cross-validate all five feature sets and the missing-outcome variant
    /// on one raw cohort.
    Ablate(AblateArgs),
    /// One-shot prediction from a request file or flags.
    Predict(PredictArgs),
    /// Serve a model over HTTP until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Raw cohort CSV or clean table; `-` or absent reads standard input.
    /// Raw files are preprocessed with --range and --feature-set first.
    #[arg(value_name = "INPUT")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Cohort size; overrides the config file.
    #[arg(long)]
    pub n: Option<usize>,

    /// TOML file with optional [cohort] and [latent] tables. Its seed is
    /// replaced by --seed.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateArg {
    FullBatch,
    Online,
}

impl From<UpdateArg> for UpdateRule {
    fn from(u: UpdateArg) -> Self {
        match u {
            UpdateArg::FullBatch => UpdateRule::FullBatch,
            UpdateArg::Online => UpdateRule::Online,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MlpArgs {
    /// Hidden layer widths, e.g. `5` or `10x5`.
    #[arg(long, value_name = "SHAPE", default_value = "5")]
    pub hidden: String,

    /// Hidden activation: purelin, logsig or tansig.
    #[arg(long, value_name = "KIND", default_value = "tansig")]
    pub hidden_activation: ActivationKind,

    /// Output activation: purelin, logsig or tansig.
    #[arg(long, value_name = "KIND", default_value = "tansig")]
    pub output_activation: ActivationKind,

    /// Gradient-descent learning rate.
    #[arg(long, default_value_t = 0.04)]
    pub lr: f64,

    /// Training epochs.
    #[arg(long, default_value_t = 3000)]
    pub iterations: usize,

    /// Weight update schedule.
    #[arg(long, value_enum, default_value = "full-batch")]
    pub update: UpdateArg,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub mlp: MlpArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub mlp: MlpArgs,
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GridsearchArgs {
    #[command(subcommand)]
    pub grid: Grid,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    /// All 3x3 hidden/output activation pairs at a fixed short schedule.
    #[command(long_about = format!(
        "All 3x3 hidden/output activation pairs, [5] hidden, learning rate {ACTIVATION_GRID_RATE}, \
         {ACTIVATION_GRID_ITERATIONS} epochs, scored by k-fold accuracy."
    ))]
    Activations(GridCommon),
    /// Learning rate against epoch count with the default network.
    Rates(RatesArgs),
    /// Hidden layer shapes with the default network.
    Arch(ArchArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GridCommon {
    #[command(flatten)]
    pub input: InputArgs,
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct RatesArgs {
    #[command(flatten)]
    pub common: GridCommon,
    /// Learning rates to try.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.005,0.01,0.04,0.1,0.15,0.3"
    )]
    pub rates: Vec<f64>,
    /// Epoch counts to try.
    #[arg(long, value_delimiter = ',', default_value = "100,500,1000,3000")]
    pub iterations: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ArchArgs {
    #[command(flatten)]
    pub common: GridCommon,
    /// Hidden shapes to try, e.g. `2,5,10x5`.
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,5x5,10x5")]
    pub shapes: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    /// Raw cohort CSV; `-` or absent reads standard input.
    #[arg(value_name = "INPUT")]
    pub input: Option<PathBuf>,
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Model document written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,

    /// JSON request: a flat predict body, or a what-if body with `patient`
    /// and `regimens`. Patient flags are ignored when given.
    #[arg(long, value_name = "FILE", conflicts_with = "doses")]
    pub request: Option<PathBuf>,

    /// Loading regimen `D1,D2,D3` in mg. Repeat for a what-if comparison.
    #[arg(long, value_name = "D1,D2,D3")]
    pub doses: Vec<String>,

    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub age: Option<f64>,
    /// M or F.
    #[arg(long)]
    pub sex: Option<String>,
    #[arg(long, value_name = "KG")]
    pub weight: Option<f64>,
    #[arg(long, value_name = "M")]
    pub height: Option<f64>,
    #[arg(long)]
    pub bsa: Option<f64>,
    #[arg(long)]
    pub bmi: Option<f64>,
    /// Concomitant amiodarone.
    #[arg(long, value_name = "BOOL")]
    pub amiodarone: Option<bool>,
    /// GG, AA or AG.
    #[arg(long)]
    pub vkorc1: Option<String>,
    /// Genotype such as `*1/*3`.
    #[arg(long)]
    pub cyp2c9: Option<String>,
    #[arg(long, value_name = "INR")]
    pub inr_base: Option<f64>,
    #[arg(long, value_name = "INR")]
    pub inr_d4: Option<f64>,
    #[arg(long, value_name = "INR")]
    pub inr_d5: Option<f64>,
    #[arg(long, value_name = "INR")]
    pub inr_d6: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Model document to load at startup. Without it the service answers
    /// predictions with 503.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Listen address; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}
