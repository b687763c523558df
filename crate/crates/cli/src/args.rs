use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::artifact::ModelKind;

#[derive(Parser, Debug, Clone)]
#[command(name = "clv", version, about = "Customer lifetime value pipelines over transaction and gameplay logs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Seed for simulation, start jitter, bootstrap and fold assignment.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Period length in days. Used for discounting, Markov and basic-model
    /// periods (default 1) and, for `summarize`, to put RFM on a period grid.
    #[arg(long, global = true)]
    pub period_days: Option<f64>,
    /// Format of tabular output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Encoding of timestamps in input files.
    #[arg(long, global = true, value_enum, default_value_t = Timestamps::Days)]
    pub timestamps: Timestamps,
}

impl GlobalOpts {
    pub fn period(&self) -> f64 {
        self.period_days.unwrap_or(1.0)
    }
}

impl Default for GlobalOpts {
    fn default() -> Self {
        GlobalOpts { seed: 0, period_days: None, format: Format::Csv, timestamps: Timestamps::Days }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Timestamps {
    /// Real-valued days.
    Days,
    /// ISO-8601 dates or date-times.
    Iso8601,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Rewrite a raw transaction or event file in the canonical layout.
    Ingest(IngestArgs),
    /// Per-customer frequency, recency, age and monetary value.
    Summarize(SummarizeArgs),
    /// Split a log into calibration and holdout parts at a cutoff.
    Split(SplitArgs),
    /// Fit a model and write its artifact.
    Fit(FitArgs),
    /// Per-customer predictions from an artifact.
    Predict(PredictArgs),
    /// Write a simulated cohort with its ground truth.
    Simulate(SimulateArgs),
    /// k-fold cross-validation of a supervised learner.
    Evaluate(EvaluateArgs),
    /// RFM codes, weighted ranks and a per-segment CLV table.
    Segment(SegmentArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LogKind {
    Transactions,
    Events,
}

#[derive(Args, Debug, Clone)]
pub struct IngestArgs {
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LogKind::Transactions)]
    pub kind: LogKind,
    #[arg(long, default_value = "customer_id")]
    pub customer_col: String,
    #[arg(long, default_value = "timestamp")]
    pub timestamp_col: String,
    #[arg(long, default_value = "value")]
    pub value_col: String,
    #[arg(long, default_value = "event_kind")]
    pub event_col: String,
}

#[derive(Args, Debug, Clone)]
pub struct SummarizeArgs {
    /// Transaction CSV.
    pub input: PathBuf,
    /// End of observation in days; defaults to the last timestamp.
    #[arg(long)]
    pub end: Option<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Records strictly before the cutoff go to calibration.
    #[arg(long)]
    pub cutoff: f64,
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub holdout: PathBuf,
    #[arg(long, requires = "events")]
    pub calibration_events: Option<PathBuf>,
    #[arg(long, requires = "events")]
    pub holdout_events: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Transactions, RFM summaries or a feature table (detected from the header).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Gameplay events; with a transaction input, features are extracted from both.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// End of observation in days; defaults to the last timestamp.
    #[arg(long)]
    pub end: Option<f64>,
    /// Behaviour window for feature extraction, in days.
    #[arg(long, default_value_t = 7.0)]
    pub window_days: f64,
    /// Revenue target horizon for feature extraction, in days.
    #[arg(long, default_value_t = 180.0)]
    pub target_days: f64,
    /// Feature columns to treat as categorical.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Resample payers to this share with SMOTE-NC before training.
    #[arg(long)]
    pub smote_ratio: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub smote_k: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum RetentionKind {
    PowerLaw,
    Exponential,
    KaplanMeier,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[arg(value_enum)]
    pub model: ModelKind,
    #[command(flatten)]
    pub data: DataArgs,
    /// Artifact to write.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub penalizer: f64,
    /// Starting parameters: an artifact of the same kind or comma-separated values.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Drop customers without repeat purchases (Gamma-Gamma).
    #[arg(long)]
    pub repeat_only: bool,
    /// Promotion cost per period for the basic model.
    #[arg(long, default_value_t = 0.0)]
    pub marketing_cost: f64,
    /// Days of curve used by the retention and monetization models.
    #[arg(long, default_value_t = 30)]
    pub curve_days: usize,
    #[arg(long, value_enum, default_value_t = RetentionKind::PowerLaw)]
    pub family: RetentionKind,
    /// Inactivity window closing a relationship, for Kaplan-Meier retention.
    #[arg(long, default_value_t = 7.0)]
    pub inactivity_days: f64,
    /// Recency cells before churn in the Markov model.
    #[arg(long, default_value_t = 4)]
    pub markov_cells: u32,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub artifact: PathBuf,
    /// Gamma-Gamma artifact turning purchase forecasts into value.
    #[arg(long)]
    pub spend: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Forecast horizon in days.
    #[arg(long, default_value_t = 180.0)]
    pub horizon: f64,
    /// Discount rate per period.
    #[arg(long, default_value_t = 0.01)]
    pub discount_rate: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SimModel {
    #[value(alias = "pareto-nbd")]
    ParetoNbd,
    #[value(alias = "bg-nbd")]
    BgNbd,
    Players,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub model: SimModel,
    #[arg(long, default_value_t = 1000)]
    pub customers: usize,
    /// Length of observation in days.
    #[arg(long, default_value_t = 365.0)]
    pub days: f64,
    /// Acquisition (or install) window in days.
    #[arg(long)]
    pub acquisition_days: Option<f64>,
    /// Purchase parameters: r,alpha,s,beta or r,alpha,a,b.
    #[arg(long, value_delimiter = ',')]
    pub purchase_params: Option<Vec<f64>>,
    /// Spend parameters p,q,gamma.
    #[arg(long, value_delimiter = ',', default_value = "6,4,15")]
    pub spend_params: Vec<f64>,
    /// Mean sessions per day while alive; adds gameplay events.
    #[arg(long)]
    pub sessions_per_day: Option<f64>,
    #[arg(long, default_value_t = 4.0)]
    pub rounds_per_session: f64,
    /// Directory receiving transactions.csv, events.csv and truth.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum LearnerKind {
    Forest,
    #[value(alias = "three-stage")]
    ThreeStage,
    Mean,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(value_enum, default_value_t = LearnerKind::Forest)]
    pub learner: LearnerKind,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SegmentBy {
    /// Quintiles of predicted CLV.
    Clv,
    /// RFM cell codes.
    Rfm,
}

#[derive(Args, Debug, Clone)]
pub struct SegmentArgs {
    /// Calibration transactions.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Holdout transactions, for realised value per segment.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Purchase-model artifact.
    #[arg(long, short)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub spend: PathBuf,
    #[arg(long)]
    pub end: Option<f64>,
    #[arg(long, default_value_t = 180.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub discount_rate: f64,
    /// Recency, frequency and monetary weights summing to 1.
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.3,0.3")]
    pub weights: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SegmentBy::Clv)]
    pub by: SegmentBy,
    /// Segment report.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Per-customer codes, ranks and predictions.
    #[arg(long)]
    pub customers: Option<PathBuf>,
}
