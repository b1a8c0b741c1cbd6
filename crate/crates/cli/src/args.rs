use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use obtree::eval::ModelKind;
use obtree::LeafMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "obtree", version, about = "Hard-split oblique regression trees trained end to end")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tree and write the model file.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Select a depth by validation R².
    Tune(TuneArgs),
    /// Compare models on one or more datasets.
    Bench(BenchArgs),
}

/// Input and run-control flags shared by the data-driven commands.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Target column, by header name or zero-based index.
    #[arg(long)]
    pub target: String,
    /// The CSV files start with a header row.
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, short)]
    pub quiet: bool,
}

/// Gradient training flags.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = 3000)]
    pub epochs: usize,
    /// Range `lo,hi` for the first, smoother scale factor.
    #[arg(long, default_value = "5,25")]
    pub alpha_small: String,
    /// Range `lo,hi` for the second, sharper scale factor.
    #[arg(long, default_value = "50,150")]
    pub alpha_large: String,
    /// Peak learning rate of the cosine schedule.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// L1 penalty on split weights.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// `adam` or `gd`.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub input: DataArgs,
    /// `75/25`, `50/25/25` or omitted to train on every row.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value = "constant")]
    pub leaf: LeafMode,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Run subtree polish (on by default for constant leaves).
    #[arg(long, overrides_with = "no_polish")]
    pub polish: bool,
    #[arg(long)]
    pub no_polish: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Column to drop before predicting, when the file still contains it.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub header: bool,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub input: DataArgs,
    /// `50/25/25`, `75/25` or `cv:k`.
    #[arg(long, default_value = "50/25/25")]
    pub split: String,
    /// `lo:hi` inclusive range or comma list.
    #[arg(long, default_value = "1:12")]
    pub depths: String,
    #[arg(long, default_value = "get")]
    pub model: ModelKind,
    /// Forest size when tuning `rf`.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, overrides_with = "no_polish")]
    pub polish: bool,
    #[arg(long)]
    pub no_polish: bool,
    /// Write the model retrained at the chosen depth.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Dataset file; repeat for several datasets.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value = "50/25/25")]
    pub split: String,
    /// Comma list from get, get-linear, cart, rf.
    #[arg(long, default_value = "get,get-linear,cart,rf")]
    pub models: String,
    #[arg(long, default_value = "1:12")]
    pub depths: String,
    #[arg(long, default_value = "1:50")]
    pub rf_depths: String,
    #[arg(long, default_value = "50,100,200,300,400,500")]
    pub rf_trees: String,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Skip subtree polish for `get`.
    #[arg(long)]
    pub no_polish: bool,
    /// Also polish `get-linear`.
    #[arg(long)]
    pub polish_linear: bool,
    /// Prediction-time repetitions per model.
    #[arg(long, default_value_t = 100)]
    pub timing_reps: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the text table here instead of standard output.
    #[arg(long)]
    pub table: Option<PathBuf>,
}
