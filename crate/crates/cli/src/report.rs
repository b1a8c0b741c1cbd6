//! JSON reports written by `--report`. Each one echoes the flags it was
//! produced with.

use obtree::eval::tune::DepthScore;
use obtree::eval::{BenchmarkReport, ModelSpec};
use obtree::{PolishReport, TrainConfig, TrainReport};
use serde::{Deserialize, Serialize};

use crate::args::{BenchArgs, TrainArgs, TuneArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub train_r2: Option<f64>,
    pub test_r2: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCommandReport {
    pub command: String,
    pub flags: TrainArgs,
    pub config: TrainConfig,
    pub train: TrainReport,
    pub polish: Option<PolishReport>,
    pub scores: Scores,
    pub parameters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneCommandReport {
    pub command: String,
    pub flags: TuneArgs,
    pub model: ModelSpec,
    pub best_depth: usize,
    pub best_validation_r2: f64,
    pub scores: Vec<DepthScore>,
    pub test_r2: Option<f64>,
    pub parameters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchCommandReport {
    pub command: String,
    pub flags: BenchArgs,
    pub report: BenchmarkReport,
}
