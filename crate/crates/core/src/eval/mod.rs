//! Scoring, statistical comparison, depth tuning and the multi-model
//! benchmark.

pub mod bench;
pub mod stats;
pub mod tune;

pub use bench::{run_benchmark, BenchConfig, BenchmarkReport, ModelKind};
pub use stats::{friedman_rank, paired_ttest, r2, Score, TTestResult};
pub use tune::{measure_prediction_time, tune_depth, ModelSpec, TuneResult, TuningPlan};
