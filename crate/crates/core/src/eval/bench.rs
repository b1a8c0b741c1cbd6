use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stats::{friedman_rank, paired_ttest, r2, TTestResult};
use super::tune::{measure_prediction_time, tune_depth, ModelSpec, TuningPlan};
use crate::baselines::ForestConfig;
use crate::dataset::{normalize_for_split, Partitions, RawData, SplitSpec};
use crate::error::{Error, Result};
use crate::train::TrainConfig;
use crate::tree::LeafMode;

/// Forest sizes tried when tuning the random forest.
pub const RF_TREE_GRID: [usize; 6] = [50, 100, 200, 300, 400, 500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Get,
    GetLinear,
    Cart,
    Rf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Get, ModelKind::GetLinear, ModelKind::Cart, ModelKind::Rf];
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "get" => Ok(ModelKind::Get),
            "get-linear" => Ok(ModelKind::GetLinear),
            "cart" => Ok(ModelKind::Cart),
            "rf" => Ok(ModelKind::Rf),
            _ => Err(Error::Config(format!("unknown model `{s}` (expected get, get-linear, cart or rf)"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Get => "get",
            ModelKind::GetLinear => "get-linear",
            ModelKind::Cart => "cart",
            ModelKind::Rf => "rf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub models: Vec<ModelKind>,
    pub depth_grid: Vec<usize>,
    pub rf_depth_grid: Vec<usize>,
    pub rf_tree_grid: Vec<usize>,
    /// Depth and leaf mode are overridden per model.
    pub train: TrainConfig,
    pub polish_constant: bool,
    pub polish_linear: bool,
    pub split: SplitSpec,
    pub timing_repetitions: usize,
}

impl BenchConfig {
    pub fn new(split: SplitSpec) -> Self {
        BenchConfig {
            models: ModelKind::ALL.to_vec(),
            depth_grid: (1..=12).collect(),
            rf_depth_grid: (1..=50).collect(),
            rf_tree_grid: RF_TREE_GRID.to_vec(),
            train: TrainConfig::default(),
            polish_constant: true,
            polish_linear: false,
            split,
            timing_repetitions: 100,
        }
    }

    fn specs(&self, kind: ModelKind) -> Vec<(Option<usize>, ModelSpec)> {
        let oblique = |leaf_mode, polish| {
            vec![(
                None,
                ModelSpec::Oblique {
                    train: TrainConfig {
                        leaf_mode,
                        ..self.train.clone()
                    },
                    polish,
                },
            )]
        };
        match kind {
            ModelKind::Get => oblique(LeafMode::Constant, self.polish_constant),
            ModelKind::GetLinear => oblique(LeafMode::Linear, self.polish_linear),
            ModelKind::Cart => vec![(None, ModelSpec::Cart { min_samples_split: 2 })],
            ModelKind::Rf => self
                .rf_tree_grid
                .iter()
                .map(|&n_trees| {
                    (
                        Some(n_trees),
                        ModelSpec::Forest(ForestConfig {
                            n_trees,
                            seed: self.train.seed,
                            ..ForestConfig::default()
                        }),
                    )
                })
                .collect(),
        }
    }

    fn depth_grid_for(&self, kind: ModelKind) -> &[usize] {
        if kind == ModelKind::Rf {
            &self.rf_depth_grid
        } else {
            &self.depth_grid
        }
    }
}

/// Outcome of one model on one test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_r2: f64,
    pub depth: usize,
    pub n_trees: Option<usize>,
    pub validation_r2: f64,
    pub parameters: usize,
    pub train_time_secs: f64,
    pub predict_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelKind,
    /// Mean over folds; absent when the model failed.
    pub test_r2: Option<f64>,
    pub folds: Vec<FoldResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub name: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub results: Vec<ModelResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: ModelKind,
    pub b: ModelKind,
    pub result: TTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub datasets: Vec<DatasetResult>,
    /// Mean test R² per model over datasets, in `config.models` order.
    pub mean_r2: Vec<Option<f64>>,
    /// Absent when any model failed on any dataset.
    pub friedman_ranks: Option<Vec<f64>>,
    /// Paired over every (dataset, fold) test score.
    pub ttests: Vec<PairwiseTest>,
}

fn run_fold(
    ds: &crate::dataset::Dataset,
    config: &BenchConfig,
    kind: ModelKind,
    plan: &TuningPlan,
    test: &[usize],
) -> Result<FoldResult> {
    let mut best: Option<(Option<usize>, super::tune::TuneResult)> = None;
    for (n_trees, spec) in config.specs(kind) {
        let tuned = tune_depth(ds, &spec, config.depth_grid_for(kind), plan)?;
        log::info!(
            "{kind}{}: depth {} validation R² {:.4}",
            n_trees.map(|n| format!(" ({n} trees)")).unwrap_or_default(),
            tuned.best_depth,
            tuned.best_validation_r2
        );
        if best.as_ref().is_none_or(|(_, b)| tuned.best_validation_r2 > b.best_validation_r2) {
            best = Some((n_trees, tuned));
        }
    }
    let (n_trees, tuned) = best.expect("every model kind has at least one spec");
    let held = ds.subset(test);
    let pred = tuned.model.predict(&held.features)?;
    let score = r2(held.targets.as_slice().unwrap(), pred.as_slice().unwrap())?;
    Ok(FoldResult {
        test_r2: score.r2,
        depth: tuned.best_depth,
        n_trees,
        validation_r2: tuned.best_validation_r2,
        parameters: tuned.model.count_parameters(),
        train_time_secs: tuned.train_time_secs,
        predict_time_secs: measure_prediction_time(&tuned.model, &held.features, config.timing_repetitions)?,
    })
}

/// Tunes and tests every configured model on one dataset.
///
/// Holdout splits give one test score per model. A `cv:k` split runs an
/// outer loop with each fold as the test set and a two-thirds/one-third
/// holdout carved from the remaining folds for tuning.
pub fn bench_dataset(name: &str, raw: &RawData, config: &BenchConfig) -> Result<DatasetResult> {
    let (ds, parts) = normalize_for_split(raw, &config.split)?;
    let plans: Vec<(TuningPlan, Vec<usize>)> = match &parts {
        Partitions::Holdout { .. } => vec![TuningPlan::from_holdout(&parts)?],
        Partitions::Folds(folds) => (0..folds.len())
            .map(|k| {
                let rest: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                Ok((TuningPlan::holdout_from(&rest)?, folds[k].clone()))
            })
            .collect::<Result<_>>()?,
    };
    let results = config
        .models
        .iter()
        .map(|&kind| {
            let folds: Result<Vec<FoldResult>> = plans
                .iter()
                .map(|(plan, test)| run_fold(&ds, config, kind, plan, test))
                .collect();
            match folds {
                Ok(folds) => ModelResult {
                    model: kind,
                    test_r2: Some(folds.iter().map(|f| f.test_r2).sum::<f64>() / folds.len() as f64),
                    folds,
                    error: None,
                },
                Err(e) => {
                    log::warn!("{name}: {kind} failed: {e}");
                    ModelResult {
                        model: kind,
                        test_r2: None,
                        folds: Vec::new(),
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(DatasetResult {
        name: name.to_string(),
        n_samples: raw.n_samples(),
        n_features: raw.n_features(),
        results,
    })
}

/// Aggregates per-dataset results into mean scores, Friedman mean ranks and
/// pairwise paired t-tests.
pub fn summarize(config: BenchConfig, datasets: Vec<DatasetResult>) -> BenchmarkReport {
    let m = config.models.len();
    let score = |d: &DatasetResult, j: usize| d.results.get(j).and_then(|r| r.test_r2);
    let mean_r2 = (0..m)
        .map(|j| {
            let v: Option<Vec<f64>> = datasets.iter().map(|d| score(d, j)).collect();
            v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let table: Option<Vec<Vec<f64>>> = datasets.iter().map(|d| (0..m).map(|j| score(d, j)).collect()).collect();
    let friedman_ranks = table.and_then(|t| friedman_rank(&t).ok());

    let fold_scores = |j: usize| -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for d in &datasets {
            let r = d.results.get(j)?;
            r.test_r2?;
            out.extend(r.folds.iter().map(|f| f.test_r2));
        }
        Some(out)
    };
    let mut ttests = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            if let (Some(x), Some(y)) = (fold_scores(a), fold_scores(b)) {
                if let Ok(result) = paired_ttest(&x, &y) {
                    ttests.push(PairwiseTest {
                        a: config.models[a],
                        b: config.models[b],
                        result,
                    });
                }
            }
        }
    }
    BenchmarkReport {
        config,
        datasets,
        mean_r2,
        friedman_ranks,
        ttests,
    }
}

pub fn run_benchmark(datasets: &[(String, RawData)], config: &BenchConfig) -> Result<BenchmarkReport> {
    let results = datasets
        .iter()
        .map(|(name, raw)| bench_dataset(name, raw, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(config.clone(), results))
}

impl BenchmarkReport {
    /// Column-aligned summary: one row per model with tree count, depth,
    /// mean test R² (percent) and Friedman rank.
    pub fn to_table(&self) -> String {
        let header = ["Model", "Trees", "Depth", "Test R2 (%)", "Params", "Predict (s)", "Friedman Rank"];
        let mut rows = vec![header.map(String::from).to_vec()];
        for (j, kind) in self.config.models.iter().enumerate() {
            let folds: Vec<&FoldResult> = self
                .datasets
                .iter()
                .filter_map(|d| d.results.get(j))
                .flat_map(|r| r.folds.iter())
                .collect();
            let join = |f: &dyn Fn(&FoldResult) -> String| {
                if folds.is_empty() {
                    "-".to_string()
                } else {
                    let mut v: Vec<String> = folds.iter().map(|x| f(x)).collect();
                    v.dedup();
                    v.join(",")
                }
            };
            let mean = |f: &dyn Fn(&FoldResult) -> f64| folds.iter().map(|x| f(x)).sum::<f64>() / folds.len().max(1) as f64;
            rows.push(vec![
                kind.to_string(),
                join(&|f| f.n_trees.map_or("1".to_string(), |n| n.to_string())),
                join(&|f| f.depth.to_string()),
                self.mean_r2[j].map_or("failed".to_string(), |r| format!("{:.2}", 100.0 * r)),
                if folds.is_empty() { "-".into() } else { format!("{:.0}", mean(&|f| f.parameters as f64)) },
                if folds.is_empty() { "-".into() } else { format!("{:.3e}", mean(&|f| f.predict_time_secs)) },
                self.friedman_ranks
                    .as_ref()
                    .map_or("-".to_string(), |r| format!("{:.2}", r[j])),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}
