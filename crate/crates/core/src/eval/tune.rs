use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stats::r2;
use crate::baselines::{fit_cart, fit_forest, ForestConfig};
use crate::dataset::{Dataset, Partitions};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::polish::{polish, PolishConfig};
use crate::train::{fit, TrainConfig};

/// How to train one model family at a given depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Oblique { train: TrainConfig, polish: bool },
    Cart { min_samples_split: usize },
    Forest(ForestConfig),
}

impl ModelSpec {
    pub fn train(&self, ds: &Dataset, depth: usize) -> Result<Model> {
        match self {
            ModelSpec::Oblique { train, polish: do_polish } => {
                let cfg = TrainConfig {
                    depth,
                    ..train.clone()
                };
                let (tree, _) = fit(ds, &cfg)?;
                if *do_polish {
                    let (tree, _) = polish(&tree, ds, &PolishConfig::new(cfg))?;
                    Ok(Model::Oblique(tree))
                } else {
                    Ok(Model::Oblique(tree))
                }
            }
            ModelSpec::Cart { min_samples_split } => Ok(Model::Cart(fit_cart(ds, depth, *min_samples_split)?)),
            ModelSpec::Forest(cfg) => Ok(Model::Forest(fit_forest(
                ds,
                &ForestConfig {
                    max_depth: Some(depth),
                    ..cfg.clone()
                },
            )?)),
        }
    }
}

/// Where validation scores come from during depth tuning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningPlan {
    Holdout { train: Vec<usize>, validation: Vec<usize> },
    CrossValidation { folds: Vec<Vec<usize>> },
}

impl TuningPlan {
    /// Holdout that gives the first two thirds of `rows` to training.
    pub fn holdout_from(rows: &[usize]) -> Result<Self> {
        let n_val = rows.len() / 3;
        if n_val == 0 {
            return Err(Error::EmptyPartition("validation"));
        }
        let (train, validation) = rows.split_at(rows.len() - n_val);
        Ok(TuningPlan::Holdout {
            train: train.to_vec(),
            validation: validation.to_vec(),
        })
    }

    /// Plan and test rows for a holdout partition. A holdout without a
    /// validation part has one carved from its training rows. Fold
    /// partitions have no test rows; use [`TuningPlan::CrossValidation`] or
    /// nest an outer loop instead.
    pub fn from_holdout(parts: &Partitions) -> Result<(Self, Vec<usize>)> {
        match parts {
            Partitions::Holdout {
                train,
                validation,
                test,
            } => {
                let plan = if validation.is_empty() {
                    Self::holdout_from(train)?
                } else {
                    TuningPlan::Holdout {
                        train: train.clone(),
                        validation: validation.clone(),
                    }
                };
                Ok((plan, test.clone()))
            }
            Partitions::Folds(_) => Err(Error::Config("fold partitions have no test rows".into())),
        }
    }

    /// Every row the plan touches, used for the final retrain.
    pub fn all_rows(&self) -> Vec<usize> {
        match self {
            TuningPlan::Holdout { train, validation } => train.iter().chain(validation).copied().collect(),
            TuningPlan::CrossValidation { folds } => folds.concat(),
        }
    }

    fn validation_r2(&self, ds: &Dataset, spec: &ModelSpec, depth: usize) -> Result<f64> {
        match self {
            TuningPlan::Holdout { train, validation } => score_on(ds, spec, depth, train, validation),
            TuningPlan::CrossValidation { folds } => {
                let mut total = 0.0;
                for (k, fold) in folds.iter().enumerate() {
                    let train: Vec<usize> = folds
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .flat_map(|(_, f)| f.iter().copied())
                        .collect();
                    total += score_on(ds, spec, depth, &train, fold)?;
                }
                Ok(total / folds.len() as f64)
            }
        }
    }
}

fn score_on(ds: &Dataset, spec: &ModelSpec, depth: usize, train: &[usize], eval: &[usize]) -> Result<f64> {
    let model = spec.train(&ds.subset(train), depth)?;
    let held = ds.subset(eval);
    let pred = model.predict(&held.features)?;
    Ok(r2(held.targets.as_slice().unwrap(), pred.as_slice().unwrap())?.r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScore {
    pub depth: usize,
    pub validation_r2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best_depth: usize,
    pub best_validation_r2: f64,
    pub scores: Vec<DepthScore>,
    /// Retrained on every row of the plan at `best_depth`.
    pub model: Model,
    pub train_time_secs: f64,
}

/// Picks the highest validation score, preferring the smaller depth on ties.
/// Returns `None` when no depth produced a score.
pub fn select_depth(scores: &[DepthScore]) -> Option<(usize, f64)> {
    scores
        .iter()
        .filter_map(|s| s.validation_r2.map(|r| (s.depth, r)))
        .fold(None, |best, (d, r)| match best {
            Some((bd, br)) if br > r || (br == r && bd <= d) => Some((bd, br)),
            _ => Some((d, r)),
        })
}

/// Trains at each depth of `grid` under `plan`, selects a depth by
/// validation R², and retrains on all of the plan's rows at that depth.
pub fn tune_depth(ds: &Dataset, spec: &ModelSpec, grid: &[usize], plan: &TuningPlan) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::Config("depth grid is empty".into()));
    }
    let scores: Vec<DepthScore> = grid
        .iter()
        .map(|&depth| match plan.validation_r2(ds, spec, depth) {
            Ok(r) => DepthScore {
                depth,
                validation_r2: Some(r),
                error: None,
            },
            Err(e) => {
                log::warn!("depth {depth} failed: {e}");
                DepthScore {
                    depth,
                    validation_r2: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let (best_depth, best_validation_r2) = select_depth(&scores).ok_or(Error::AllDepthsFailed)?;
    let started = Instant::now();
    let model = spec.train(&ds.subset(&plan.all_rows()), best_depth)?;
    Ok(TuneResult {
        best_depth,
        best_validation_r2,
        scores,
        model,
        train_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Mean wall-clock seconds per full-batch prediction over `repetitions`
/// runs, after one untimed warm-up run.
pub fn measure_prediction_time(model: &Model, x: &Array2<f64>, repetitions: usize) -> Result<f64> {
    let repetitions = repetitions.max(1);
    std::hint::black_box(model.predict(x)?);
    let started = Instant::now();
    for _ in 0..repetitions {
        std::hint::black_box(model.predict(x)?);
    }
    Ok(started.elapsed().as_secs_f64() / repetitions as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn ds() -> Dataset {
        let x = Array2::from_shape_fn((60, 2), |(i, j)| ((i * (j + 5) * 11) % 29) as f64 / 29.0);
        let y: Array1<f64> = x.rows().into_iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 } + 0.3 * r[1]).collect();
        Dataset::new(x, y).unwrap()
    }

    fn score(depth: usize, r: Option<f64>) -> DepthScore {
        DepthScore {
            depth,
            validation_r2: r,
            error: None,
        }
    }

    #[test]
    fn ties_prefer_smaller_depth() {
        let s = [score(1, Some(0.5)), score(2, Some(0.9)), score(3, Some(0.9))];
        assert_eq!(select_depth(&s), Some((2, 0.9)));
        assert_eq!(select_depth(&[score(3, Some(0.4))]), Some((3, 0.4)));
        assert_eq!(select_depth(&[score(1, None)]), None);
    }

    #[test]
    fn single_depth_grid() {
        let ds = ds();
        let plan = TuningPlan::holdout_from(&(0..60).collect::<Vec<_>>()).unwrap();
        let t = tune_depth(&ds, &ModelSpec::Cart { min_samples_split: 2 }, &[3], &plan).unwrap();
        assert_eq!(t.best_depth, 3);
        assert_eq!(t.scores.len(), 1);
    }

    #[test]
    fn cross_validation_plan_uses_all_rows() {
        let ds = ds();
        let folds = vec![(0..20).collect(), (20..40).collect(), (40..60).collect()];
        let plan = TuningPlan::CrossValidation { folds };
        assert_eq!(plan.all_rows().len(), 60);
        let t = tune_depth(&ds, &ModelSpec::Cart { min_samples_split: 2 }, &[1, 2, 4], &plan).unwrap();
        assert!([1, 2, 4].contains(&t.best_depth));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let plan = TuningPlan::holdout_from(&(0..60).collect::<Vec<_>>()).unwrap();
        assert!(tune_depth(&ds(), &ModelSpec::Cart { min_samples_split: 2 }, &[], &plan).is_err());
    }
}
