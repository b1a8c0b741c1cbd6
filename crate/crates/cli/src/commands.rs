use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use obtree::dataset::{self, read_table, Partitions, SplitMode, SplitSpec, TargetColumn};
use obtree::eval::bench::{run_benchmark, BenchConfig};
use obtree::eval::{r2, tune_depth, ModelKind, ModelSpec, TuningPlan};
use obtree::polish::{polish, PolishConfig};
use obtree::train::{fit, AlphaSchedule, CosineWarmRestarts, OptimizerKind, TrainConfig};
use obtree::{Dataset, FittedModel, LeafMode, Model, RawData};
use serde::Serialize;

use crate::args::{BenchArgs, DataArgs, OptimArgs, PredictArgs, TrainArgs, TuneArgs};
use crate::report::{BenchCommandReport, Scores, TrainCommandReport, TuneCommandReport};

fn parse_range(flag: &str, s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(',')
        .with_context(|| format!("--{flag} expects `lo,hi`, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().with_context(|| format!("--{flag}: bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("--{flag}: bad number `{hi}`"))?;
    Ok((lo, hi))
}

/// Parses `lo:hi` (inclusive) or a comma-separated list.
pub fn parse_grid(flag: &str, s: &str) -> Result<Vec<usize>> {
    let grid: Vec<usize> = if let Some((lo, hi)) = s.split_once(':') {
        let lo: usize = lo.trim().parse().with_context(|| format!("--{flag}: bad bound `{lo}`"))?;
        let hi: usize = hi.trim().parse().with_context(|| format!("--{flag}: bad bound `{hi}`"))?;
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().with_context(|| format!("--{flag}: bad value `{v}`")))
            .collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.contains(&0) {
        bail!(obtree::Error::Config(format!("--{flag} must list positive values, got `{s}`")));
    }
    Ok(grid)
}

fn train_config(optim: &OptimArgs, depth: usize, leaf_mode: LeafMode, seed: u64) -> Result<TrainConfig> {
    let optimizer = match optim.optimizer.as_str() {
        "adam" => OptimizerKind::adam(),
        "gd" => OptimizerKind::GradientDescent,
        other => bail!(obtree::Error::Config(format!("unknown optimizer `{other}` (expected adam or gd)"))),
    };
    let lr = CosineWarmRestarts {
        eta_max: optim.lr,
        eta_min: CosineWarmRestarts::default().eta_min.min(optim.lr),
        ..CosineWarmRestarts::default()
    };
    let cfg = TrainConfig {
        depth,
        leaf_mode,
        n_starts: optim.starts,
        n_epochs: optim.epochs,
        alpha: AlphaSchedule::Ranges {
            ranges: vec![
                parse_range("alpha-small", &optim.alpha_small)?,
                parse_range("alpha-large", &optim.alpha_large)?,
            ],
        },
        lr,
        optimizer,
        lambda: optim.lambda,
        seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn polish_enabled(leaf: LeafMode, on: bool, off: bool) -> bool {
    if off {
        false
    } else {
        on || leaf == LeafMode::Constant
    }
}

fn load(path: &Path, input: &DataArgs) -> Result<RawData> {
    let target: TargetColumn = input.target.parse().expect("infallible");
    dataset::load_csv(path, &target, input.header).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn r2_of(model: &Model, ds: &Dataset) -> Option<f64> {
    let pred = model.predict(&ds.features).ok()?;
    r2(ds.targets.as_slice()?, pred.as_slice()?).ok().map(|s| s.r2)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let raw = load(&args.data, &args.input)?;
    let (ds, train_rows, test_rows) = match &args.split {
        None => (dataset::normalize(&raw), (0..raw.n_samples()).collect(), Vec::new()),
        Some(s) => {
            let mode: SplitMode = s.parse()?;
            if matches!(mode, SplitMode::KFold(_)) {
                bail!(obtree::Error::Config("train takes a holdout split; use tune for cv:k".into()));
            }
            let spec = SplitSpec {
                mode,
                seed: args.input.seed,
            };
            let (ds, parts) = dataset::normalize_for_split(&raw, &spec)?;
            let Partitions::Holdout {
                train,
                validation,
                test,
            } = parts
            else {
                unreachable!("holdout mode gives holdout partitions")
            };
            (ds, [train, validation].concat(), test)
        }
    };
    let cfg = train_config(&args.optim, args.depth, args.leaf, args.input.seed)?;
    let train_ds = ds.subset(&train_rows);
    log::info!(
        "training depth-{} {} tree on {} rows ({} starts x {} epochs)",
        cfg.depth,
        cfg.leaf_mode,
        train_ds.n_samples(),
        cfg.n_starts,
        cfg.n_epochs
    );
    let (mut tree, train_report) = fit(&train_ds, &cfg)?;
    log::info!("best hard loss {:.6e} (start {})", train_report.best_hard_loss, train_report.best_start);

    let polish_report = if polish_enabled(args.leaf, args.polish, args.no_polish) {
        let (polished, report) = polish(&tree, &train_ds, &PolishConfig::new(cfg.clone()))?;
        log::info!(
            "polish accepted {} of {} nodes, hard loss {:.6e} -> {:.6e}",
            report.n_accepted(),
            report.nodes.len(),
            report.initial_loss,
            report.final_loss
        );
        tree = polished;
        Some(report)
    } else {
        None
    };

    let model = Model::Oblique(tree);
    let scores = Scores {
        train_r2: r2_of(&model, &train_ds),
        test_r2: (!test_rows.is_empty()).then(|| r2_of(&model, &ds.subset(&test_rows))).flatten(),
        n_train: train_rows.len(),
        n_test: test_rows.len(),
    };
    let parameters = model.count_parameters();
    FittedModel { model, norm: ds.norm.clone() }
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {}", args.out.display());
    if let Some(path) = &args.report {
        let report = TrainCommandReport {
            command: "train".into(),
            flags: args.clone(),
            config: cfg,
            train: train_report,
            polish: polish_report,
            scores,
            parameters,
        };
        write_json(path, &report)?;
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let fitted = FittedModel::load(&args.model).with_context(|| format!("reading model {}", args.model.display()))?;
    let table = read_table(&args.data, args.header).with_context(|| format!("reading {}", args.data.display()))?;
    let mut text = String::new();
    if table.values.nrows() > 0 {
        let x = match &args.target {
            Some(t) => {
                let col = table.column_index(&t.parse().expect("infallible"))?;
                table.without_column(col).0
            }
            None => table.values.clone(),
        };
        for v in fitted.predict_raw(&x)? {
            text.push_str(&format!("{v}\n"));
        }
    }
    match &args.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn spec_for(kind: ModelKind, optim: &OptimArgs, seed: u64, polish_on: bool, polish_off: bool, trees: usize) -> Result<ModelSpec> {
    Ok(match kind {
        ModelKind::Get | ModelKind::GetLinear => {
            let leaf = if kind == ModelKind::Get { LeafMode::Constant } else { LeafMode::Linear };
            ModelSpec::Oblique {
                train: train_config(optim, 1, leaf, seed)?,
                polish: polish_enabled(leaf, polish_on, polish_off),
            }
        }
        ModelKind::Cart => ModelSpec::Cart { min_samples_split: 2 },
        ModelKind::Rf => ModelSpec::Forest(obtree::baselines::ForestConfig {
            n_trees: trees,
            seed,
            ..Default::default()
        }),
    })
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let raw = load(&args.data, &args.input)?;
    let spec = SplitSpec {
        mode: args.split.parse()?,
        seed: args.input.seed,
    };
    let grid = parse_grid("depths", &args.depths)?;
    let model_spec = spec_for(args.model, &args.optim, args.input.seed, args.polish, args.no_polish, args.trees)?;
    let (ds, parts) = dataset::normalize_for_split(&raw, &spec)?;
    let (plan, test) = match parts {
        Partitions::Folds(folds) => (TuningPlan::CrossValidation { folds }, Vec::new()),
        holdout => TuningPlan::from_holdout(&holdout)?,
    };
    log::info!("tuning {} over depths {:?}", args.model, grid);
    let tuned = tune_depth(&ds, &model_spec, &grid, &plan)?;
    for s in &tuned.scores {
        match (s.validation_r2, &s.error) {
            (Some(r), _) => log::info!("depth {:>2}: validation R² {r:.4}", s.depth),
            (None, Some(e)) => log::warn!("depth {:>2}: failed: {e}", s.depth),
            _ => {}
        }
    }
    log::info!("selected depth {}", tuned.best_depth);
    let test_r2 = (!test.is_empty()).then(|| r2_of(&tuned.model, &ds.subset(&test))).flatten();
    if let Some(path) = &args.out {
        FittedModel {
            model: tuned.model.clone(),
            norm: ds.norm.clone(),
        }
        .save(path)?;
    }
    if let Some(path) = &args.report {
        let report = TuneCommandReport {
            command: "tune".into(),
            flags: args.clone(),
            model: model_spec,
            best_depth: tuned.best_depth,
            best_validation_r2: tuned.best_validation_r2,
            scores: tuned.scores,
            test_r2,
            parameters: tuned.model.count_parameters(),
        };
        write_json(path, &report)?;
    }
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let models: Vec<ModelKind> = args
        .models
        .split(',')
        .map(|m| m.trim().parse::<ModelKind>())
        .collect::<obtree::Result<_>>()?;
    let mut config = BenchConfig::new(SplitSpec {
        mode: args.split.parse()?,
        seed: args.input.seed,
    });
    config.models = models;
    config.depth_grid = parse_grid("depths", &args.depths)?;
    config.rf_depth_grid = parse_grid("rf-depths", &args.rf_depths)?;
    config.rf_tree_grid = parse_grid("rf-trees", &args.rf_trees)?;
    config.train = train_config(&args.optim, 1, LeafMode::Constant, args.input.seed)?;
    config.polish_constant = !args.no_polish;
    config.polish_linear = args.polish_linear;
    config.timing_repetitions = args.timing_reps.max(1);

    let datasets = args
        .data
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, load(p, &args.input)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = run_benchmark(&datasets, &config)?;
    let table = report.to_table();
    match &args.table {
        Some(path) => fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{table}"),
    }
    if let Some(path) = &args.report {
        write_json(
            path,
            &BenchCommandReport {
                command: "bench".into(),
                flags: args.clone(),
                report,
            },
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("d", "1:4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_grid("d", "50,100").unwrap(), vec![50, 100]);
        assert!(parse_grid("d", "0:3").is_err());
        assert!(parse_grid("d", "4:1").is_err());
        assert!(parse_grid("d", "x").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("a", "5, 25").unwrap(), (5.0, 25.0));
        assert!(parse_range("a", "5").is_err());
    }
}
