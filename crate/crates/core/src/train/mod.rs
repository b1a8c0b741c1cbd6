//! Gradient-based entire-tree optimization.
//!
//! For every start: initialize a tree, draw an ascending list of scale
//! factors, and for each scale factor run full-batch descent on the soft
//! loss, refit the leaves from hard routing, and score the candidate by its
//! hard loss. Each scale factor's phase begins from the previous phase's
//! refit candidate. The best candidate over all starts and phases wins; on
//! equal loss the earlier one is kept.
//!
//! Start `s` draws from `ChaCha8Rng::seed_from_u64(seed)` with stream
//! `s + 1`, so starts are independent of each other and of thread count.

mod lr;
mod optim;

pub use lr::CosineWarmRestarts;
pub use optim::OptimizerKind;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::leaf_fit;
use crate::softgrad::{Gradients, RegularizationConfig, ScaleFactor, Workspace};
use crate::tree::{LeafMode, ObliqueTree, ParameterCount};
use optim::Optimizer;

/// How scale factors are drawn for each start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSchedule {
    /// One uniform draw from each range.
    Ranges { ranges: Vec<(f64, f64)> },
    /// `count` equal sub-ranges of `[min, max]`, one uniform draw from each.
    Partition { min: f64, max: f64, count: usize },
    /// The given values, used as-is every start.
    Fixed { values: Vec<f64> },
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        AlphaSchedule::Ranges {
            ranges: vec![(5.0, 25.0), (50.0, 150.0)],
        }
    }
}

/// Scaling applied to the loss gradient before each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScale {
    /// Gradient of the summed loss.
    Sum,
    /// Gradient of the summed loss divided by the sample count.
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub depth: usize,
    pub leaf_mode: LeafMode,
    pub n_starts: usize,
    pub n_epochs: usize,
    pub alpha: AlphaSchedule,
    pub lr: CosineWarmRestarts,
    pub optimizer: OptimizerKind,
    pub gradient_scale: GradientScale,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            depth: 2,
            leaf_mode: LeafMode::Constant,
            n_starts: 10,
            n_epochs: 3000,
            alpha: AlphaSchedule::default(),
            lr: CosineWarmRestarts::default(),
            optimizer: OptimizerKind::adam(),
            gradient_scale: GradientScale::Mean,
            lambda: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 20 {
            return Err(Error::Config(format!("depth must be in 1..=20, got {}", self.depth)));
        }
        if self.n_starts == 0 {
            return Err(Error::Config("need at least one start".into()));
        }
        if self.n_epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match &self.alpha {
            AlphaSchedule::Ranges { ranges } => {
                if ranges.is_empty() {
                    return Err(Error::Config("alpha schedule is empty".into()));
                }
                for &(lo, hi) in ranges {
                    if !(positive(lo) && positive(hi) && lo <= hi) {
                        return Err(Error::Config(format!("invalid alpha range [{lo}, {hi}]")));
                    }
                }
            }
            AlphaSchedule::Partition { min, max, count } => {
                if *count == 0 || !(positive(*min) && positive(*max) && min <= max) {
                    return Err(Error::Config("invalid alpha partition".into()));
                }
            }
            AlphaSchedule::Fixed { values } => {
                if values.is_empty() || !values.iter().all(|&v| positive(v)) {
                    return Err(Error::Config("fixed alphas must be positive".into()));
                }
            }
        }
        let lr = &self.lr;
        if !(lr.eta_max >= 0.0 && lr.eta_min >= 0.0 && lr.eta_min <= lr.eta_max) || lr.first_period == 0 {
            return Err(Error::Config("invalid learning-rate schedule".into()));
        }
        RegularizationConfig::new(self.lambda)?;
        Ok(())
    }

    fn regularization(&self) -> RegularizationConfig {
        RegularizationConfig { lambda: self.lambda }
    }
}

/// RNG for start `s`.
pub fn start_rng(seed: u64, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64 + 1);
    rng
}

/// Random initialization: unit-norm split weights, thresholds through a
/// random training sample, intercepts at the target mean plus noise in
/// `[-0.01, 0.01]`, leaf coefficients zero.
pub fn init_tree<R: Rng + ?Sized>(depth: usize, ds: &Dataset, leaf_mode: LeafMode, rng: &mut R) -> ObliqueTree {
    let p = ds.n_features();
    let n = ds.n_samples();
    let mut tree = ObliqueTree::zeros(depth, p, leaf_mode);
    for j in 0..tree.n_branches() {
        let mut a: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            a.iter_mut().for_each(|v| *v /= norm);
        } else {
            a[0] = 1.0;
        }
        let r = rng.random_range(0..n);
        let b: f64 = a.iter().zip(ds.features.row(r)).map(|(a, x)| a * x).sum();
        tree.weights.row_mut(j).assign(&ndarray::Array1::from(a));
        tree.thresholds[j] = b;
    }
    let mean = ds.targets.mean().unwrap_or(0.0);
    for h in tree.intercepts.iter_mut() {
        *h = mean + rng.random_range(-0.01..=0.01);
    }
    tree
}

/// Draws the ascending scale-factor sequence for one start.
pub fn sample_alpha_schedule<R: Rng + ?Sized>(schedule: &AlphaSchedule, rng: &mut R) -> Vec<ScaleFactor> {
    let draw = |rng: &mut R, lo: f64, hi: f64| if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let mut alphas: Vec<f64> = match schedule {
        AlphaSchedule::Ranges { ranges } => ranges.iter().map(|&(lo, hi)| draw(rng, lo, hi)).collect(),
        AlphaSchedule::Partition { min, max, count } => {
            let width = (max - min) / *count as f64;
            (0..*count)
                .map(|i| {
                    let lo = min + width * i as f64;
                    let hi = if i + 1 == *count { *max } else { lo + width };
                    draw(rng, lo, hi)
                })
                .collect()
        }
        AlphaSchedule::Fixed { values } => values.clone(),
    };
    alphas.sort_by(|a, b| a.total_cmp(b));
    alphas
        .into_iter()
        .map(|a| ScaleFactor::new(a).expect("validated alpha"))
        .collect()
}

/// Outcome of one descent phase at a fixed scale factor.
#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    /// Parameters at the lowest soft loss seen.
    pub tree: ObliqueTree,
    pub initial_soft_loss: f64,
    pub best_soft_loss: f64,
    pub final_soft_loss: f64,
    pub epochs: usize,
    /// Descent stopped early on a non-finite loss.
    pub aborted: bool,
}

/// Runs `n_epochs` full-batch updates at scale factor `alpha`.
pub fn gradient_descent_phase(
    tree: &ObliqueTree,
    ds: &Dataset,
    alpha: ScaleFactor,
    config: &TrainConfig,
) -> PhaseOutcome {
    let reg = config.regularization();
    let scale = match config.gradient_scale {
        GradientScale::Sum => 1.0,
        GradientScale::Mean => 1.0 / ds.n_samples() as f64,
    };
    let mut ws = Workspace::new(tree);
    let mut grads = Gradients::zeros(tree);
    let mut opt = Optimizer::new(config.optimizer, tree);
    let mut current = tree.clone();
    let mut best = tree.clone();
    let mut best_loss = f64::INFINITY;
    let mut initial = f64::NAN;
    let mut last = f64::NAN;
    let mut epochs = 0;
    let mut aborted = false;

    for k in 0..=config.n_epochs {
        let loss = match ws.evaluate(&current, ds, alpha, reg, &mut grads) {
            Ok(l) if l.is_finite() => l,
            _ => {
                aborted = true;
                break;
            }
        };
        if k == 0 {
            initial = loss;
        }
        last = loss;
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&current);
        }
        if k == config.n_epochs {
            break;
        }
        opt.apply(&mut current, &grads, config.lr.at(k), scale);
        epochs += 1;
    }

    PhaseOutcome {
        tree: best,
        initial_soft_loss: initial,
        best_soft_loss: best_loss,
        final_soft_loss: last,
        epochs,
        aborted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub alpha: f64,
    pub initial_soft_loss: f64,
    pub final_soft_loss: f64,
    pub best_soft_loss: f64,
    pub epochs: usize,
    pub aborted: bool,
    /// Hard loss of the refit candidate.
    pub hard_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: usize,
    pub alphas: Vec<f64>,
    pub phases: Vec<PhaseRecord>,
    pub error: Option<String>,
}

/// One accepted improvement of the running best candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub start: usize,
    pub iteration: usize,
    pub hard_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_samples: usize,
    pub starts: Vec<StartRecord>,
    /// Running-minimum acceptances, in start/iteration order.
    pub accepted: Vec<Acceptance>,
    pub best_hard_loss: f64,
    pub best_start: usize,
    pub best_iteration: usize,
    pub epochs_executed: usize,
    pub wall_time_secs: f64,
    pub parameters: ParameterCount,
}

/// Progress notifications from a sequential fit.
#[derive(Debug)]
pub enum TrainEvent<'a> {
    PhaseStart {
        start: usize,
        iteration: usize,
        alpha: f64,
        tree: &'a ObliqueTree,
    },
    Candidate {
        start: usize,
        iteration: usize,
        tree: &'a ObliqueTree,
        hard_loss: f64,
    },
}

struct StartResult {
    record: StartRecord,
    candidates: Vec<(ObliqueTree, f64)>,
}

fn run_start(
    ds: &Dataset,
    config: &TrainConfig,
    start: usize,
    warm: Option<&ObliqueTree>,
    observer: &mut dyn FnMut(&TrainEvent<'_>),
) -> StartResult {
    let mut rng = start_rng(config.seed, start);
    let init = init_tree(config.depth, ds, config.leaf_mode, &mut rng);
    let mut tree = match warm {
        Some(w) if start == 0 => w.clone(),
        _ => init,
    };
    let alphas = sample_alpha_schedule(&config.alpha, &mut rng);
    let mut record = StartRecord {
        start,
        alphas: alphas.iter().map(|a| a.get()).collect(),
        phases: Vec::with_capacity(alphas.len()),
        error: None,
    };
    let mut candidates = Vec::with_capacity(alphas.len());
    for (iteration, &alpha) in alphas.iter().enumerate() {
        observer(&TrainEvent::PhaseStart {
            start,
            iteration,
            alpha: alpha.get(),
            tree: &tree,
        });
        let phase = gradient_descent_phase(&tree, ds, alpha, config);
        let (candidate, _) = leaf_fit::refit(&phase.tree, ds);
        let hard_loss = candidate.hard_loss(ds);
        observer(&TrainEvent::Candidate {
            start,
            iteration,
            tree: &candidate,
            hard_loss,
        });
        record.phases.push(PhaseRecord {
            alpha: alpha.get(),
            initial_soft_loss: phase.initial_soft_loss,
            final_soft_loss: phase.final_soft_loss,
            best_soft_loss: phase.best_soft_loss,
            epochs: phase.epochs,
            aborted: phase.aborted,
            hard_loss,
        });
        if !hard_loss.is_finite() {
            record.error = Some(format!("non-finite hard loss at iteration {iteration}"));
            break;
        }
        tree = candidate.clone();
        candidates.push((candidate, hard_loss));
    }
    StartResult { record, candidates }
}

fn merge(
    ds: &Dataset,
    config: &TrainConfig,
    results: Vec<StartResult>,
    started: Instant,
) -> Result<(ObliqueTree, TrainReport)> {
    let mut best: Option<(ObliqueTree, f64, usize, usize)> = None;
    let mut accepted = Vec::new();
    let mut starts = Vec::with_capacity(results.len());
    let mut epochs_executed = 0;
    for res in results {
        let s = res.record.start;
        for (iteration, (tree, loss)) in res.candidates.into_iter().enumerate() {
            let improves = best.as_ref().is_none_or(|b| loss < b.1);
            if improves {
                accepted.push(Acceptance {
                    start: s,
                    iteration,
                    hard_loss: loss,
                });
                best = Some((tree, loss, s, iteration));
            }
        }
        epochs_executed += res.record.phases.iter().map(|p| p.epochs).sum::<usize>();
        starts.push(res.record);
    }
    let (tree, loss, best_start, best_iteration) = best.ok_or(Error::AllStartsFailed)?;
    let report = TrainReport {
        config: config.clone(),
        n_samples: ds.n_samples(),
        starts,
        accepted,
        best_hard_loss: loss,
        best_start,
        best_iteration,
        epochs_executed,
        wall_time_secs: started.elapsed().as_secs_f64(),
        parameters: tree.count_parameters(),
    };
    Ok((tree, report))
}

fn check_inputs(ds: &Dataset, config: &TrainConfig, warm: Option<&ObliqueTree>) -> Result<()> {
    config.validate()?;
    if ds.n_samples() == 0 {
        return Err(Error::NoRows);
    }
    if let Some(w) = warm {
        if w.depth != config.depth || w.n_features() != ds.n_features() || w.leaf_mode != config.leaf_mode {
            return Err(Error::Config("warm-start tree does not match the configuration".into()));
        }
    }
    Ok(())
}

/// Trains a tree, running starts in parallel on the current rayon pool.
pub fn fit(ds: &Dataset, config: &TrainConfig) -> Result<(ObliqueTree, TrainReport)> {
    fit_warm(ds, config, None)
}

/// Like [`fit`], but start 0 begins from `warm` instead of a random tree.
pub fn fit_warm(ds: &Dataset, config: &TrainConfig, warm: Option<&ObliqueTree>) -> Result<(ObliqueTree, TrainReport)> {
    check_inputs(ds, config, warm)?;
    let started = Instant::now();
    let results: Vec<StartResult> = (0..config.n_starts)
        .into_par_iter()
        .map(|s| run_start(ds, config, s, warm, &mut |_| {}))
        .collect();
    merge(ds, config, results, started)
}

/// Sequential fit that reports every phase start and candidate.
pub fn fit_observed(
    ds: &Dataset,
    config: &TrainConfig,
    warm: Option<&ObliqueTree>,
    observer: &mut dyn FnMut(&TrainEvent<'_>),
) -> Result<(ObliqueTree, TrainReport)> {
    check_inputs(ds, config, warm)?;
    let started = Instant::now();
    let results: Vec<StartResult> = (0..config.n_starts)
        .map(|s| run_start(ds, config, s, warm, observer))
        .collect();
    merge(ds, config, results, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>());
        let y = Array1::from_shape_fn(n, |i| if x[[i, 0]] + x[[i, 1]] < 1.0 { 0.2 } else { 0.8 });
        Dataset::new(x, y).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            depth: 2,
            n_starts: 2,
            n_epochs: 60,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn init_has_unit_weights_and_is_deterministic() {
        let ds = toy(50, 1);
        let a = init_tree(3, &ds, LeafMode::Constant, &mut start_rng(7, 0));
        let b = init_tree(3, &ds, LeafMode::Constant, &mut start_rng(7, 0));
        assert_eq!(a, b);
        for row in a.weights.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
        assert!(a.coefs.iter().all(|&k| k == 0.0));
        let mean = ds.targets.mean().unwrap();
        assert!(a.intercepts.iter().all(|h| (h - mean).abs() <= 0.01));
        assert_ne!(a, init_tree(3, &ds, LeafMode::Constant, &mut start_rng(7, 1)));
    }

    #[test]
    fn init_splits_are_mostly_non_degenerate() {
        let ds = toy(200, 2);
        let mut good = 0;
        let mut total = 0;
        for seed in 0..100 {
            let t = init_tree(2, &ds, LeafMode::Constant, &mut start_rng(seed, 0));
            for j in 1..=t.n_branches() {
                let left = ds.features.rows().into_iter().filter(|r| t.goes_left(j, *r)).count();
                total += 1;
                if left > 0 && left < ds.n_samples() {
                    good += 1;
                }
            }
        }
        assert!(good as f64 >= 0.9 * total as f64, "{good}/{total}");
    }

    #[test]
    fn alpha_schedule_default_and_degenerate() {
        let mut rng = start_rng(0, 0);
        for _ in 0..100 {
            let a = sample_alpha_schedule(&AlphaSchedule::default(), &mut rng);
            assert_eq!(a.len(), 2);
            let (a1, a2) = (a[0].get(), a[1].get());
            assert!((5.0..=25.0).contains(&a1) && (50.0..=150.0).contains(&a2));
        }
        let one = sample_alpha_schedule(
            &AlphaSchedule::Partition { min: 10.0, max: 10.0, count: 1 },
            &mut rng,
        );
        assert_eq!(one, vec![ScaleFactor::new(10.0).unwrap()]);
        let many = sample_alpha_schedule(
            &AlphaSchedule::Partition { min: 5.0, max: 150.0, count: 5 },
            &mut rng,
        );
        assert!(many.windows(2).all(|w| w[0] < w[1]));
        let fixed = sample_alpha_schedule(&AlphaSchedule::Fixed { values: vec![3.0, 1.0] }, &mut rng);
        assert_eq!(fixed[0].get(), 1.0);
    }

    #[test]
    fn perfect_fit_is_a_fixed_point() {
        let mut t = ObliqueTree::zeros(1, 1, LeafMode::Constant);
        t.weights = array![[1.0]];
        t.thresholds = array![0.5];
        t.intercepts = array![0.2, 0.8];
        let ds = Dataset::new(array![[0.1], [0.9]], array![0.2, 0.8]).unwrap();
        // alpha large enough that the soft routing is exactly hard
        let alpha = ScaleFactor::new(1e4).unwrap();
        for optimizer in [OptimizerKind::GradientDescent, OptimizerKind::adam()] {
            let cfg = TrainConfig { optimizer, n_epochs: 50, ..TrainConfig::default() };
            let out = gradient_descent_phase(&t, &ds, alpha, &cfg);
            assert_eq!(out.tree, t);
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let ds = toy(30, 3);
        let t = init_tree(2, &ds, LeafMode::Linear, &mut start_rng(1, 0));
        let mut cfg = small_config();
        cfg.lr.eta_max = 0.0;
        cfg.lr.eta_min = 0.0;
        for optimizer in [OptimizerKind::GradientDescent, OptimizerKind::adam()] {
            cfg.optimizer = optimizer;
            let out = gradient_descent_phase(&t, &ds, ScaleFactor::new(20.0).unwrap(), &cfg);
            assert_eq!(out.tree, t);
            assert_eq!(out.epochs, cfg.n_epochs);
        }
    }

    #[test]
    fn descent_reduces_soft_loss_on_two_clusters() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| if i < 20 { 0.1 + 0.005 * i as f64 } else { 0.7 + 0.005 * i as f64 });
        let y = Array1::from_shape_fn(40, |i| if i < 20 { 0.0 } else { 1.0 });
        let ds = Dataset::new(x, y).unwrap();
        let mut t = ObliqueTree::zeros(1, 1, LeafMode::Constant);
        t.weights = array![[1.0]];
        t.thresholds = array![0.2];
        t.intercepts = array![0.5, 0.5];
        for optimizer in [OptimizerKind::GradientDescent, OptimizerKind::adam()] {
            let cfg = TrainConfig { optimizer, n_epochs: 300, ..TrainConfig::default() };
            let out = gradient_descent_phase(&t, &ds, ScaleFactor::new(50.0).unwrap(), &cfg);
            assert!(out.final_soft_loss < out.initial_soft_loss, "{optimizer:?}: {out:?}");
        }
    }

    #[test]
    fn exploding_phase_aborts_gracefully() {
        let ds = toy(50, 4);
        let t = init_tree(2, &ds, LeafMode::Linear, &mut start_rng(0, 0));
        let cfg = TrainConfig {
            optimizer: OptimizerKind::GradientDescent,
            gradient_scale: GradientScale::Sum,
            lr: CosineWarmRestarts { eta_max: 1e6, eta_min: 1e6, first_period: 10, period_mult: 1 },
            n_epochs: 500,
            ..small_config()
        };
        let out = gradient_descent_phase(&t, &ds, ScaleFactor::new(10.0).unwrap(), &cfg);
        assert!(out.aborted);
        assert!(out.best_soft_loss.is_finite());
        assert!(out.tree.validate().is_ok());
    }

    #[test]
    fn constant_mode_keeps_zero_coefs() {
        let ds = toy(60, 5);
        let (tree, report) = fit(&ds, &small_config()).unwrap();
        assert!(tree.coefs.iter().all(|&k| k == 0.0));
        assert_eq!(report.starts.len(), 2);
        assert_eq!(report.epochs_executed, 2 * 2 * 60);
        assert_eq!(report.best_hard_loss, tree.hard_loss(&ds));
    }

    #[test]
    fn parallel_and_observed_fits_agree() {
        let ds = toy(60, 6);
        let cfg = small_config();
        let (a, ra) = fit(&ds, &cfg).unwrap();
        let (b, rb) = fit_observed(&ds, &cfg, None, &mut |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.accepted, rb.accepted);
    }

    #[test]
    fn warm_start_must_match() {
        let ds = toy(20, 7);
        let cfg = small_config();
        let wrong = ObliqueTree::zeros(3, 3, LeafMode::Constant);
        assert!(fit_warm(&ds, &cfg, Some(&wrong)).is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { depth: 0, ..TrainConfig::default() },
            TrainConfig { n_starts: 0, ..TrainConfig::default() },
            TrainConfig { n_epochs: 0, ..TrainConfig::default() },
            TrainConfig { lambda: -1.0, ..TrainConfig::default() },
            TrainConfig { alpha: AlphaSchedule::Ranges { ranges: vec![(25.0, 5.0)] }, ..TrainConfig::default() },
            TrainConfig { alpha: AlphaSchedule::Fixed { values: vec![] }, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
