//! Subtree polish: one breadth-first sweep over branch nodes, re-training
//! the subtree under each node on the samples that reach it and keeping the
//! result only when the full-tree hard loss drops.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::leaf_fit;
use crate::train::{self, TrainConfig};
use crate::tree::{node_depth, ObliqueTree};

/// Minimum full-tree loss decrease that counts as an improvement.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolishConfig {
    /// Outer training configuration; depth and leaf mode come from the tree.
    pub train: TrainConfig,
    /// Subtree starts as a fraction of `train.n_starts`.
    pub start_fraction: f64,
    /// Subtree epochs as a fraction of `train.n_epochs`.
    pub epoch_fraction: f64,
}

impl PolishConfig {
    pub fn new(train: TrainConfig) -> Self {
        PolishConfig {
            train,
            start_fraction: 0.5,
            epoch_fraction: 0.5,
        }
    }

    fn subtree_config(&self, tree: &ObliqueTree, node: usize) -> TrainConfig {
        let scaled = |v: usize, f: f64| ((v as f64 * f).round() as usize).max(1);
        TrainConfig {
            depth: tree.depth - node_depth(node),
            leaf_mode: tree.leaf_mode,
            n_starts: scaled(self.train.n_starts, self.start_fraction),
            n_epochs: scaled(self.train.n_epochs, self.epoch_fraction),
            seed: self
                .train
                .seed
                .wrapping_add((node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    TooFewSamples,
    ConstantTargets,
    TrainingFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePolish {
    pub node: usize,
    pub subset_size: usize,
    pub skipped: Option<SkipReason>,
    pub pre_loss: f64,
    pub post_loss: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolishReport {
    pub nodes: Vec<NodePolish>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

impl PolishReport {
    pub fn n_accepted(&self) -> usize {
        self.nodes.iter().filter(|n| n.accepted).count()
    }
}

/// Indices of samples whose hard route passes through branch node `node`.
pub fn node_subset(tree: &ObliqueTree, ds: &Dataset, node: usize) -> Vec<usize> {
    let shift = tree.depth - node_depth(node);
    ds.features
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, x)| tree.leaf_node(*x) >> shift == node)
        .map(|(i, _)| i)
        .collect()
}

fn has_distinct_targets(ds: &Dataset, rows: &[usize]) -> bool {
    let first = ds.targets[rows[0]];
    rows.iter().any(|&i| ds.targets[i] != first)
}

pub fn polish(tree: &ObliqueTree, ds: &Dataset, config: &PolishConfig) -> Result<(ObliqueTree, PolishReport)> {
    config.train.validate()?;
    let mut current = tree.clone();
    let mut current_loss = current.hard_loss(ds);
    let initial_loss = current_loss;
    let mut nodes = Vec::with_capacity(tree.n_branches());

    for node in 1..=tree.n_branches() {
        let rows = node_subset(&current, ds, node);
        let mut entry = NodePolish {
            node,
            subset_size: rows.len(),
            skipped: None,
            pre_loss: current_loss,
            post_loss: current_loss,
            accepted: false,
        };
        if rows.len() <= 1 {
            entry.skipped = Some(SkipReason::TooFewSamples);
        } else if !has_distinct_targets(ds, &rows) {
            entry.skipped = Some(SkipReason::ConstantTargets);
        } else {
            let sub_ds = ds.subset(&rows);
            let warm = current.subtree(node);
            let cfg = config.subtree_config(&current, node);
            match train::fit_warm(&sub_ds, &cfg, Some(&warm)) {
                Ok((sub, _)) => {
                    let mut candidate = current.clone();
                    candidate.splice(node, &sub);
                    let loss = candidate.hard_loss(ds);
                    entry.post_loss = loss;
                    if loss < current_loss - IMPROVEMENT_TOLERANCE {
                        entry.accepted = true;
                        current = candidate;
                        current_loss = loss;
                    }
                }
                Err(e) => {
                    log::warn!("polish: subtree at node {node} failed: {e}");
                    entry.skipped = Some(SkipReason::TrainingFailed);
                }
            }
        }
        log::debug!("polish node {node}: {entry:?}");
        nodes.push(entry);
    }

    let (refit, _) = leaf_fit::refit(&current, ds);
    let refit_loss = refit.hard_loss(ds);
    let (out, final_loss) = if refit_loss <= current_loss {
        (refit, refit_loss)
    } else {
        (current, current_loss)
    };
    Ok((
        out,
        PolishReport {
            nodes,
            initial_loss,
            final_loss,
        },
    ))
}
