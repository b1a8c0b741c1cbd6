//! Recomputes leaf parameters from hard routing with the splits held fixed.
//!
//! Constant leaves take the mean target of their samples. Linear leaves take
//! the least-squares fit of `y ~ k . x + h` over their samples, solved by
//! Householder QR. Leaves with fewer than `p + 1` samples, or whose QR factor
//! has a diagonal condition estimate above `1e10`, are fitted by ridge
//! regression with penalty `1e-8` on `k` only. Leaves with one sample predict
//! that sample's target. Empty leaves inherit the mean of the nearest
//! ancestor whose subtree received samples (with `k = 0`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::tree::{LeafMode, ObliqueTree};

pub const RIDGE_PENALTY: f64 = 1e-8;
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Mean,
    LeastSquares,
    RidgeFallback,
    Inherited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafFitReport {
    /// Samples routed to each leaf, by leaf position.
    pub counts: Vec<usize>,
    pub kinds: Vec<FitKind>,
}

/// Dispatches on the tree's leaf mode.
pub fn refit(tree: &ObliqueTree, ds: &Dataset) -> (ObliqueTree, LeafFitReport) {
    match tree.leaf_mode {
        LeafMode::Constant => refit_constant(tree, ds),
        LeafMode::Linear => refit_linear(tree, ds),
    }
}

/// Samples per leaf position, in row order.
fn group_by_leaf(tree: &ObliqueTree, ds: &Dataset) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); tree.n_leaves()];
    let leaves = tree
        .leaf_positions(&ds.features)
        .expect("dataset width matches tree");
    for (i, l) in leaves.into_iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// Target sums and counts for every node's subtree, indexed by node number.
fn subtree_totals(tree: &ObliqueTree, ds: &Dataset, groups: &[Vec<usize>]) -> (Vec<f64>, Vec<usize>) {
    let nodes = tree.n_nodes();
    let mut sum = vec![0.0; nodes + 1];
    let mut count = vec![0usize; nodes + 1];
    let first = tree.first_leaf();
    for (l, g) in groups.iter().enumerate() {
        sum[first + l] = g.iter().map(|&i| ds.targets[i]).sum();
        count[first + l] = g.len();
    }
    for t in (1..first).rev() {
        sum[t] = sum[2 * t] + sum[2 * t + 1];
        count[t] = count[2 * t] + count[2 * t + 1];
    }
    (sum, count)
}

fn inherited_mean(t: usize, sum: &[f64], count: &[usize]) -> f64 {
    let mut node = t;
    while node > 1 && count[node] == 0 {
        node /= 2;
    }
    if count[node] == 0 {
        0.0
    } else {
        sum[node] / count[node] as f64
    }
}

pub fn refit_constant(tree: &ObliqueTree, ds: &Dataset) -> (ObliqueTree, LeafFitReport) {
    let groups = group_by_leaf(tree, ds);
    let (sum, count) = subtree_totals(tree, ds, &groups);
    let first = tree.first_leaf();
    let mut out = tree.clone();
    out.coefs.fill(0.0);
    let mut kinds = Vec::with_capacity(groups.len());
    for (l, g) in groups.iter().enumerate() {
        let t = first + l;
        if g.is_empty() {
            out.intercepts[l] = inherited_mean(t, &sum, &count);
            kinds.push(FitKind::Inherited);
        } else {
            out.intercepts[l] = sum[t] / count[t] as f64;
            kinds.push(FitKind::Mean);
        }
    }
    let counts = groups.iter().map(Vec::len).collect();
    (out, LeafFitReport { counts, kinds })
}

pub fn refit_linear(tree: &ObliqueTree, ds: &Dataset) -> (ObliqueTree, LeafFitReport) {
    let groups = group_by_leaf(tree, ds);
    let (sum, count) = subtree_totals(tree, ds, &groups);
    let first = tree.first_leaf();
    let p = tree.n_features();
    let mut out = tree.clone();
    let mut kinds = Vec::with_capacity(groups.len());
    for (l, g) in groups.iter().enumerate() {
        let t = first + l;
        let (k, h, kind) = match g.len() {
            0 => (vec![0.0; p], inherited_mean(t, &sum, &count), FitKind::Inherited),
            1 => (vec![0.0; p], ds.targets[g[0]], FitKind::Mean),
            _ => fit_linear_leaf(ds, g),
        };
        out.coefs.row_mut(l).assign(&ndarray::Array1::from(k));
        out.intercepts[l] = h;
        kinds.push(kind);
    }
    let counts = groups.iter().map(Vec::len).collect();
    (out, LeafFitReport { counts, kinds })
}

fn fit_linear_leaf(ds: &Dataset, rows: &[usize]) -> (Vec<f64>, f64, FitKind) {
    let p = ds.n_features();
    let m = rows.len();
    if m > p {
        let design = DMatrix::from_fn(m, p + 1, |i, j| {
            if j < p {
                ds.features[[rows[i], j]]
            } else {
                1.0
            }
        });
        let y = DVector::from_iterator(m, rows.iter().map(|&i| ds.targets[i]));
        if let Some(beta) = qr_least_squares(design, &y) {
            let k = beta.rows(0, p).iter().copied().collect();
            return (k, beta[p], FitKind::LeastSquares);
        }
    }
    let (k, h) = ridge_fit(ds, rows, RIDGE_PENALTY);
    (k, h, FitKind::RidgeFallback)
}

/// Solves `min ||A beta - y||` by QR; `None` when `R` is ill-conditioned.
fn qr_least_squares(a: DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if min.is_nan() || min <= 0.0 || max / min > CONDITION_LIMIT {
        return None;
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

/// Ridge on centered data so the intercept is unpenalized.
pub(crate) fn ridge_fit(ds: &Dataset, rows: &[usize], penalty: f64) -> (Vec<f64>, f64) {
    let p = ds.n_features();
    let m = rows.len();
    let mean_x: Vec<f64> = (0..p)
        .map(|j| rows.iter().map(|&i| ds.features[[i, j]]).sum::<f64>() / m as f64)
        .collect();
    let mean_y = rows.iter().map(|&i| ds.targets[i]).sum::<f64>() / m as f64;
    let sqrt_pen = penalty.sqrt();
    let aug = DMatrix::from_fn(m + p, p, |i, j| {
        if i < m {
            ds.features[[rows[i], j]] - mean_x[j]
        } else if i - m == j {
            sqrt_pen
        } else {
            0.0
        }
    });
    let rhs = DVector::from_fn(m + p, |i, _| if i < m { ds.targets[rows[i]] - mean_y } else { 0.0 });
    let qr = aug.qr();
    let qty = qr.q().transpose() * rhs;
    let k: Vec<f64> = match qr.r().solve_upper_triangular(&qty) {
        Some(k) => k.iter().copied().collect(),
        None => vec![0.0; p],
    };
    let h = mean_y - k.iter().zip(&mean_x).map(|(k, x)| k * x).sum::<f64>();
    (k, h)
}
