//! Differentiable relaxation of hard routing.
//!
//! Each branching indicator `1(b_j - a_j . x > 0)` is replaced by the scaled
//! sigmoid `S(b_j - a_j . x) = 1 / (1 + exp(-alpha (b_j - a_j . x)))`. Leaf
//! probabilities are products of these along the root-to-leaf path and the
//! loss is the probability-weighted squared residual summed over samples and
//! leaves, plus an optional L1 penalty on the split weights.
//!
//! Gradients are computed without dividing by path probabilities: a
//! top-down pass records the probability of reaching each node and a
//! bottom-up pass records the expected squared residual below each node, so
//! `dL/dS_j = reach_j * (V_left - V_right)`. Saturated nodes therefore give
//! exact zeros rather than `0 / 0`.
//!
//! Per-sample contributions are accumulated sequentially in row order, so
//! results are bitwise reproducible.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::{LeafMode, ObliqueTree, RoutingMatrix, RoutingMode};

/// Sigmoid sharpness `alpha > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaleFactor(f64);

impl ScaleFactor {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(ScaleFactor(alpha))
        } else {
            Err(Error::Config(format!("scale factor must be positive and finite, got {alpha}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegularizationConfig {
    /// L1 strength on split weights.
    pub lambda: f64,
}

impl RegularizationConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda >= 0.0 {
            Ok(RegularizationConfig { lambda })
        } else {
            Err(Error::Config(format!("lambda must be non-negative, got {lambda}")))
        }
    }
}

/// `1 / (1 + exp(-alpha z))`, saturating to exactly 0 or 1 instead of
/// overflowing.
#[inline]
pub fn scaled_sigmoid(z: f64, alpha: ScaleFactor) -> f64 {
    logistic(alpha.0 * z)
}

/// `d/dz S(z) = alpha S (1 - S)`.
#[inline]
pub fn scaled_sigmoid_grad(z: f64, alpha: ScaleFactor) -> f64 {
    let e = (-(alpha.0 * z).abs()).exp();
    alpha.0 * e / ((1.0 + e) * (1.0 + e))
}

#[inline]
fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Soft loss plus gradients for every trainable parameter.
#[derive(Debug, Clone)]
pub struct SoftEvaluation {
    pub loss: f64,
    pub grad_weights: Array2<f64>,
    pub grad_thresholds: Array1<f64>,
    /// Absent in constant mode.
    pub grad_coefs: Option<Array2<f64>>,
    pub grad_intercepts: Array1<f64>,
    pub soft_routing: Option<RoutingMatrix>,
}

/// Soft routing matrix `P_hat` under scale factor `alpha`.
pub fn soft_route(tree: &ObliqueTree, x: &Array2<f64>, alpha: ScaleFactor) -> Result<RoutingMatrix> {
    check_dim(tree, x.ncols())?;
    let mut ws = Workspace::new(tree);
    let mut weights = Array2::zeros((x.nrows(), tree.n_leaves()));
    let first = tree.first_leaf();
    for (i, row) in x.rows().into_iter().enumerate() {
        let row = row.to_vec();
        ws.forward_routing(tree, &row, alpha.0);
        for l in 0..tree.n_leaves() {
            weights[[i, l]] = ws.reach[first + l];
        }
    }
    Ok(RoutingMatrix {
        weights,
        mode: RoutingMode::Soft,
    })
}

/// Soft loss, analytic gradients and the soft routing matrix.
pub fn soft_loss_and_grad(
    tree: &ObliqueTree,
    ds: &Dataset,
    alpha: ScaleFactor,
    reg: RegularizationConfig,
) -> Result<SoftEvaluation> {
    let mut ws = Workspace::new(tree);
    let mut grads = Gradients::zeros(tree);
    let loss = ws.evaluate(tree, ds, alpha, reg, &mut grads)?;
    let routing = soft_route(tree, &ds.features, alpha)?;
    Ok(SoftEvaluation {
        loss,
        grad_weights: Array2::from_shape_vec(tree.weights.raw_dim(), grads.weights).unwrap(),
        grad_thresholds: Array1::from(grads.thresholds),
        grad_coefs: (tree.leaf_mode == LeafMode::Linear)
            .then(|| Array2::from_shape_vec(tree.coefs.raw_dim(), grads.coefs).unwrap()),
        grad_intercepts: Array1::from(grads.intercepts),
        soft_routing: Some(routing),
    })
}

fn check_dim(tree: &ObliqueTree, p: usize) -> Result<()> {
    if p != tree.n_features() {
        return Err(Error::DimensionMismatch {
            expected: tree.n_features(),
            found: p,
        });
    }
    Ok(())
}

/// Flat gradient buffers laid out like the tree's parameter arrays.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub weights: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub coefs: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl Gradients {
    pub fn zeros(tree: &ObliqueTree) -> Self {
        let p = tree.n_features();
        Gradients {
            weights: vec![0.0; tree.n_branches() * p],
            thresholds: vec![0.0; tree.n_branches()],
            coefs: vec![0.0; tree.n_leaves() * p],
            intercepts: vec![0.0; tree.n_leaves()],
        }
    }

    fn clear(&mut self) {
        for v in [&mut self.weights, &mut self.thresholds, &mut self.coefs, &mut self.intercepts] {
            v.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// Scratch buffers indexed by 1-based node number.
pub(crate) struct Workspace {
    z: Vec<f64>,
    s: Vec<f64>,
    sc: Vec<f64>,
    reach: Vec<f64>,
    value: Vec<f64>,
    resid: Vec<f64>,
}

impl Workspace {
    pub fn new(tree: &ObliqueTree) -> Self {
        let nodes = tree.n_nodes() + 1;
        let nb = tree.n_branches() + 1;
        Workspace {
            z: vec![0.0; nb],
            s: vec![0.0; nb],
            sc: vec![0.0; nb],
            reach: vec![0.0; nodes],
            value: vec![0.0; nodes],
            resid: vec![0.0; tree.n_leaves()],
        }
    }

    fn forward_routing(&mut self, tree: &ObliqueTree, x: &[f64], alpha: f64) {
        let p = x.len();
        let nb = tree.n_branches();
        let w = tree.weights.as_slice().expect("standard layout");
        self.reach[1] = 1.0;
        for j in 1..=nb {
            let a = &w[(j - 1) * p..j * p];
            let dot: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
            let z = tree.thresholds[j - 1] - dot;
            self.z[j] = z;
            self.s[j] = logistic(alpha * z);
            self.sc[j] = logistic(-alpha * z);
            let r = self.reach[j];
            self.reach[2 * j] = r * self.s[j];
            self.reach[2 * j + 1] = r * self.sc[j];
        }
    }

    /// Accumulates the soft loss and its gradient into `grads` (cleared first).
    pub fn evaluate(
        &mut self,
        tree: &ObliqueTree,
        ds: &Dataset,
        alpha: ScaleFactor,
        reg: RegularizationConfig,
        grads: &mut Gradients,
    ) -> Result<f64> {
        check_dim(tree, ds.n_features())?;
        grads.clear();
        let alpha = alpha.0;
        let p = tree.n_features();
        let nb = tree.n_branches();
        let nl = tree.n_leaves();
        let first = tree.first_leaf();
        let linear = tree.leaf_mode == LeafMode::Linear;
        let xs = ds.features.as_slice().expect("standard layout");
        let coefs = tree.coefs.as_slice().expect("standard layout");
        let mut loss = 0.0;

        for (i, &y) in ds.targets.iter().enumerate() {
            let x = &xs[i * p..(i + 1) * p];
            self.forward_routing(tree, x, alpha);

            for l in 0..nl {
                let mut pred = tree.intercepts[l];
                if linear {
                    pred += coefs[l * p..(l + 1) * p].iter().zip(x).map(|(k, x)| k * x).sum::<f64>();
                }
                let r = y - pred;
                self.resid[l] = r;
                self.value[first + l] = r * r;
                let g = -2.0 * self.reach[first + l] * r;
                grads.intercepts[l] += g;
                if linear {
                    for (gk, xv) in grads.coefs[l * p..(l + 1) * p].iter_mut().zip(x) {
                        *gk += g * xv;
                    }
                }
            }

            for j in (1..=nb).rev() {
                let (vl, vr) = (self.value[2 * j], self.value[2 * j + 1]);
                self.value[j] = self.s[j] * vl + self.sc[j] * vr;
                let ds_dz = alpha * self.s[j] * self.sc[j];
                let dz = self.reach[j] * (vl - vr) * ds_dz;
                if dz != 0.0 {
                    grads.thresholds[j - 1] += dz;
                    for (ga, xv) in grads.weights[(j - 1) * p..j * p].iter_mut().zip(x) {
                        *ga -= dz * xv;
                    }
                }
            }
            loss += self.value[1];
        }

        if reg.lambda > 0.0 {
            let w = tree.weights.as_slice().expect("standard layout");
            for (g, &a) in grads.weights.iter_mut().zip(w) {
                loss += reg.lambda * a.abs();
                if a != 0.0 {
                    *g += reg.lambda * a.signum();
                }
            }
        }

        if !loss.is_finite() {
            return Err(Error::NonFinite {
                node: self.first_non_finite(tree),
            });
        }
        Ok(loss)
    }

    fn first_non_finite(&self, tree: &ObliqueTree) -> usize {
        if let Some(j) = (1..=tree.n_branches()).find(|&j| !self.z[j].is_finite()) {
            return j;
        }
        let first = tree.first_leaf();
        (0..tree.n_leaves())
            .find(|&l| !self.resid[l].is_finite())
            .map(|l| first + l)
            .unwrap_or(1)
    }
}
