//! Complete oblique regression trees with breadth-first node numbering.
//!
//! Nodes are numbered `1..=T` with `T = 2^(D+1) - 1`; node `t` has children
//! `2t` and `2t + 1`. Branch nodes are `1..=2^D - 1`, leaves the remaining
//! `2^D`. Branch `t` sends sample `x` left when `b_t - a_t . x > 0` and right
//! otherwise, so a sample exactly on the hyperplane goes right.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafMode {
    /// `y = h_t`
    Constant,
    /// `y = k_t . x + h_t`
    Linear,
}

impl std::str::FromStr for LeafMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LeafMode::Constant),
            "linear" => Ok(LeafMode::Linear),
            _ => Err(Error::Config(format!("unknown leaf mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for LeafMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LeafMode::Constant => "constant",
            LeafMode::Linear => "linear",
        })
    }
}

pub fn n_branches(depth: usize) -> usize {
    (1 << depth) - 1
}

pub fn n_leaves(depth: usize) -> usize {
    1 << depth
}

/// Depth of node `t` (root at 0).
pub fn node_depth(t: usize) -> usize {
    debug_assert!(t >= 1);
    (usize::BITS - 1 - t.leading_zeros()) as usize
}

/// A complete, hard-split oblique regression tree.
///
/// Row `t - 1` of `weights`/`thresholds` belongs to branch node `t`; row
/// `t - 2^D` of `coefs`/`intercepts` belongs to leaf node `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueTree {
    pub depth: usize,
    pub leaf_mode: LeafMode,
    /// `(2^D - 1) x p` split weights.
    pub weights: Array2<f64>,
    /// `2^D - 1` split thresholds.
    pub thresholds: Array1<f64>,
    /// `2^D x p` leaf coefficients; all zero in constant mode.
    pub coefs: Array2<f64>,
    /// `2^D` leaf intercepts.
    pub intercepts: Array1<f64>,
}

impl ObliqueTree {
    pub fn zeros(depth: usize, n_features: usize, leaf_mode: LeafMode) -> Self {
        ObliqueTree {
            depth,
            leaf_mode,
            weights: Array2::zeros((n_branches(depth), n_features)),
            thresholds: Array1::zeros(n_branches(depth)),
            coefs: Array2::zeros((n_leaves(depth), n_features)),
            intercepts: Array1::zeros(n_leaves(depth)),
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_branches(&self) -> usize {
        n_branches(self.depth)
    }

    pub fn n_leaves(&self) -> usize {
        n_leaves(self.depth)
    }

    pub fn n_nodes(&self) -> usize {
        (1 << (self.depth + 1)) - 1
    }

    /// Node index of the first leaf.
    pub fn first_leaf(&self) -> usize {
        self.n_branches() + 1
    }

    /// Checks shapes, finiteness and the constant-mode `K = 0` invariant.
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Validation("depth must be at least 1".into()));
        }
        if self.depth > 24 {
            return Err(Error::Validation(format!("depth {} is too large", self.depth)));
        }
        let p = self.n_features();
        if p == 0 {
            return Err(Error::Validation("tree needs at least one feature".into()));
        }
        let nb = self.n_branches();
        let nl = self.n_leaves();
        if self.weights.dim() != (nb, p)
            || self.thresholds.len() != nb
            || self.coefs.dim() != (nl, p)
            || self.intercepts.len() != nl
        {
            return Err(Error::Validation(format!(
                "parameter shapes do not match a depth-{} tree over {p} features",
                self.depth
            )));
        }
        let all_finite = self.weights.iter().all(|v| v.is_finite())
            && self.thresholds.iter().all(|v| v.is_finite())
            && self.coefs.iter().all(|v| v.is_finite())
            && self.intercepts.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Validation("non-finite tree parameter".into()));
        }
        if self.leaf_mode == LeafMode::Constant && self.coefs.iter().any(|&k| k != 0.0) {
            return Err(Error::Validation(
                "constant-mode tree has nonzero leaf coefficients".into(),
            ));
        }
        Ok(())
    }

    fn check_dim(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Branching test `I = 1(b_t - a_t . x > 0)` at branch node `t`.
    #[inline]
    pub fn goes_left(&self, t: usize, x: ArrayView1<'_, f64>) -> bool {
        let a = self.weights.row(t - 1);
        self.thresholds[t - 1] - a.dot(&x) > 0.0
    }

    /// Leaf node index reached by `x`, by root-to-leaf descent.
    #[inline]
    pub fn leaf_node(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut t = 1;
        let nb = self.n_branches();
        while t <= nb {
            t = if self.goes_left(t, x) { 2 * t } else { 2 * t + 1 };
        }
        t
    }

    /// Zero-based leaf position (`leaf_node - 2^D`) for every row of `x`.
    pub fn leaf_positions(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        let off = self.first_leaf();
        Ok(x.rows().into_iter().map(|r| self.leaf_node(r) - off).collect())
    }

    /// Prediction of leaf position `leaf` for sample `x`.
    #[inline]
    pub fn leaf_value(&self, leaf: usize, x: ArrayView1<'_, f64>) -> f64 {
        match self.leaf_mode {
            LeafMode::Constant => self.intercepts[leaf],
            LeafMode::Linear => self.coefs.row(leaf).dot(&x) + self.intercepts[leaf],
        }
    }

    /// Hard routing in product form: `P_it = prod_{left anc} I * prod_{right anc} (1 - I)`.
    pub fn hard_route(&self, x: &Array2<f64>) -> Result<RoutingMatrix> {
        self.check_dim(x)?;
        let anc = ancestor_sets(self.depth);
        let nb = self.n_branches();
        let mut weights = Array2::zeros((x.nrows(), self.n_leaves()));
        let mut ind = vec![0.0; nb + 1];
        for (i, row) in x.rows().into_iter().enumerate() {
            for (j, slot) in ind.iter_mut().enumerate().skip(1) {
                *slot = if self.goes_left(j, row) { 1.0 } else { 0.0 };
            }
            for leaf in 0..self.n_leaves() {
                let p: f64 = anc.left[leaf].iter().map(|&j| ind[j]).product::<f64>()
                    * anc.right[leaf].iter().map(|&j| 1.0 - ind[j]).product::<f64>();
                weights[[i, leaf]] = p;
            }
        }
        Ok(RoutingMatrix {
            weights,
            mode: RoutingMode::Hard,
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        let off = self.first_leaf();
        Ok(x.rows()
            .into_iter()
            .map(|r| self.leaf_value(self.leaf_node(r) - off, r))
            .collect())
    }

    /// Sum of squared residuals under hard routing.
    pub fn hard_loss(&self, ds: &Dataset) -> f64 {
        let pred = self.predict(&ds.features).expect("dataset width matches tree");
        pred.iter()
            .zip(ds.targets.iter())
            .map(|(p, y)| (y - p) * (y - p))
            .sum()
    }

    pub fn count_parameters(&self) -> ParameterCount {
        count_parameters(self.depth, self.n_features(), self.leaf_mode)
    }

    /// Copies the depth-`sub_depth` subtree rooted at node `root`.
    pub fn subtree(&self, root: usize) -> ObliqueTree {
        let sub_depth = self.depth - node_depth(root);
        let mut out = ObliqueTree::zeros(sub_depth, self.n_features(), self.leaf_mode);
        for_each_subtree_node(root, self.depth, |local, global| {
            if global <= self.n_branches() {
                out.weights.row_mut(local - 1).assign(&self.weights.row(global - 1));
                out.thresholds[local - 1] = self.thresholds[global - 1];
            } else {
                let (l, g) = (local - out.first_leaf(), global - self.first_leaf());
                out.coefs.row_mut(l).assign(&self.coefs.row(g));
                out.intercepts[l] = self.intercepts[g];
            }
        });
        out
    }

    /// Overwrites the subtree rooted at node `root` with `sub`.
    pub fn splice(&mut self, root: usize, sub: &ObliqueTree) {
        assert_eq!(sub.depth, self.depth - node_depth(root), "subtree depth mismatch");
        let (nb, first) = (self.n_branches(), self.first_leaf());
        for_each_subtree_node(root, self.depth, |local, global| {
            if global <= nb {
                self.weights.row_mut(global - 1).assign(&sub.weights.row(local - 1));
                self.thresholds[global - 1] = sub.thresholds[local - 1];
            } else {
                let (l, g) = (local - sub.first_leaf(), global - first);
                self.coefs.row_mut(g).assign(&sub.coefs.row(l));
                self.intercepts[g] = sub.intercepts[l];
            }
        });
    }
}

/// Visits every node of the subtree rooted at `root` as `(local, global)`
/// index pairs, where `local` numbers the subtree breadth-first from 1.
fn for_each_subtree_node(root: usize, depth: usize, mut f: impl FnMut(usize, usize)) {
    let levels = depth - node_depth(root);
    for level in 0..=levels {
        let width = 1usize << level;
        for k in 0..width {
            f(width + k, (root << level) + k);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    Hard,
    Soft,
}

/// Per-sample, per-leaf assignment weights (`n x 2^D`).
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    pub weights: Array2<f64>,
    pub mode: RoutingMode,
}

impl RoutingMatrix {
    pub fn row_sums(&self) -> Array1<f64> {
        self.weights.sum_axis(ndarray::Axis(1))
    }
}

/// Left and right ancestor lists per leaf, ordered root-down. Indexed by
/// zero-based leaf position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestorSets {
    pub left: Vec<Vec<usize>>,
    pub right: Vec<Vec<usize>>,
}

impl AncestorSets {
    /// `(left, right)` ancestors of leaf node `t`.
    pub fn of_node(&self, t: usize) -> (&[usize], &[usize]) {
        let pos = t - self.left.len();
        (&self.left[pos], &self.right[pos])
    }
}

pub fn ancestor_sets(depth: usize) -> AncestorSets {
    let nl = n_leaves(depth);
    let mut left = Vec::with_capacity(nl);
    let mut right = Vec::with_capacity(nl);
    for t in nl..2 * nl {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for level in (1..=depth).rev() {
            let parent = t >> level;
            let child = t >> (level - 1);
            if child == 2 * parent {
                l.push(parent);
            } else {
                r.push(parent);
            }
        }
        left.push(l);
        right.push(r);
    }
    AncestorSets { left, right }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub branch_params: usize,
    pub leaf_params: usize,
    pub total: usize,
}

/// `(2^D - 1)(p + 1)` branch parameters; `2^D` or `2^D (p + 1)` leaf parameters.
pub fn count_parameters(depth: usize, p: usize, mode: LeafMode) -> ParameterCount {
    let branch_params = n_branches(depth) * (p + 1);
    let leaf_params = match mode {
        LeafMode::Constant => n_leaves(depth),
        LeafMode::Linear => n_leaves(depth) * (p + 1),
    };
    ParameterCount {
        branch_params,
        leaf_params,
        total: branch_params + leaf_params,
    }
}

#[cfg(test)]
pub(crate) use tests::random_tree;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_tree(depth: usize, p: usize, mode: LeafMode, seed: u64) -> ObliqueTree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = ObliqueTree::zeros(depth, p, mode);
        t.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        t.thresholds.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        t.intercepts.mapv_inplace(|_| rng.random_range(0.0..1.0));
        if mode == LeafMode::Linear {
            t.coefs.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        t
    }

    fn random_x(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.random())
    }

    /// Recursive descent written independently of `leaf_node`.
    fn descend(tree: &ObliqueTree, x: &[f64], t: usize) -> usize {
        if t > tree.n_branches() {
            return t;
        }
        let s: f64 = (0..x.len()).map(|j| tree.weights[[t - 1, j]] * x[j]).sum();
        if tree.thresholds[t - 1] - s > 0.0 {
            descend(tree, x, 2 * t)
        } else {
            descend(tree, x, 2 * t + 1)
        }
    }

    #[test]
    fn ancestor_set_examples() {
        let a = ancestor_sets(2);
        assert_eq!(a.of_node(5), (&[1][..], &[2][..]));
        let a = ancestor_sets(1);
        assert_eq!(a.of_node(2), (&[1][..], &[][..]));
        assert_eq!(a.of_node(3), (&[][..], &[1][..]));
        let a = ancestor_sets(3);
        assert_eq!(a.of_node(15), (&[][..], &[1, 3, 7][..]));
        assert_eq!(a.of_node(8), (&[1, 2, 4][..], &[][..]));
    }

    #[test]
    fn ancestor_sets_match_path_walk() {
        for d in 1..=6 {
            let a = ancestor_sets(d);
            for t in n_leaves(d)..2 * n_leaves(d) {
                let (l, r) = a.of_node(t);
                assert_eq!(l.len() + r.len(), d);
                // walk up from t
                let mut path = Vec::new();
                let mut c = t;
                while c > 1 {
                    path.push((c / 2, c % 2 == 0));
                    c /= 2;
                }
                path.reverse();
                let wl: Vec<usize> = path.iter().filter(|p| p.1).map(|p| p.0).collect();
                let wr: Vec<usize> = path.iter().filter(|p| !p.1).map(|p| p.0).collect();
                assert_eq!((l, r), (&wl[..], &wr[..]));
            }
        }
    }

    #[test]
    fn figure_one_routing() {
        // Root sends left (b - a.x > 0), node 2 sends right.
        let mut t = ObliqueTree::zeros(2, 1, LeafMode::Constant);
        t.weights = array![[1.0], [1.0], [1.0]];
        t.thresholds = array![0.8, 0.2, 0.5];
        let x = array![[0.5]];
        let r = t.hard_route(&x).unwrap();
        assert_eq!(r.weights.row(0).to_vec(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.leaf_node(x.row(0)), 5);
    }

    #[test]
    fn tie_routes_right() {
        let mut t = ObliqueTree::zeros(1, 2, LeafMode::Constant);
        t.weights = array![[1.0, 1.0]];
        t.thresholds = array![1.0];
        assert_eq!(t.leaf_node(array![0.5, 0.5].view()), 3);
        assert_eq!(t.leaf_node(array![0.5, 0.4].view()), 2);
    }

    #[test]
    fn hard_route_matches_descent() {
        let tree = random_tree(3, 4, LeafMode::Constant, 11);
        let x = random_x(20, 4, 12);
        let r = tree.hard_route(&x).unwrap();
        for i in 0..20 {
            let leaf = descend(&tree, x.row(i).as_slice().unwrap(), 1) - tree.first_leaf();
            for l in 0..tree.n_leaves() {
                assert_eq!(r.weights[[i, l]], if l == leaf { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn predict_examples() {
        let mut t = ObliqueTree::zeros(1, 2, LeafMode::Linear);
        t.weights = array![[1.0, 0.0]];
        t.thresholds = array![10.0];
        t.coefs = array![[1.0, 0.0], [0.0, 0.0]];
        t.intercepts = array![0.5, 0.0];
        let y = t.predict(&array![[0.2, 0.9]]).unwrap();
        assert!((y[0] - 0.7).abs() < 1e-15);

        let mut c = ObliqueTree::zeros(1, 2, LeafMode::Constant);
        c.thresholds = array![-1.0];
        c.intercepts = array![0.1, 0.3];
        assert_eq!(c.predict(&array![[0.2, 0.9]]).unwrap()[0], 0.3);
    }

    #[test]
    fn predict_matches_descent_and_affine_oracle() {
        let tree = random_tree(4, 3, LeafMode::Linear, 5);
        let x = random_x(50, 3, 6);
        let y = tree.predict(&x).unwrap();
        for i in 0..50 {
            let xi = x.row(i);
            let leaf = descend(&tree, xi.as_slice().unwrap(), 1) - tree.first_leaf();
            let mut v = tree.intercepts[leaf];
            for j in 0..3 {
                v += tree.coefs[[leaf, j]] * xi[j];
            }
            assert!((y[i] - v).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let tree = random_tree(2, 3, LeafMode::Constant, 1);
        assert!(matches!(
            tree.predict(&random_x(2, 4, 0)),
            Err(Error::DimensionMismatch { expected: 3, found: 4 })
        ));
        assert!(tree.hard_route(&random_x(2, 2, 0)).is_err());
    }

    #[test]
    fn hard_loss_examples() {
        let x = random_x(30, 2, 3);
        let y: Array1<f64> = x.column(0).to_owned();
        let ds = Dataset::new(x.clone(), y.clone()).unwrap();

        // every sample routes left at every node to leaf 4
        let mut t = ObliqueTree::zeros(2, 2, LeafMode::Constant);
        t.thresholds.fill(1e9);
        let mean = y.mean().unwrap();
        t.intercepts.fill(mean);
        let var = y.mapv(|v| (v - mean).powi(2)).sum();
        assert!((t.hard_loss(&ds) - var).abs() < 1e-12);

        let mut lin = ObliqueTree::zeros(1, 2, LeafMode::Linear);
        lin.coefs.row_mut(0).assign(&array![1.0, 0.0]);
        lin.coefs.row_mut(1).assign(&array![1.0, 0.0]);
        assert_eq!(lin.hard_loss(&ds), 0.0);

        let r = random_tree(3, 2, LeafMode::Linear, 8);
        let pred = r.predict(&x).unwrap();
        let direct: f64 = (0..30).map(|i| (y[i] - pred[i]).powi(2)).sum();
        assert!((r.hard_loss(&ds) - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn parameter_count_examples() {
        assert_eq!(
            count_parameters(2, 5, LeafMode::Constant),
            ParameterCount { branch_params: 18, leaf_params: 4, total: 22 }
        );
        assert_eq!(count_parameters(1, 1, LeafMode::Linear).total, 6);
        assert_eq!(count_parameters(3, 8, LeafMode::Linear).total, 135);
    }

    #[test]
    fn subtree_round_trip() {
        let tree = random_tree(4, 2, LeafMode::Linear, 21);
        for root in 1..tree.n_branches() {
            let sub = tree.subtree(root);
            assert_eq!(sub.depth, 4 - node_depth(root));
            let mut copy = tree.clone();
            copy.splice(root, &sub);
            assert_eq!(copy, tree);
        }
        let sub = tree.subtree(3);
        assert_eq!(sub.weights.row(0), tree.weights.row(2));
        assert_eq!(sub.weights.row(1), tree.weights.row(5));
        assert_eq!(sub.weights.row(2), tree.weights.row(6));
        assert_eq!(sub.intercepts[0], tree.intercepts[8]);
    }

    #[test]
    fn validate_rejects_constant_mode_coefs() {
        let mut t = ObliqueTree::zeros(1, 1, LeafMode::Constant);
        assert!(t.validate().is_ok());
        t.coefs[[0, 0]] = 0.5;
        assert!(matches!(t.validate(), Err(Error::Validation(_))));
    }
}
