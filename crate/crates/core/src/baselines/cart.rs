use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Node of an axis-aligned tree stored in a flat arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AxisNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTree {
    pub nodes: Vec<AxisNode>,
    pub n_features: usize,
    /// `None` means unbounded.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl AxisTree {
    /// Samples with `x[feature] <= threshold` go left.
    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                AxisNode::Leaf { value } => return value,
                AxisNode::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.predict_one(r)).collect())
    }

    pub fn n_branches(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, AxisNode::Split { .. })).count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_branches()
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[AxisNode], i: usize) -> usize {
            match nodes[i] {
                AxisNode::Leaf { .. } => 0,
                AxisNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Two parameters per branch (feature and threshold), one per leaf.
    pub fn count_parameters(&self) -> usize {
        2 * self.n_branches() + self.n_leaves()
    }
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted child SSE, i.e. left SSE plus right SSE.
    pub sse: f64,
}

/// Relative slack below which two candidate SSEs count as tied.
const TIE_TOLERANCE: f64 = 1e-10;

/// Exhaustive search over midpoints between consecutive distinct values of
/// each feature in `features`, visited in the given order. A later candidate
/// replaces the incumbent only if it is lower by more than the tie slack, so
/// ties resolve to the earliest feature and lowest threshold.
pub fn best_split(ds: &Dataset, rows: &[usize], features: &[usize]) -> Option<Split> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let mean = rows.iter().map(|&i| ds.targets[i]).sum::<f64>() / n as f64;
    let total_sse: f64 = rows.iter().map(|&i| (ds.targets[i] - mean).powi(2)).sum();
    let slack = TIE_TOLERANCE * total_sse.max(f64::MIN_POSITIVE);

    let mut order: Vec<usize> = rows.to_vec();
    let mut best: Option<Split> = None;
    for &f in features {
        order.sort_by(|&a, &b| ds.features[[a, f]].total_cmp(&ds.features[[b, f]]));
        let mut sum_left = 0.0;
        let mut sq_left = 0.0;
        let total_sum: f64 = order.iter().map(|&i| ds.targets[i] - mean).sum();
        let total_sq: f64 = order.iter().map(|&i| (ds.targets[i] - mean).powi(2)).sum();
        for k in 0..n - 1 {
            let r = ds.targets[order[k]] - mean;
            sum_left += r;
            sq_left += r * r;
            let lo = ds.features[[order[k], f]];
            let hi = ds.features[[order[k + 1], f]];
            if lo >= hi {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let sum_right = total_sum - sum_left;
            let sq_right = total_sq - sq_left;
            let sse = (sq_left - sum_left * sum_left / nl) + (sq_right - sum_right * sum_right / nr);
            let better = match best {
                None => true,
                Some(b) => sse < b.sse - slack,
            };
            if better {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    sse: sse.max(0.0),
                });
            }
        }
    }
    best
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    // Guard against rounding up onto `hi`, which would send it left.
    if m >= hi {
        lo
    } else {
        m
    }
}

pub(crate) struct Grower<'a, R> {
    pub ds: &'a Dataset,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features examined per split; `None` examines all in index order.
    pub max_features: Option<usize>,
    pub rng: Option<&'a mut R>,
    pub nodes: Vec<AxisNode>,
}

impl<R: Rng> Grower<'_, R> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.ds.n_features();
        let mut all: Vec<usize> = (0..p).collect();
        if let (Some(_), Some(rng)) = (self.max_features, self.rng.as_deref_mut()) {
            all.shuffle(rng);
        }
        all
    }

    fn split_for(&mut self, rows: &[usize]) -> Option<Split> {
        let order = self.candidate_features();
        let m = self.max_features.unwrap_or(order.len()).clamp(1, order.len());
        let mut first: Vec<usize> = order[..m].to_vec();
        first.sort_unstable();
        if let Some(s) = best_split(self.ds, rows, &first) {
            return Some(s);
        }
        // None of the drawn features vary here; keep drawing one at a time.
        order[m..].iter().find_map(|&f| best_split(self.ds, rows, &[f]))
    }

    pub fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.ds.targets[i]).sum::<f64>() / rows.len().max(1) as f64;
        self.nodes.push(AxisNode::Leaf { value: mean });
        let constant = rows.iter().all(|&i| self.ds.targets[i] == self.ds.targets[rows[0]]);
        if depth >= self.max_depth || rows.len() < self.min_samples_split.max(2) || constant {
            return id;
        }
        let Some(split) = self.split_for(rows) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.ds.features[[i, split.feature]] <= split.threshold);
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[id] = AxisNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Greedy variance-reduction regression tree grown to `max_depth` with no
/// pruning. Leaves predict the mean of their samples.
pub fn fit_cart(ds: &Dataset, max_depth: usize, min_samples_split: usize) -> Result<AxisTree> {
    if max_depth == 0 {
        return Err(Error::Config("CART max_depth must be at least 1".into()));
    }
    if ds.n_samples() == 0 {
        return Err(Error::NoRows);
    }
    let rows: Vec<usize> = (0..ds.n_samples()).collect();
    Ok(grow_tree::<rand_chacha::ChaCha8Rng>(ds, &rows, Some(max_depth), min_samples_split, None, None))
}

pub(crate) fn grow_tree<R: Rng>(
    ds: &Dataset,
    rows: &[usize],
    max_depth: Option<usize>,
    min_samples_split: usize,
    max_features: Option<usize>,
    rng: Option<&mut R>,
) -> AxisTree {
    let mut g = Grower {
        ds,
        max_depth: max_depth.unwrap_or(usize::MAX),
        min_samples_split,
        max_features,
        rng,
        nodes: Vec::new(),
    };
    g.grow(rows, 0);
    AxisTree {
        nodes: g.nodes,
        n_features: ds.n_features(),
        max_depth,
        min_samples_split,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn four_point_example() {
        let ds = Dataset::new(array![[0.0], [0.1], [0.9], [1.0]], array![0.0, 0.0, 1.0, 1.0]).unwrap();
        let t = fit_cart(&ds, 1, 2).unwrap();
        match t.nodes[0] {
            AxisNode::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - 0.5).abs() < 1e-15);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&ds.features).unwrap(), ds.targets);
    }

    #[test]
    fn constant_target_is_a_leaf() {
        let ds = Dataset::new(array![[0.0, 1.0], [0.5, 0.2], [0.7, 0.3]], array![0.4, 0.4, 0.4]).unwrap();
        let t = fit_cart(&ds, 5, 2).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict(&array![[9.0, -3.0]]).unwrap()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_depth_is_rejected() {
        let ds = Dataset::new(array![[0.0], [1.0]], array![0.0, 1.0]).unwrap();
        assert!(matches!(fit_cart(&ds, 0, 2), Err(Error::Config(_))));
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // Both features separate y identically.
        let ds = Dataset::new(array![[0.0, 0.0], [1.0, 1.0]], array![0.0, 1.0]).unwrap();
        let s = best_split(&ds, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn sse_nonincreasing_in_depth() {
        let x = Array2::from_shape_fn((60, 2), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let y = Array1::from_shape_fn(60, |i| ((i * 5) % 11) as f64);
        let ds = Dataset::new(x, y).unwrap();
        let mut prev = f64::INFINITY;
        for d in 1..8 {
            let t = fit_cart(&ds, d, 2).unwrap();
            assert!(t.depth() <= d);
            let p = t.predict(&ds.features).unwrap();
            let sse: f64 = (&p - &ds.targets).mapv(|v| v * v).sum();
            assert!(sse <= prev + 1e-12);
            prev = sse;
        }
    }
}
