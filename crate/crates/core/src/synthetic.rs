//! Data generated by a random oblique tree, for tests and benchmarks.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::RawData;
use crate::tree::{LeafMode, ObliqueTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub depth: usize,
    /// Standard deviation of additive Gaussian target noise.
    pub noise: f64,
    /// Samples closer than this to a hyperplane on their path are redrawn.
    pub margin: f64,
    pub leaf_mode: LeafMode,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_samples: 2000,
            n_features: 5,
            depth: 2,
            noise: 0.02,
            margin: 0.0,
            leaf_mode: LeafMode::Constant,
            seed: 0,
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Smallest `|b_j - a_j . x|` over the branch nodes on `x`'s path.
fn path_margin(tree: &ObliqueTree, x: &[f64]) -> f64 {
    let xv = ndarray::ArrayView1::from(x);
    let mut t = 1;
    let mut m = f64::INFINITY;
    while t <= tree.n_branches() {
        let z = tree.thresholds[t - 1] - tree.weights.row(t - 1).dot(&xv);
        m = m.min(z.abs());
        t = if z > 0.0 { 2 * t } else { 2 * t + 1 };
    }
    m
}

/// Returns uniform features in `[0, 1]^p`, targets from a random oblique
/// tree plus noise, and the generating tree.
///
/// Each split of the generating tree has a Gaussian-direction unit normal
/// and passes through the median projection of the pilot samples reaching
/// it, so splits are balanced. Constant leaves take values uniform in
/// `[0, 1]`.
pub fn oblique_tree_data(spec: &SyntheticSpec) -> (RawData, ObliqueTree) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.n_features;
    let n = spec.n_samples;
    let mut tree = ObliqueTree::zeros(spec.depth, p, spec.leaf_mode);

    let pilot: Vec<Vec<f64>> = (0..n.max(64))
        .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.n_nodes() + 1];
    members[1] = (0..pilot.len()).collect();
    for t in 1..=tree.n_branches() {
        let a = unit_vector(&mut rng, p);
        let proj: Vec<f64> = members[t]
            .iter()
            .map(|&i| a.iter().zip(&pilot[i]).map(|(a, x)| a * x).sum())
            .collect();
        let b = if proj.is_empty() { 0.5 } else { median(proj.clone()) };
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for (k, &i) in members[t].iter().enumerate() {
            if b - proj[k] > 0.0 {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        members[2 * t] = left;
        members[2 * t + 1] = right;
        tree.weights.row_mut(t - 1).assign(&Array1::from(a));
        tree.thresholds[t - 1] = b;
    }
    for l in 0..tree.n_leaves() {
        tree.intercepts[l] = rng.random::<f64>();
        if spec.leaf_mode == LeafMode::Linear {
            for j in 0..p {
                tree.coefs[[l, j]] = rng.random_range(-1.0..1.0);
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite noise");
    let mut features = Array2::zeros((n, p));
    let mut i = 0;
    while i < n {
        let x: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        if spec.margin > 0.0 && path_margin(&tree, &x) < spec.margin {
            continue;
        }
        features.row_mut(i).assign(&Array1::from(x));
        i += 1;
    }
    let clean = tree.predict(&features).expect("matching width");
    let targets = clean.mapv(|v| v + noise.sample(&mut rng));
    (
        RawData {
            features,
            targets,
            feature_names: None,
        },
        tree,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn respects_margin_and_is_deterministic() {
        let spec = SyntheticSpec {
            n_samples: 300,
            margin: 0.05,
            noise: 0.0,
            ..SyntheticSpec::default()
        };
        let (raw, tree) = oblique_tree_data(&spec);
        let (raw2, _) = oblique_tree_data(&spec);
        assert_eq!(raw.features, raw2.features);
        for r in raw.features.rows() {
            assert!(path_margin(&tree, r.as_slice().unwrap()) >= 0.05);
        }
        assert_eq!(raw.targets, tree.predict(&raw.features).unwrap());
    }

    #[test]
    fn leaves_are_populated() {
        let (raw, tree) = oblique_tree_data(&SyntheticSpec { depth: 3, ..SyntheticSpec::default() });
        let leaves = tree.leaf_positions(&raw.features).unwrap();
        for l in 0..tree.n_leaves() {
            assert!(leaves.iter().filter(|&&x| x == l).count() > 100);
        }
    }
}
