//! Shared fixtures for the criterion benches.

use obtree::synthetic::{oblique_tree_data, SyntheticSpec};
use obtree::train::{init_tree, start_rng};
use obtree::{dataset, Dataset, LeafMode, ObliqueTree};

/// Normalized synthetic data drawn from a random depth-`depth` oblique tree.
pub fn synthetic(n_samples: usize, n_features: usize, depth: usize) -> Dataset {
    let (raw, _) = oblique_tree_data(&SyntheticSpec {
        n_samples,
        n_features,
        depth,
        seed: 42,
        ..SyntheticSpec::default()
    });
    dataset::normalize(&raw)
}

/// A freshly initialized tree for `ds`, as training would start from.
pub fn initial_tree(ds: &Dataset, depth: usize, leaf_mode: LeafMode) -> ObliqueTree {
    init_tree(depth, ds, leaf_mode, &mut start_rng(0, 0))
}
