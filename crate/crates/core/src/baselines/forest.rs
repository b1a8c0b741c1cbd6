use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{grow_tree, AxisTree};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows each tree until its leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    /// Features drawn per split; `None` uses `max(1, p / 3)`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<AxisTree>,
    /// Stream index of each tree within the forest seed's generator.
    pub tree_seeds: Vec<u64>,
    pub max_features: usize,
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        let mut sum = Array1::<f64>::zeros(x.nrows());
        for t in &self.trees {
            for (s, r) in sum.iter_mut().zip(x.rows()) {
                *s += t.predict_one(r);
            }
        }
        Ok(sum / self.trees.len() as f64)
    }

    pub fn count_parameters(&self) -> usize {
        self.trees.iter().map(AxisTree::count_parameters).sum()
    }
}

fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Bagged ensemble of CART trees with per-split feature subsampling.
/// Tree `i` draws from its own stream of `seed`, so results do not depend on
/// the thread count.
pub fn fit_forest(ds: &Dataset, config: &ForestConfig) -> Result<Forest> {
    if config.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    if config.max_depth == Some(0) {
        return Err(Error::Config("forest max_depth must be at least 1".into()));
    }
    let n = ds.n_samples();
    if n == 0 {
        return Err(Error::NoRows);
    }
    let p = ds.n_features();
    let m = config.max_features.unwrap_or((p / 3).max(1)).clamp(1, p.max(1));
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(config.seed, i);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let subsample = (m < p).then_some(m);
            grow_tree(ds, &rows, config.max_depth, config.min_samples_split, subsample, Some(&mut rng))
        })
        .collect();
    Ok(Forest {
        trees,
        tree_seeds: (0..config.n_trees as u64).collect(),
        max_features: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::cart::{fit_cart, AxisNode};

    fn data() -> Dataset {
        let x = Array2::from_shape_fn((80, 3), |(i, j)| ((i * (j + 3) * 7) % 23) as f64 / 23.0);
        let y = x.rows().into_iter().map(|r| (r[0] - r[1]).sin() + r[2] * r[2]).collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn degenerate_forest_equals_cart() {
        let ds = data();
        let f = fit_forest(
            &ds,
            &ForestConfig {
                n_trees: 1,
                max_depth: Some(4),
                max_features: Some(3),
                bootstrap: false,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let c = fit_cart(&ds, 4, 2).unwrap();
        assert_eq!(f.predict(&ds.features).unwrap(), c.predict(&ds.features).unwrap());
    }

    #[test]
    fn prediction_is_member_mean() {
        let leaf = |v| AxisTree {
            nodes: vec![AxisNode::Leaf { value: v }],
            n_features: 1,
            max_depth: Some(1),
            min_samples_split: 2,
        };
        let f = Forest {
            trees: vec![leaf(0.2), leaf(0.6)],
            tree_seeds: vec![0, 1],
            max_features: 1,
        };
        let p = f.predict(&ndarray::array![[0.0]]).unwrap();
        assert!((p[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_forest() {
        let ds = data();
        let cfg = ForestConfig {
            n_trees: 8,
            seed: 11,
            ..ForestConfig::default()
        };
        let a = fit_forest(&ds, &cfg).unwrap();
        assert_eq!(a, fit_forest(&ds, &cfg).unwrap());
        assert_ne!(a, fit_forest(&ds, &ForestConfig { seed: 12, ..cfg }).unwrap());
    }
}
