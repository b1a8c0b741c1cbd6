//! Axis-aligned comparators: greedy CART regression trees and a bagged
//! random forest built from them.

pub mod cart;
pub mod forest;

use ndarray::{Array1, Array2};

use crate::error::Result;
pub use cart::{best_split, fit_cart, AxisNode, AxisTree, Split};
pub use forest::{fit_forest, Forest, ForestConfig};

/// Either baseline model.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    Cart(AxisTree),
    Forest(Forest),
}

impl Baseline {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        match self {
            Baseline::Cart(t) => t.predict(x),
            Baseline::Forest(f) => f.predict(x),
        }
    }

    pub fn count_parameters(&self) -> usize {
        match self {
            Baseline::Cart(t) => t.count_parameters(),
            Baseline::Forest(f) => f.count_parameters(),
        }
    }
}

/// Batch prediction for either baseline.
pub fn predict_baseline(model: &Baseline, x: &Array2<f64>) -> Result<Array1<f64>> {
    model.predict(x)
}
