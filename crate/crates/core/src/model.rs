//! Fitted models bundled with their normalization, and the versioned JSON
//! document they are stored as.
//!
//! Every document carries `format_version` and a `model_kind` discriminator.
//! Oblique trees are stored node by node in breadth-first order:
//!
//! ```json
//! { "format_version": 1, "model_kind": "oblique_tree",
//!   "depth": 1, "p": 2, "leaf_mode": "constant",
//!   "splits": [ { "a": [1.0, 0.0], "b": 0.5 } ],
//!   "leaves": [ { "k": [0.0, 0.0], "h": 0.1 }, { "k": [0.0, 0.0], "h": 0.9 } ],
//!   "norm": { "features": [ ... ], "target": { "min": 0.0, "max": 1.0 } } }
//! ```
//!
//! `cart` documents hold a `tree` and `random_forest` documents a `forest`,
//! each next to the same `norm` block.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::baselines::{AxisTree, Forest};
use crate::dataset::NormalizationTransform;
use crate::error::{Error, Result};
use crate::tree::{LeafMode, ObliqueTree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Oblique(ObliqueTree),
    Cart(AxisTree),
    Forest(Forest),
}

impl Model {
    /// Predicts on features already in normalized space.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        match self {
            Model::Oblique(t) => t.predict(x),
            Model::Cart(t) => t.predict(x),
            Model::Forest(f) => f.predict(x),
        }
    }

    pub fn count_parameters(&self) -> usize {
        match self {
            Model::Oblique(t) => t.count_parameters().total,
            Model::Cart(t) => t.count_parameters(),
            Model::Forest(f) => f.count_parameters(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Oblique(t) => t.n_features(),
            Model::Cart(t) => t.n_features,
            Model::Forest(f) => f.n_features(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Oblique(_) => "oblique_tree",
            Model::Cart(_) => "cart",
            Model::Forest(_) => "random_forest",
        }
    }
}

/// A model plus the transform that maps raw data into its input space.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: Model,
    pub norm: NormalizationTransform,
}

impl FittedModel {
    /// Predicts in the original target units from raw features.
    pub fn predict_raw(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.nrows() == 0 {
            return Ok(Array1::zeros(0));
        }
        let xn = self.norm.transform_features(x)?;
        let yn = self.model.predict(&xn)?;
        Ok(self.norm.inverse_targets(&yn))
    }

    pub fn to_json(&self) -> Result<String> {
        let body = match &self.model {
            Model::Oblique(t) => Body::ObliqueTree(ObliqueDoc::from_tree(t)),
            Model::Cart(t) => Body::Cart { tree: t.clone() },
            Model::Forest(f) => Body::RandomForest { forest: f.clone() },
        };
        let doc = Document {
            format_version: FORMAT_VERSION,
            body,
            norm: self.norm.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| Error::Schema("missing field `format_version`".into()))?
            .as_u64()
            .ok_or_else(|| Error::Schema("`format_version` must be an unsigned integer".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        let doc: Document = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        let model = match doc.body {
            Body::ObliqueTree(o) => Model::Oblique(o.into_tree()?),
            Body::Cart { tree } => {
                validate_axis(&tree)?;
                Model::Cart(tree)
            }
            Body::RandomForest { forest } => {
                if forest.trees.is_empty() {
                    return Err(Error::Validation("forest has no trees".into()));
                }
                forest.trees.iter().try_for_each(validate_axis)?;
                Model::Forest(forest)
            }
        };
        if doc.norm.features.len() != model.n_features() {
            return Err(Error::Validation(format!(
                "normalization covers {} features but the model expects {}",
                doc.norm.features.len(),
                model.n_features()
            )));
        }
        Ok(FittedModel { model, norm: doc.norm })
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn validate_axis(t: &AxisTree) -> Result<()> {
    use crate::baselines::AxisNode;
    if t.nodes.is_empty() {
        return Err(Error::Validation("tree has no nodes".into()));
    }
    for (i, n) in t.nodes.iter().enumerate() {
        match *n {
            AxisNode::Leaf { value } if !value.is_finite() => {
                return Err(Error::Validation(format!("leaf {i} is not finite")));
            }
            // Children must come later, which also rules out cycles.
            AxisNode::Split { feature, threshold, left, right }
                if feature >= t.n_features
                    || !threshold.is_finite()
                    || left <= i
                    || right <= i
                    || left >= t.nodes.len()
                    || right >= t.nodes.len() =>
            {
                return Err(Error::Validation(format!("malformed split at node {i}")));
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u32,
    #[serde(flatten)]
    body: Body,
    norm: NormalizationTransform,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "snake_case")]
enum Body {
    ObliqueTree(ObliqueDoc),
    Cart { tree: AxisTree },
    RandomForest { forest: Forest },
}

#[derive(Serialize, Deserialize)]
struct ObliqueDoc {
    depth: usize,
    p: usize,
    leaf_mode: LeafMode,
    splits: Vec<SplitDoc>,
    leaves: Vec<LeafDoc>,
}

#[derive(Serialize, Deserialize)]
struct SplitDoc {
    a: Vec<f64>,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct LeafDoc {
    k: Vec<f64>,
    h: f64,
}

impl ObliqueDoc {
    fn from_tree(t: &ObliqueTree) -> Self {
        ObliqueDoc {
            depth: t.depth,
            p: t.n_features(),
            leaf_mode: t.leaf_mode,
            splits: t
                .weights
                .rows()
                .into_iter()
                .zip(&t.thresholds)
                .map(|(a, &b)| SplitDoc { a: a.to_vec(), b })
                .collect(),
            leaves: t
                .coefs
                .rows()
                .into_iter()
                .zip(&t.intercepts)
                .map(|(k, &h)| LeafDoc { k: k.to_vec(), h })
                .collect(),
        }
    }

    fn into_tree(self) -> Result<ObliqueTree> {
        if self.depth == 0 || self.depth > 24 {
            return Err(Error::Validation(format!("depth {} out of range", self.depth)));
        }
        let mut t = ObliqueTree::zeros(self.depth, self.p, self.leaf_mode);
        if self.splits.len() != t.n_branches() || self.leaves.len() != t.n_leaves() {
            return Err(Error::Validation(format!(
                "depth {} needs {} splits and {} leaves, found {} and {}",
                self.depth,
                t.n_branches(),
                t.n_leaves(),
                self.splits.len(),
                self.leaves.len()
            )));
        }
        for (i, s) in self.splits.into_iter().enumerate() {
            if s.a.len() != self.p {
                return Err(Error::Validation(format!("split {} has {} weights, expected {}", i + 1, s.a.len(), self.p)));
            }
            t.weights.row_mut(i).assign(&Array1::from(s.a));
            t.thresholds[i] = s.b;
        }
        for (i, l) in self.leaves.into_iter().enumerate() {
            if l.k.len() != self.p {
                return Err(Error::Validation(format!("leaf {i} has {} coefficients, expected {}", l.k.len(), self.p)));
            }
            t.coefs.row_mut(i).assign(&Array1::from(l.k));
            t.intercepts[i] = l.h;
        }
        t.validate()?;
        Ok(t)
    }
}
