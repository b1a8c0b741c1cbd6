//! Hard-split oblique regression trees trained by gradient-based
//! entire-tree optimization, with greedy CART and random-forest baselines
//! and an evaluation harness.
//!
//! The usual flow is [`dataset::load_csv`] -> [`dataset::normalize_for_split`]
//! -> [`train::fit`] -> [`polish::polish`] -> [`tree::ObliqueTree::predict`].

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod leaf_fit;
pub mod model;
pub mod polish;
pub mod softgrad;
pub mod synthetic;
pub mod train;
pub mod tree;

pub use dataset::{Dataset, NormalizationTransform, RawData, SplitMode, SplitSpec};
pub use error::{Error, Result};
pub use polish::{PolishConfig, PolishReport};
pub use softgrad::{RegularizationConfig, ScaleFactor};
pub use train::{TrainConfig, TrainReport};
pub use tree::{LeafMode, ObliqueTree, ParameterCount, RoutingMatrix};
pub use model::{FittedModel, Model};
