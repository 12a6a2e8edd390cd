//! Tree-growing machinery shared by the forest estimators.

mod grow;
mod regression;
mod tree;
mod weights;

pub use grow::{grow_gradient_tree, honest_partition, split_gain, GrowConfig, HonestPartition};
pub(crate) use grow::{grow_tree, NodeResponse};
pub use regression::{
    regression_forest_oob, ForestConfig, OobPredictions, RegressionForest, RegressionTree, UnitSet,
};
pub(crate) use regression::subsample;
pub use tree::{DecisionTree, Node};
pub use weights::{forest_weights, forest_weights_filtered, KernelWeights};
