use serde::{Deserialize, Serialize};

use super::tree::DecisionTree;
use crate::error::{Error, Result};

/// Forest similarity weights of every unit relative to a target point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    /// Trees whose leaf at `x` was nonempty.
    pub contributing_trees: usize,
}

/// Average over trees of `1{i in leaf(x)} / |leaf(x)|`.
///
/// Trees whose leaf at `x` holds no units are skipped and the average is
/// taken over the remaining trees.
pub fn forest_weights(trees: &[DecisionTree], x: &[f64], n: usize) -> Result<KernelWeights> {
    forest_weights_filtered(trees, x, n, |_| true)
}

/// As [`forest_weights`], restricted to trees for which `use_tree(t)` holds.
pub fn forest_weights_filtered(
    trees: &[DecisionTree],
    x: &[f64],
    n: usize,
    use_tree: impl Fn(usize) -> bool,
) -> Result<KernelWeights> {
    if trees.is_empty() {
        return Err(Error::InvalidArgument("forest has no trees".into()));
    }
    let mut weights = vec![0.0; n];
    let mut contributing = 0usize;
    for (t, tree) in trees.iter().enumerate() {
        if tree.num_features() != x.len() {
            return Err(Error::InvalidArgument(format!(
                "point has {} covariates, forest expects {}",
                x.len(),
                tree.num_features()
            )));
        }
        if !use_tree(t) {
            continue;
        }
        let members = tree.members(tree.leaf_index(x));
        if members.is_empty() {
            continue;
        }
        let w = 1.0 / members.len() as f64;
        for &i in members {
            if i >= n {
                return Err(Error::InvalidArgument(format!("leaf member {i} out of range")));
            }
            weights[i] += w;
        }
        contributing += 1;
    }
    if contributing == 0 {
        return Err(Error::InvalidArgument(
            "no tree has a populated leaf at this point".into(),
        ));
    }
    let scale = 1.0 / contributing as f64;
    weights.iter_mut().for_each(|w| *w *= scale);
    Ok(KernelWeights {
        x: x.to_vec(),
        weights,
        contributing_trees: contributing,
    })
}
