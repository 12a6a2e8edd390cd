//! Subsampled regression forest with out-of-bag prediction, used for the
//! outcome and propensity nuisance models.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grow::{grow_tree, honest_partition, GrowConfig, TargetResponse};
use super::tree::DecisionTree;
use crate::error::{Error, Result};
use crate::rng;

/// Membership bitset over units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSet {
    words: Vec<u64>,
}

impl UnitSet {
    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut words = vec![0u64; n.div_ceil(64)];
        for &i in indices {
            words[i / 64] |= 1 << (i % 64);
        }
        Self { words }
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }
}

/// Draw `floor(fraction * n)` distinct units, sorted.
pub(crate) fn subsample<R: rand::Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    let k = ((fraction * n as f64).floor() as usize).clamp(1, n);
    let mut s = index::sample(rng, n, k).into_vec();
    s.sort_unstable();
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// Fraction of units drawn without replacement for each tree.
    pub sample_fraction: f64,
    /// Share of each subsample used to choose splits; the rest fills the
    /// leaves. `None` grows and estimates on the whole subsample.
    pub honest_fraction: Option<f64>,
    pub grow: GrowConfig,
}

impl ForestConfig {
    pub fn with_defaults(p: usize, num_trees: usize) -> Self {
        Self {
            num_trees,
            sample_fraction: 0.5,
            honest_fraction: None,
            grow: GrowConfig::with_defaults(p),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidArgument("num_trees must be positive".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "sample_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.honest_fraction.is_some_and(|f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::InvalidArgument("honest_fraction must lie in (0, 1)".into()));
        }
        if self.grow.mtry == 0 || self.grow.min_leaf == 0 {
            return Err(Error::InvalidArgument("mtry and min_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub tree: DecisionTree,
    /// Mean target per node id (meaningful for leaves only).
    pub leaf_values: Vec<f64>,
    pub in_bag: UnitSet,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaf_values[self.tree.leaf_index(x)]
    }

    fn predict_row(&self, columns: &[Vec<f64>], i: usize) -> f64 {
        self.leaf_values[self.tree.leaf_index_of_row(columns, i)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub trees: Vec<RegressionTree>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OobPredictions {
    pub predictions: Vec<f64>,
    /// Units that were in-bag for every tree and got a full-forest prediction.
    pub fallback_units: Vec<usize>,
}

impl RegressionForest {
    pub fn fit(columns: &[Vec<f64>], target: &[f64], cfg: ForestConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = target.len();
        if n < 10 {
            return Err(Error::InvalidArgument(format!(
                "regression forest needs at least 10 units, got {n}"
            )));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("covariate length mismatch".into()));
        }
        let response = TargetResponse { target };
        let trees = (0..cfg.num_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::substream(seed, t as u64);
                let sample = subsample(n, cfg.sample_fraction, &mut rng);
                let in_bag = UnitSet::from_indices(n, &sample);
                let tree = match cfg.honest_fraction {
                    Some(f) => {
                        let part = honest_partition(&sample, f, &mut rng)?;
                        grow_tree(
                            columns,
                            part.grow_indices,
                            Some(part.estimate_indices),
                            &response,
                            cfg.grow,
                            &mut rng,
                        )
                    }
                    None => grow_tree(columns, sample, None, &response, cfg.grow, &mut rng),
                };
                let leaf_values = (0..tree.nodes().len())
                    .map(|id| {
                        let m = tree.members(id);
                        if m.is_empty() {
                            f64::NAN
                        } else {
                            m.iter().map(|&i| target[i]).sum::<f64>() / m.len() as f64
                        }
                    })
                    .collect();
                Ok(RegressionTree {
                    tree,
                    leaf_values,
                    in_bag,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { trees, n })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Prediction for each training unit from the trees that did not sample it.
    pub fn oob_predictions(&self, columns: &[Vec<f64>]) -> OobPredictions {
        let results: Vec<(f64, bool)> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for t in self.trees.iter().filter(|t| !t.in_bag.contains(i)) {
                    sum += t.predict_row(columns, i);
                    count += 1;
                }
                if count > 0 {
                    (sum / count as f64, false)
                } else {
                    let all: f64 = self.trees.iter().map(|t| t.predict_row(columns, i)).sum();
                    (all / self.trees.len() as f64, true)
                }
            })
            .collect();
        OobPredictions {
            predictions: results.iter().map(|r| r.0).collect(),
            fallback_units: results
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.1.then_some(i))
                .collect(),
        }
    }
}

/// Fit a regression forest and return its out-of-bag predictions.
pub fn regression_forest_oob(
    columns: &[Vec<f64>],
    target: &[f64],
    cfg: ForestConfig,
    seed: u64,
) -> Result<OobPredictions> {
    Ok(RegressionForest::fit(columns, target, cfg, seed)?.oob_predictions(columns))
}
