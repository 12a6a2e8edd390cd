//! Greedy tree growth shared by the gradient (causal) trees and the plain
//! regression trees used for nuisance estimation.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Node};
use crate::error::{Error, Result};

/// Disjoint grow/estimate index sets for one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestPartition {
    pub grow_indices: Vec<usize>,
    pub estimate_indices: Vec<usize>,
}

/// Randomly assign `floor(fraction * n)` units to the grow set and the rest
/// to the estimate set. Both returned sets are sorted.
pub fn honest_partition<R: Rng + ?Sized>(
    indices: &[usize],
    fraction: f64,
    rng: &mut R,
) -> Result<HonestPartition> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "honest fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = indices.len();
    let grow_n = (fraction * n as f64).floor() as usize;
    if grow_n < 1 || n - grow_n < 1 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} units with fraction {fraction}"
        )));
    }
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(rng);
    let mut grow_indices = shuffled[..grow_n].to_vec();
    let mut estimate_indices = shuffled[grow_n..].to_vec();
    grow_indices.sort_unstable();
    estimate_indices.sort_unstable();
    Ok(HonestPartition {
        grow_indices,
        estimate_indices,
    })
}

/// `n_left * n_right / n_parent^2 * (mean_left - mean_right)^2` for a split
/// of the pseudo-outcomes `rho` (indexed by unit) into the given children.
pub fn split_gain(rho: &[f64], left: &[usize], right: &[usize]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::InvalidArgument("split has an empty child".into()));
    }
    let nl = left.len() as f64;
    let nr = right.len() as f64;
    let ml = left.iter().map(|&i| rho[i]).sum::<f64>() / nl;
    let mr = right.iter().map(|&i| rho[i]).sum::<f64>() / nr;
    Ok(gain_from_sums(nl, ml * nl, nr, mr * nr))
}

#[inline]
fn gain_from_sums(nl: f64, sl: f64, nr: f64, sr: f64) -> f64 {
    let np = nl + nr;
    let d = sl / nl - sr / nr;
    nl * nr / (np * np) * d * d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    pub min_leaf: usize,
    /// Covariates drawn per node as split candidates.
    pub mtry: usize,
    /// Maximum number of splits along any root-to-leaf path.
    pub max_depth: Option<usize>,
}

impl GrowConfig {
    /// `ceil(sqrt(p) + 0.2 p)` capped at p.
    pub fn default_mtry(p: usize) -> usize {
        (((p as f64).sqrt() + 0.2 * p as f64).ceil() as usize).clamp(1, p.max(1))
    }

    pub fn with_defaults(p: usize) -> Self {
        Self {
            min_leaf: 5,
            mtry: Self::default_mtry(p),
            max_depth: None,
        }
    }
}

/// Per-node responses used to score splits; `None` marks a degenerate node.
pub(crate) trait NodeResponse {
    fn responses(&self, members: &[usize], out: &mut Vec<f64>) -> bool;
}

struct Candidate {
    covariate: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a, R: NodeResponse> {
    columns: &'a [Vec<f64>],
    cfg: GrowConfig,
    response: &'a R,
    honest: bool,
    nodes: Vec<Node>,
    resp: Vec<f64>,
    pairs: Vec<(f64, f64)>,
    est_values: Vec<f64>,
}

impl<R: NodeResponse> Grower<'_, R> {
    fn leaf(&mut self, grow: Vec<usize>, est: Vec<usize>, depth: usize, degenerate: bool) -> usize {
        let members = if self.honest { est } else { grow };
        self.nodes.push(Node::Leaf {
            members,
            depth,
            degenerate,
        });
        self.nodes.len() - 1
    }

    fn build<G: Rng + ?Sized>(
        &mut self,
        grow: Vec<usize>,
        est: Vec<usize>,
        depth: usize,
        rng: &mut G,
    ) -> usize {
        let min_leaf = self.cfg.min_leaf.max(1);
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth <= d);
        if !depth_ok || grow.len() < 2 * min_leaf || (self.honest && est.len() < 2 * min_leaf) {
            return self.leaf(grow, est, depth, false);
        }
        let mut resp = std::mem::take(&mut self.resp);
        if !self.response.responses(&grow, &mut resp) {
            self.resp = resp;
            return self.leaf(grow, est, depth, true);
        }
        let p = self.columns.len();
        let mut features: Vec<usize> = index::sample(rng, p, self.cfg.mtry.min(p)).into_vec();
        features.sort_unstable();
        let scale = resp.iter().map(|r| r * r).sum::<f64>() / resp.len() as f64;
        let best = self.best_split(&grow, &est, &resp, &features, min_leaf);
        self.resp = resp;
        let Some(best) = best.filter(|b| b.gain > 1e-12 * scale && b.gain > 0.0) else {
            return self.leaf(grow, est, depth, false);
        };
        let col = &self.columns[best.covariate];
        let (gl, gr): (Vec<usize>, Vec<usize>) =
            grow.into_iter().partition(|&i| col[i] <= best.threshold);
        let (el, er): (Vec<usize>, Vec<usize>) =
            est.into_iter().partition(|&i| col[i] <= best.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            members: Vec::new(),
            depth,
            degenerate: false,
        });
        let left = self.build(gl, el, depth + 1, rng);
        let right = self.build(gr, er, depth + 1, rng);
        self.nodes[id] = Node::Split {
            covariate: best.covariate,
            threshold: best.threshold,
            left,
            right,
            depth,
        };
        id
    }

    fn best_split(
        &mut self,
        grow: &[usize],
        est: &[usize],
        resp: &[f64],
        features: &[usize],
        min_leaf: usize,
    ) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let n = grow.len();
        let total: f64 = resp.iter().sum();
        for &j in features {
            let col = &self.columns[j];
            self.pairs.clear();
            self.pairs
                .extend(grow.iter().zip(resp).map(|(&i, &r)| (col[i], r)));
            self.pairs
                .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite covariates"));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                continue;
            }
            if self.honest {
                self.est_values.clear();
                self.est_values.extend(est.iter().map(|&i| col[i]));
                self.est_values
                    .sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
            }
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.pairs[k].1;
                let v = self.pairs[k].0;
                let next = self.pairs[k + 1].0;
                if v == next {
                    continue;
                }
                let nl = k + 1;
                if nl < min_leaf {
                    continue;
                }
                if n - nl < min_leaf {
                    break;
                }
                let threshold = 0.5 * (v + next);
                if self.honest {
                    let el = self.est_values.partition_point(|&e| e <= threshold);
                    if el < min_leaf || est.len() - el < min_leaf {
                        continue;
                    }
                }
                let gain = gain_from_sums(nl as f64, left_sum, (n - nl) as f64, total - left_sum);
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain + 1e-12 * b.gain.abs(),
                };
                if better {
                    best = Some(Candidate {
                        covariate: j,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Grow a tree on `grow` units. When `estimate` is given the tree is honest:
/// splits must leave at least `min_leaf` estimate units on each side and the
/// leaves are populated with estimate units only.
pub(crate) fn grow_tree<R: NodeResponse, G: Rng + ?Sized>(
    columns: &[Vec<f64>],
    grow: Vec<usize>,
    estimate: Option<Vec<usize>>,
    response: &R,
    cfg: GrowConfig,
    rng: &mut G,
) -> DecisionTree {
    let honest = estimate.is_some();
    let mut grower = Grower {
        columns,
        cfg,
        response,
        honest,
        nodes: Vec::new(),
        resp: Vec::new(),
        pairs: Vec::with_capacity(grow.len()),
        est_values: Vec::new(),
    };
    grower.build(grow, estimate.unwrap_or_default(), 1, rng);
    DecisionTree::from_nodes_unchecked(grower.nodes, columns.len())
}

/// Pseudo-outcomes of the centered treatment-effect score.
pub(crate) struct GradientResponse<'a> {
    pub y_resid: &'a [f64],
    pub z_resid: &'a [f64],
}

impl NodeResponse for GradientResponse<'_> {
    fn responses(&self, members: &[usize], out: &mut Vec<f64>) -> bool {
        let mut szy = 0.0;
        let mut szz = 0.0;
        for &i in members {
            szy += self.z_resid[i] * self.y_resid[i];
            szz += self.z_resid[i] * self.z_resid[i];
        }
        let a = szz / members.len() as f64;
        if !(a > 0.0) || !a.is_finite() {
            return false;
        }
        let theta = szy / szz;
        out.clear();
        out.extend(members.iter().map(|&i| {
            let (y, z) = (self.y_resid[i], self.z_resid[i]);
            let fitted = theta * z;
            let r = y - fitted;
            // below rounding noise of the subtraction
            let r = if r.abs() <= 1e-12 * (y.abs() + fitted.abs()) { 0.0 } else { r };
            z * r / a
        }));
        true
    }
}

/// Raw targets; splitting on them is variance reduction.
pub(crate) struct TargetResponse<'a> {
    pub target: &'a [f64],
}

impl NodeResponse for TargetResponse<'_> {
    fn responses(&self, members: &[usize], out: &mut Vec<f64>) -> bool {
        let m = members.iter().map(|&i| self.target[i]).sum::<f64>() / members.len() as f64;
        out.clear();
        out.extend(members.iter().map(|&i| self.target[i] - m));
        true
    }
}

/// Grow an honest gradient tree for the treatment-effect score.
///
/// `y_resid` and `z_resid` are indexed by unit over the whole sample; only
/// `grow_indices` shape the tree and only `estimate_indices` populate leaves.
pub fn grow_gradient_tree<G: Rng + ?Sized>(
    columns: &[Vec<f64>],
    y_resid: &[f64],
    z_resid: &[f64],
    partition: &HonestPartition,
    cfg: GrowConfig,
    rng: &mut G,
) -> Result<DecisionTree> {
    if partition.grow_indices.is_empty() {
        return Err(Error::InvalidArgument("empty grow set".into()));
    }
    if cfg.mtry == 0 {
        return Err(Error::InvalidArgument("mtry must be positive".into()));
    }
    let response = GradientResponse { y_resid, z_resid };
    Ok(grow_tree(
        columns,
        partition.grow_indices.clone(),
        Some(partition.estimate_indices.clone()),
        &response,
        cfg,
        rng,
    ))
}
