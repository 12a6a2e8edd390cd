use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::forest::{grow_tree, DecisionTree, GrowConfig, Node, NodeResponse};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub covariate: usize,
    pub name: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitNode {
    pub id: usize,
    pub depth: usize,
    pub mean_ite: f64,
    pub count: usize,
    /// Fraction of all units reaching the node.
    pub share: f64,
    /// `None` for leaves. Units with `value <= threshold` go to `children.0`.
    pub split: Option<SplitRule>,
    pub children: Option<(usize, usize)>,
}

/// Shallow regression tree fit to per-unit effect estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTheFitTree {
    pub nodes: Vec<FitNode>,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl FitTheFitTree {
    pub fn root(&self) -> &FitNode {
        &self.nodes[0]
    }

    pub fn root_split(&self) -> Option<&SplitRule> {
        self.nodes[0].split.as_ref()
    }

    pub fn num_splits(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_some()).count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &FitNode> {
        self.nodes.iter().filter(|n| n.split.is_none())
    }

    /// Number of split levels on the deepest path.
    pub fn depth(&self) -> usize {
        self.leaves().map(|n| n.depth - 1).max().unwrap_or(0)
    }
}

struct Centered<'a>(&'a [f64]);

impl NodeResponse for Centered<'_> {
    fn responses(&self, members: &[usize], out: &mut Vec<f64>) -> bool {
        let m = members.iter().map(|&i| self.0[i]).sum::<f64>() / members.len() as f64;
        out.clear();
        out.extend(members.iter().map(|&i| self.0[i] - m));
        true
    }
}

/// Greedy squared-error CART over all covariates with effects as the target.
/// `max_depth` counts split levels; leaves hold at least
/// `ceil(min_leaf_fraction * n)` units.
pub fn fit_the_fit(
    ites: &[f64],
    columns: &[Vec<f64>],
    names: &[String],
    max_depth: usize,
    min_leaf_fraction: f64,
) -> FitTheFitTree {
    let n = ites.len();
    let min_leaf = ((min_leaf_fraction * n as f64).ceil() as usize).max(1);
    let cfg = GrowConfig {
        min_leaf,
        mtry: columns.len(),
        max_depth: Some(max_depth),
    };
    // All features are scanned, so the generator never influences the result.
    let mut rng = StreamRng::seed_from_u64(0);
    let tree = if max_depth == 0 || n == 0 {
        DecisionTree::stump((0..n).collect(), columns.len())
    } else {
        grow_tree(columns, (0..n).collect(), None, &Centered(ites), cfg, &mut rng)
    };
    let mut nodes = Vec::new();
    collect(&tree, 0, ites, names, n, &mut nodes);
    FitTheFitTree {
        nodes,
        max_depth,
        min_leaf,
    }
}

/// Preorder walk; returns the new node id and the units below it.
fn collect(
    tree: &DecisionTree,
    id: usize,
    ites: &[f64],
    names: &[String],
    n: usize,
    out: &mut Vec<FitNode>,
) -> (usize, Vec<usize>) {
    let my_id = out.len();
    out.push(FitNode {
        id: my_id,
        depth: tree.node(id).depth(),
        mean_ite: 0.0,
        count: 0,
        share: 0.0,
        split: None,
        children: None,
    });
    let members = match tree.node(id) {
        Node::Leaf { members, .. } => members.clone(),
        Node::Split {
            covariate,
            threshold,
            left,
            right,
            ..
        } => {
            let (l, mut lm) = collect(tree, *left, ites, names, n, out);
            let (r, rm) = collect(tree, *right, ites, names, n, out);
            out[my_id].split = Some(SplitRule {
                covariate: *covariate,
                name: names[*covariate].clone(),
                threshold: *threshold,
            });
            out[my_id].children = Some((l, r));
            lm.extend(rm);
            lm
        }
    };
    let node = &mut out[my_id];
    node.count = members.len();
    node.share = if n > 0 { members.len() as f64 / n as f64 } else { 0.0 };
    node.mean_ite = if members.is_empty() {
        0.0
    } else {
        members.iter().map(|&i| ites[i]).sum::<f64>() / members.len() as f64
    };
    (my_id, members)
}
