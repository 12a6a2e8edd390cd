use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::forest::{DecisionTree, Node};

/// Depth-dependent split probability `alpha (1 + d)^-beta`, root depth 0.
/// Nodes at depth `max_depth` or deeper never split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePrior {
    pub alpha: f64,
    pub beta: f64,
    pub max_depth: Option<usize>,
}

impl Default for TreePrior {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            beta: 2.0,
            max_depth: None,
        }
    }
}

impl TreePrior {
    pub fn split_probability(&self, depth: usize) -> f64 {
        if self.max_depth.is_some_and(|m| depth >= m) {
            0.0
        } else {
            self.alpha * (1.0 + depth as f64).powf(-self.beta)
        }
    }

    pub fn can_split(&self, depth: usize) -> bool {
        self.split_probability(depth) > 0.0
    }
}

/// Candidate split rules: midpoints between consecutive distinct training
/// values of each covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpace {
    cuts: Vec<Vec<f64>>,
    available: Vec<usize>,
}

impl SplitSpace {
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cuts: Vec<Vec<f64>> = columns
            .iter()
            .map(|c| {
                let mut v = c.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            })
            .collect();
        let available = (0..cuts.len()).filter(|&j| !cuts[j].is_empty()).collect();
        Self { cuts, available }
    }

    pub fn cuts(&self, covariate: usize) -> &[f64] {
        &self.cuts[covariate]
    }

    pub fn available(&self) -> &[usize] {
        &self.available
    }

    /// Log probability of drawing a particular rule on `covariate`.
    pub fn rule_log_probability(&self, covariate: usize) -> f64 {
        -(self.available.len() as f64).ln() - (self.cuts[covariate].len() as f64).ln()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Rule {
        let covariate = self.available[rng.random_range(0..self.available.len())];
        let cut = rng.random_range(0..self.cuts[covariate].len());
        Rule {
            covariate,
            cut,
            threshold: self.cuts[covariate][cut],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub covariate: usize,
    pub cut: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartNode {
    pub parent: Option<usize>,
    /// Units with `x[covariate] <= threshold` go to the first child.
    pub children: Option<(usize, usize)>,
    pub rule: Option<Rule>,
    pub depth: usize,
    pub value: f64,
    live: bool,
}

impl BartNode {
    fn leaf(parent: Option<usize>, depth: usize) -> Self {
        Self {
            parent,
            children: None,
            rule: None,
            depth,
            value: 0.0,
            live: true,
        }
    }
}

/// Arena-backed regression tree. Node ids stay stable across grow and prune;
/// freed slots are reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartTree {
    nodes: Vec<BartNode>,
    free: Vec<usize>,
}

impl Default for BartTree {
    fn default() -> Self {
        Self::stump()
    }
}

impl BartTree {
    pub fn stump() -> Self {
        Self {
            nodes: vec![BartNode::leaf(None, 0)],
            free: Vec::new(),
        }
    }

    /// Upper bound on node ids, for sizing per-node buffers.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> &BartNode {
        &self.nodes[id]
    }

    pub fn set_value(&mut self, id: usize, value: f64) {
        self.nodes[id].value = value;
    }

    fn live(&self) -> impl Iterator<Item = (usize, &BartNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.live)
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].children.is_none()
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.live().filter(|(_, n)| n.children.is_none()).map(|(i, _)| i).collect()
    }

    pub fn internal(&self) -> Vec<usize> {
        self.live().filter(|(_, n)| n.children.is_some()).map(|(i, _)| i).collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.live().filter(|(_, n)| n.children.is_none()).count()
    }

    pub fn is_stump(&self) -> bool {
        self.is_leaf(0)
    }

    /// Internal nodes whose children are both leaves.
    pub fn prunable(&self) -> Vec<usize> {
        self.live()
            .filter_map(|(i, n)| match n.children {
                Some((l, r)) if self.is_leaf(l) && self.is_leaf(r) => Some(i),
                _ => None,
            })
            .collect()
    }

    /// Parent-child pairs of internal nodes.
    pub fn swappable(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, n) in self.live() {
            if let Some((l, r)) = n.children {
                for c in [l, r] {
                    if !self.is_leaf(c) {
                        out.push((i, c));
                    }
                }
            }
        }
        out
    }

    pub fn max_depth(&self) -> usize {
        self.live().map(|(_, n)| n.depth).max().unwrap_or(0)
    }

    /// Follow rules from node `from` down to a leaf.
    #[inline]
    pub fn route_from(&self, from: usize, value: impl Fn(usize) -> f64) -> usize {
        let mut id = from;
        while let (Some((l, r)), Some(rule)) = (self.nodes[id].children, self.nodes[id].rule) {
            id = if value(rule.covariate) <= rule.threshold { l } else { r };
        }
        id
    }

    pub fn route(&self, x: &[f64]) -> usize {
        self.route_from(0, |j| x[j])
    }

    /// Leaf value reached by `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.route(x)].value
    }

    fn alloc(&mut self, node: BartNode) -> usize {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = node;
            id
        } else {
            self.nodes.push(node);
            self.nodes.len() - 1
        }
    }

    /// Split leaf `id` with `rule`; returns the new children.
    pub fn grow(&mut self, id: usize, rule: Rule) -> (usize, usize) {
        assert!(self.is_leaf(id), "grow on an internal node");
        let depth = self.nodes[id].depth + 1;
        // Allocate the right child first so that a later prune frees ids in
        // an order that makes grow-after-prune reuse the same ids.
        let r = self.alloc(BartNode::leaf(Some(id), depth));
        let l = self.alloc(BartNode::leaf(Some(id), depth));
        self.nodes[id].children = Some((l, r));
        self.nodes[id].rule = Some(rule);
        (l, r)
    }

    /// Collapse an internal node whose children are leaves.
    pub fn prune(&mut self, id: usize) {
        let (l, r) = self.nodes[id].children.expect("prune on a leaf");
        assert!(self.is_leaf(l) && self.is_leaf(r), "prune needs leaf children");
        for c in [l, r] {
            self.nodes[c].live = false;
        }
        self.free.push(l);
        self.free.push(r);
        self.nodes[id].children = None;
        self.nodes[id].rule = None;
    }

    /// Marks every node in the subtree rooted at `id`.
    pub fn subtree_mask(&self, id: usize) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        let mut stack = vec![id];
        while let Some(k) = stack.pop() {
            mask[k] = true;
            if let Some((l, r)) = self.nodes[k].children {
                stack.push(l);
                stack.push(r);
            }
        }
        mask
    }

    pub fn subtree_leaves(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(k) = stack.pop() {
            match self.nodes[k].children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(k),
            }
        }
        out
    }

    /// Log prior: split and no-split probabilities over nodes plus the
    /// uniform rule-selection probability at each split.
    pub fn log_prior(&self, prior: &TreePrior, space: &SplitSpace) -> f64 {
        self.live()
            .map(|(_, n)| match n.rule {
                Some(rule) => {
                    prior.split_probability(n.depth).ln() + space.rule_log_probability(rule.covariate)
                }
                None => (1.0 - prior.split_probability(n.depth)).ln(),
            })
            .sum()
    }

    /// Log prior of the shape alone, without rule-selection terms.
    pub fn structure_log_prior(&self, prior: &TreePrior) -> f64 {
        self.live()
            .map(|(_, n)| {
                let s = prior.split_probability(n.depth);
                if n.children.is_some() {
                    s.ln()
                } else {
                    (1.0 - s).ln()
                }
            })
            .sum()
    }

    /// Shape and rules as a nested string, e.g. `(x0<=1.5 . (x0<=2.5 . .))`.
    pub fn canonical(&self) -> String {
        fn rec(t: &BartTree, id: usize, out: &mut String) {
            match (t.nodes[id].children, t.nodes[id].rule) {
                (Some((l, r)), Some(rule)) => {
                    out.push_str(&format!("(x{}<={} ", rule.covariate, rule.threshold));
                    rec(t, l, out);
                    out.push(' ');
                    rec(t, r, out);
                    out.push(')');
                }
                _ => out.push('.'),
            }
        }
        let mut s = String::new();
        rec(self, 0, &mut s);
        s
    }

    /// Convert to the shared tree representation (root depth 1, no members).
    pub fn to_decision_tree(&self, num_features: usize) -> DecisionTree {
        fn rec(t: &BartTree, id: usize, out: &mut Vec<Node>) -> usize {
            let me = out.len();
            let depth = t.nodes[id].depth + 1;
            out.push(Node::Leaf {
                members: Vec::new(),
                depth,
                degenerate: false,
            });
            if let (Some((l, r)), Some(rule)) = (t.nodes[id].children, t.nodes[id].rule) {
                let left = rec(t, l, out);
                let right = rec(t, r, out);
                out[me] = Node::Split {
                    covariate: rule.covariate,
                    threshold: rule.threshold,
                    left,
                    right,
                    depth,
                };
            }
            me
        }
        let mut nodes = Vec::new();
        rec(self, 0, &mut nodes);
        DecisionTree::from_nodes_unchecked(nodes, num_features)
    }
}

/// Log prior of a tree shape given as a [`DecisionTree`] (root depth 1 there).
/// Split thresholds are assumed to be members of `space`.
pub fn tree_log_prior(tree: &DecisionTree, prior: &TreePrior, space: &SplitSpace) -> f64 {
    tree.nodes()
        .iter()
        .map(|n| match n {
            Node::Split {
                covariate, depth, ..
            } => prior.split_probability(depth - 1).ln() + space.rule_log_probability(*covariate),
            Node::Leaf { depth, .. } => (1.0 - prior.split_probability(depth - 1)).ln(),
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Grow, MoveKind::Prune, MoveKind::Change, MoveKind::Swap];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const MOVE_PROBABILITIES: [f64; 4] = [0.25, 0.25, 0.40, 0.10];

fn growable(tree: &BartTree, prior: &TreePrior) -> Vec<usize> {
    tree.leaves()
        .into_iter()
        .filter(|&l| prior.can_split(tree.node(l).depth))
        .collect()
}

/// Move-kind probabilities renormalized over the moves feasible for `tree`.
pub fn move_probabilities(tree: &BartTree, prior: &TreePrior, space: &SplitSpace) -> [f64; 4] {
    let has_rules = !space.available().is_empty();
    let feasible = [
        has_rules && !growable(tree, prior).is_empty(),
        !tree.is_stump(),
        has_rules && !tree.is_stump(),
        !tree.swappable().is_empty(),
    ];
    let total: f64 = (0..4).filter(|&k| feasible[k]).map(|k| MOVE_PROBABILITIES[k]).sum();
    let mut out = [0.0; 4];
    if total > 0.0 {
        for k in 0..4 {
            if feasible[k] {
                out[k] = MOVE_PROBABILITIES[k] / total;
            }
        }
    }
    out
}

pub fn draw_move_kind<R: Rng + ?Sized>(probs: &[f64; 4], rng: &mut R) -> Option<MoveKind> {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(MoveKind::ALL[k]);
            if u < acc {
                return last;
            }
        }
    }
    last
}

/// A proposed tree. `root` is the node whose subtree changed; it has the
/// same id in the old and new trees.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub kind: MoveKind,
    pub tree: BartTree,
    pub root: usize,
    /// `log q(new -> old) - log q(old -> new)`.
    pub log_proposal_ratio: f64,
}

/// Draw a grow, prune, change or swap proposal for `tree`, or `None` when no
/// move is feasible.
pub fn propose_move<R: Rng + ?Sized>(
    tree: &BartTree,
    prior: &TreePrior,
    space: &SplitSpace,
    rng: &mut R,
) -> Option<Proposal> {
    let probs = move_probabilities(tree, prior, space);
    let kind = draw_move_kind(&probs, rng)?;
    let mut new = tree.clone();
    let (root, log_ratio) = match kind {
        MoveKind::Grow => {
            let cand = growable(tree, prior);
            let leaf = cand[rng.random_range(0..cand.len())];
            let rule = space.draw(rng);
            new.grow(leaf, rule);
            let back = move_probabilities(&new, prior, space)[MoveKind::Prune.index()];
            let forward = probs[MoveKind::Grow.index()] / cand.len() as f64;
            let forward_log = forward.ln() + space.rule_log_probability(rule.covariate);
            (leaf, (back / new.prunable().len() as f64).ln() - forward_log)
        }
        MoveKind::Prune => {
            let cand = tree.prunable();
            let node = cand[rng.random_range(0..cand.len())];
            let rule = tree.node(node).rule.expect("prunable node has a rule");
            new.prune(node);
            let back_probs = move_probabilities(&new, prior, space);
            let back = back_probs[MoveKind::Grow.index()] / growable(&new, prior).len() as f64;
            let back_log = back.ln() + space.rule_log_probability(rule.covariate);
            let forward = probs[MoveKind::Prune.index()] / cand.len() as f64;
            (node, back_log - forward.ln())
        }
        MoveKind::Change => {
            let cand = tree.internal();
            let node = cand[rng.random_range(0..cand.len())];
            let old = tree.node(node).rule.expect("internal node has a rule");
            let rule = space.draw(rng);
            new.nodes[node].rule = Some(rule);
            let ratio = space.rule_log_probability(old.covariate) - space.rule_log_probability(rule.covariate);
            (node, ratio)
        }
        MoveKind::Swap => {
            let cand = tree.swappable();
            let (parent, child) = cand[rng.random_range(0..cand.len())];
            let pr = new.nodes[parent].rule;
            new.nodes[parent].rule = new.nodes[child].rule;
            new.nodes[child].rule = pr;
            (parent, 0.0)
        }
    };
    Some(Proposal {
        kind,
        tree: new,
        root,
        log_proposal_ratio: log_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn space() -> SplitSpace {
        SplitSpace::from_columns(&[vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0, 1.0]])
    }

    fn rule(space: &SplitSpace, covariate: usize, cut: usize) -> Rule {
        Rule {
            covariate,
            cut,
            threshold: space.cuts(covariate)[cut],
        }
    }

    #[test]
    fn structure_prior_hand_values() {
        let prior = TreePrior::default();
        let s = BartTree::stump();
        assert!((s.structure_log_prior(&prior).exp() - 0.05).abs() < 1e-12);
        let mut t = BartTree::stump();
        t.grow(0, rule(&space(), 0, 1));
        let expected = 0.95 * (1.0 - 0.95 / 4.0) * (1.0 - 0.95 / 4.0);
        assert!((t.structure_log_prior(&prior).exp() - expected).abs() < 1e-12);
        assert!((expected - 0.5523).abs() < 1e-4);
        let dt = t.to_decision_tree(2);
        let sp = space();
        assert!((tree_log_prior(&dt, &prior, &sp) - t.log_prior(&prior, &sp)).abs() < 1e-12);
    }

    #[test]
    fn stump_only_grows() {
        let sp = space();
        let probs = move_probabilities(&BartTree::stump(), &TreePrior::default(), &sp);
        assert_eq!(probs, [1.0, 0.0, 0.0, 0.0]);
        let frozen = TreePrior {
            max_depth: Some(0),
            ..TreePrior::default()
        };
        let mut r = stream(1);
        assert!(propose_move(&BartTree::stump(), &frozen, &sp, &mut r).is_none());
    }

    #[test]
    fn grow_then_prune_restores_shape() {
        let sp = space();
        let mut t = BartTree::stump();
        let (l, _) = t.grow(0, rule(&sp, 0, 1));
        let before = t.clone();
        t.grow(l, rule(&sp, 1, 0));
        assert_ne!(t.canonical(), before.canonical());
        t.prune(l);
        assert_eq!(t.canonical(), before.canonical());
        let (l2, _) = t.grow(l, rule(&sp, 1, 0));
        assert!(l2 < t.capacity() && t.capacity() == 5);
    }

    #[test]
    fn proposal_ratios_are_reciprocal() {
        // Grow from a stump and the matching prune back must have opposite
        // log proposal ratios once rule terms are accounted for.
        let sp = space();
        let prior = TreePrior::default();
        let mut r = stream(7);
        let g = propose_move(&BartTree::stump(), &prior, &sp, &mut r).unwrap();
        assert_eq!(g.kind, MoveKind::Grow);
        let back = move_probabilities(&g.tree, &prior, &sp);
        // The only prunable node is the root; reverse is grow at the root.
        let rule = g.tree.node(0).rule.unwrap();
        let prune_ratio = (1.0f64).ln() + sp.rule_log_probability(rule.covariate)
            - (back[MoveKind::Prune.index()] / 1.0).ln();
        assert!((g.log_proposal_ratio + prune_ratio).abs() < 1e-12);
    }
}
