use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node of a [`DecisionTree`]. Units go left iff `value <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        covariate: usize,
        threshold: f64,
        left: usize,
        right: usize,
        depth: usize,
    },
    Leaf {
        members: Vec<usize>,
        depth: usize,
        /// Set when growth stopped because the node had no exposure variation.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        degenerate: bool,
    },
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Split { depth, .. } | Node::Leaf { depth, .. } => *depth,
        }
    }
}

/// Binary partition tree whose leaves carry the indices of the units that
/// populate them. Root depth is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    num_features: usize,
}

impl DecisionTree {
    /// Assemble a tree from nodes with the root at index 0, checking structure.
    pub fn from_nodes(nodes: Vec<Node>, num_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("tree has no nodes".into()));
        }
        let mut visited = vec![false; nodes.len()];
        let mut stack = vec![(0usize, 1usize)];
        while let Some((id, depth)) = stack.pop() {
            if visited[id] {
                return Err(Error::InvalidArgument(format!("node {id} reached twice")));
            }
            visited[id] = true;
            if nodes[id].depth() != depth {
                return Err(Error::InvalidArgument(format!("node {id} has wrong depth")));
            }
            if let Node::Split {
                covariate,
                left,
                right,
                ..
            } = nodes[id]
            {
                if covariate >= num_features || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::InvalidArgument(format!("node {id} is malformed")));
                }
                stack.push((left, depth + 1));
                stack.push((right, depth + 1));
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::InvalidArgument("unreachable nodes".into()));
        }
        Ok(Self {
            nodes,
            num_features,
        })
    }

    pub fn stump(members: Vec<usize>, num_features: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf {
                members,
                depth: 1,
                degenerate: false,
            }],
            num_features,
        }
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<Node>, num_features: usize) -> Self {
        Self {
            nodes,
            num_features,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn is_stump(&self) -> bool {
        matches!(self.nodes[0], Node::Leaf { .. })
    }

    /// Index of the leaf reached by covariate vector `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        self.descend(|j| x[j])
    }

    /// Leaf reached by row `i` of a column-major table.
    pub fn leaf_index_of_row(&self, columns: &[Vec<f64>], i: usize) -> usize {
        self.descend(|j| columns[j][i])
    }

    fn descend(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    covariate,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    id = if value(*covariate) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn members(&self, leaf: usize) -> &[usize] {
        match &self.nodes[leaf] {
            Node::Leaf { members, .. } => members,
            Node::Split { .. } => &[],
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            Node::Leaf { members, .. } => Some((id, members.as_slice())),
            Node::Split { .. } => None,
        })
    }

    /// `(covariate, depth)` of every split node.
    pub fn splits(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split {
                covariate, depth, ..
            } => Some((*covariate, *depth)),
            Node::Leaf { .. } => None,
        })
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(Node::depth).max().unwrap_or(1)
    }

    pub fn has_degenerate_leaf(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, Node::Leaf { degenerate: true, .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_split() -> DecisionTree {
        DecisionTree::from_nodes(
            vec![
                Node::Split {
                    covariate: 1,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    depth: 1,
                },
                Node::Leaf {
                    members: vec![0, 2],
                    depth: 2,
                    degenerate: false,
                },
                Node::Leaf {
                    members: vec![1],
                    depth: 2,
                    degenerate: false,
                },
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn routing_uses_less_or_equal() {
        let t = one_split();
        assert_eq!(t.leaf_index(&[9.0, 0.5]), 1);
        assert_eq!(t.leaf_index(&[9.0, 0.51]), 2);
        assert_eq!(t.members(1), &[0, 2]);
        assert_eq!(t.num_leaves(), 2);
        assert_eq!(t.splits().collect::<Vec<_>>(), vec![(1, 1)]);
    }

    #[test]
    fn malformed_trees_rejected() {
        let bad_depth = vec![Node::Leaf {
            members: vec![],
            depth: 2,
            degenerate: false,
        }];
        assert!(DecisionTree::from_nodes(bad_depth, 1).is_err());
        let bad_child = vec![Node::Split {
            covariate: 0,
            threshold: 0.0,
            left: 5,
            right: 0,
            depth: 1,
        }];
        assert!(DecisionTree::from_nodes(bad_child, 1).is_err());
    }
}
