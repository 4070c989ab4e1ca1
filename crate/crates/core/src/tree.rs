use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which grower produced a tree: supervised CART splits, or
/// split-unsupervised (SUT) splits that never read the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    Cart,
    Sut,
}

impl std::fmt::Display for TreeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TreeKind::Cart => write!(f, "cart"),
            TreeKind::Sut => write!(f, "sut"),
        }
    }
}

/// Tree node. Serializes to the canonical nested-object form:
/// `{"feature": j, "cut": c, "left": ..., "right": ...}` for splits and
/// `{"members": [[index, h], ...], "mean": m}` for leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split(SplitNode),
    Leaf(LeafNode),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitNode {
    pub feature: usize,
    pub cut: f64,
    pub left: Box<Node>,
    pub right: Box<Node>,
}

/// Leaf carrying the bootstrap-weighted member list: training indices with
/// their multiplicities h_i, and the bootstrap-weighted response mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafNode {
    pub members: Vec<(u32, u32)>,
    pub mean: f64,
}

impl LeafNode {
    /// n_l: total bootstrap weight of the leaf, sum of member multiplicities.
    #[inline]
    pub fn weight(&self) -> u32 {
        self.members.iter().map(|&(_, h)| h).sum()
    }
}

impl Node {
    fn navigate(&self, x: &[f64]) -> &LeafNode {
        match self {
            Node::Leaf(l) => l,
            Node::Split(s) => {
                if x[s.feature] < s.cut {
                    s.left.navigate(x)
                } else {
                    s.right.navigate(x)
                }
            }
        }
    }

    fn visit_leaves<'a>(&'a self, out: &mut Vec<&'a LeafNode>) {
        match self {
            Node::Leaf(l) => out.push(l),
            Node::Split(s) => {
                s.left.visit_leaves(out);
                s.right.visit_leaves(out);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Node::Leaf(l) => {
                if l.members.is_empty() || l.weight() == 0 {
                    return Err(Error::InvalidArgument("empty leaf".into()));
                }
                // canonical member order; sparse row merges rely on it
                if l.members.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::InvalidArgument(
                        "leaf members must be strictly increasing by index".into(),
                    ));
                }
                Ok(())
            }
            Node::Split(s) => {
                s.left.validate()?;
                s.right.validate()
            }
        }
    }

    fn same_structure(&self, other: &Node) -> bool {
        match (self, other) {
            (Node::Leaf(a), Node::Leaf(b)) => a.members == b.members,
            (Node::Split(a), Node::Split(b)) => {
                a.feature == b.feature
                    && a.cut == b.cut
                    && a.left.same_structure(&b.left)
                    && a.right.same_structure(&b.right)
            }
            _ => false,
        }
    }
}

/// A grown regression tree. Leaves hold bootstrap-weighted member lists
/// and precomputed means, so prediction never re-touches the training
/// response.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    kind: TreeKind,
    root: Node,
}

impl RegressionTree {
    pub fn new(kind: TreeKind, root: Node) -> Result<Self> {
        root.validate()?;
        Ok(Self { kind, root })
    }

    #[inline]
    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    #[inline]
    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Leaf mean reached by dropping `x` down the tree.
    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.root.navigate(x).mean
    }

    #[inline]
    pub fn leaf_for(&self, x: &[f64]) -> &LeafNode {
        self.root.navigate(x)
    }

    pub fn leaves(&self) -> Vec<&LeafNode> {
        let mut out = Vec::new();
        self.root.visit_leaves(&mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Smallest bootstrap-weighted leaf size in the tree.
    pub fn min_leaf_weight(&self) -> u32 {
        self.leaves().iter().map(|l| l.weight()).min().unwrap_or(0)
    }

    /// Split structure comparison: features, cuts, and leaf member lists
    /// must match; leaf means are ignored.
    pub fn same_structure(&self, other: &RegressionTree) -> bool {
        self.root.same_structure(&other.root)
    }

    /// Canonical JSON form of the node structure.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(&self.root).expect("tree serialization cannot fail")
    }

    pub fn from_canonical_json(kind: TreeKind, json: &str) -> Result<Self> {
        let root: Node = serde_json::from_str(json)?;
        Self::new(kind, root)
    }
}
