//! Balanced scenario trees: stages, ancestry, subtree and last-common-ancestor
//! queries, and node probabilities.
//!
//! Nodes are indexed breadth-first starting from 1 at the root, so all
//! structural queries are index arithmetic: the children of node `n` are
//! `B(n-1)+2 ..= Bn+1` and its parent is `(n-2)/B + 1`. Within a stage,
//! nodes are ordered so that the descendants of any node occupy a contiguous
//! slice of every deeper stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based breadth-first node index. The root is `NodeId(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    /// Zero-based position for indexing per-node storage.
    #[inline]
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("stage count must be at least 1")]
    ZeroStages,
    #[error("branching factor must be at least 1")]
    ZeroBranching,
    #[error("tree with {stages} stages and branching {branching} exceeds the node limit")]
    TooLarge { stages: usize, branching: usize },
    #[error("node {0} is not a valid node index")]
    InvalidNode(usize),
    #[error("stage {stage} is outside 1..={limit}")]
    InvalidStage { stage: usize, limit: usize },
    #[error("target stage {target} precedes the stage {stage} of node {node}")]
    StageBeforeNode {
        node: usize,
        stage: usize,
        target: usize,
    },
    #[error("nodes {0} and {1} are in different stages")]
    StageMismatch(usize, usize),
    #[error("last common ancestor stage requires two distinct nodes")]
    IdenticalNodes,
    #[error("expected {expected} probabilities, got {got}")]
    ProbabilityCount { expected: usize, got: usize },
    #[error("probabilities of stage {stage} sum to {sum}, expected 1")]
    ProbabilitySum { stage: usize, sum: f64 },
    #[error("probability of node {0} must be in (0, 1]")]
    ProbabilityRange(usize),
}

/// Contiguous run of node ids, in global stage order.
///
/// Stage slices and subtree slices are always contiguous under breadth-first
/// indexing, so queries return this instead of allocating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRange {
    first: usize,
    last: usize,
}

impl NodeRange {
    #[inline]
    pub fn first(&self) -> NodeId {
        NodeId(self.first)
    }

    #[inline]
    pub fn last(&self) -> NodeId {
        NodeId(self.last)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // a range always holds at least one node
    }

    #[inline]
    pub fn contains(&self, n: NodeId) -> bool {
        (self.first..=self.last).contains(&n.0)
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator + Clone {
        (self.first..self.last + 1).map(NodeId)
    }
}

impl IntoIterator for NodeRange {
    type Item = NodeId;
    type IntoIter = std::iter::Map<std::ops::Range<usize>, fn(usize) -> NodeId>;

    fn into_iter(self) -> Self::IntoIter {
        (self.first..self.last + 1).map(NodeId)
    }
}

/// A balanced scenario tree with `T` stages and branching factor `B`.
///
/// Immutable after construction; all queries take `&self` and the type is
/// `Send + Sync`, so trees can be shared freely across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioTree {
    num_stages: usize,
    branching: usize,
    /// `stage_start[t-1]` is the node index of the first node of stage `t`;
    /// a sentinel `num_nodes + 1` is appended.
    stage_start: Vec<usize>,
    /// Probability of observing each node, by `NodeId::index()`.
    probabilities: Vec<f64>,
}

/// Probabilities within a stage must sum to 1 up to this slack.
const PROB_SUM_TOL: f64 = 1e-9;

impl ScenarioTree {
    /// Builds a balanced tree with uniform per-stage probabilities
    /// `p_n = B^-(t_n - 1)`.
    pub fn uniform(num_stages: usize, branching: usize) -> Result<Self, TreeError> {
        let stage_start = Self::stage_starts(num_stages, branching)?;
        let num_nodes = stage_start[num_stages] - 1;
        let mut probabilities = Vec::with_capacity(num_nodes);
        for t in 1..=num_stages {
            let width = stage_start[t] - stage_start[t - 1];
            let p = 1.0 / width as f64;
            probabilities.extend(std::iter::repeat(p).take(width));
        }
        Ok(Self {
            num_stages,
            branching,
            stage_start,
            probabilities,
        })
    }

    /// Builds a balanced tree with explicit per-node probabilities, e.g. when
    /// importing an instance file. Probabilities are validated per stage but
    /// never generated non-uniformly by this crate.
    pub fn with_probabilities(
        num_stages: usize,
        branching: usize,
        probabilities: Vec<f64>,
    ) -> Result<Self, TreeError> {
        let stage_start = Self::stage_starts(num_stages, branching)?;
        let num_nodes = stage_start[num_stages] - 1;
        if probabilities.len() != num_nodes {
            return Err(TreeError::ProbabilityCount {
                expected: num_nodes,
                got: probabilities.len(),
            });
        }
        for (k, &p) in probabilities.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(TreeError::ProbabilityRange(k + 1));
            }
        }
        for t in 1..=num_stages {
            let sum: f64 = probabilities[stage_start[t - 1] - 1..stage_start[t] - 1]
                .iter()
                .sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(TreeError::ProbabilitySum { stage: t, sum });
            }
        }
        Ok(Self {
            num_stages,
            branching,
            stage_start,
            probabilities,
        })
    }

    fn stage_starts(num_stages: usize, branching: usize) -> Result<Vec<usize>, TreeError> {
        if num_stages == 0 {
            return Err(TreeError::ZeroStages);
        }
        if branching == 0 {
            return Err(TreeError::ZeroBranching);
        }
        let mut starts = Vec::with_capacity(num_stages + 1);
        starts.push(1usize);
        let mut width = 1usize;
        for t in 0..num_stages {
            let next = starts[t]
                .checked_add(width)
                .filter(|&n| n <= u32::MAX as usize)
                .ok_or(TreeError::TooLarge {
                    stages: num_stages,
                    branching,
                })?;
            starts.push(next);
            if t + 1 < num_stages {
                width = width
                    .checked_mul(branching)
                    .ok_or(TreeError::TooLarge {
                        stages: num_stages,
                        branching,
                    })?;
            }
        }
        Ok(starts)
    }

    #[inline]
    pub fn num_stages(&self) -> usize {
        self.num_stages
    }

    #[inline]
    pub fn branching(&self) -> usize {
        self.branching
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.stage_start[self.num_stages] - 1
    }

    #[inline]
    pub fn root(&self) -> NodeId {
        NodeId(1)
    }

    pub fn nodes(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator + Clone {
        (1..self.num_nodes() + 1).map(NodeId)
    }

    fn check_node(&self, n: NodeId) -> Result<(), TreeError> {
        if n.0 >= 1 && n.0 <= self.num_nodes() {
            Ok(())
        } else {
            Err(TreeError::InvalidNode(n.0))
        }
    }

    fn check_stage(&self, t: usize) -> Result<(), TreeError> {
        if t >= 1 && t <= self.num_stages {
            Ok(())
        } else {
            Err(TreeError::InvalidStage {
                stage: t,
                limit: self.num_stages,
            })
        }
    }

    /// Stage of node `n`, in `1..=T`. Panics on an invalid node id.
    pub fn stage_of(&self, n: NodeId) -> usize {
        debug_assert!(n.0 >= 1 && n.0 <= self.num_nodes());
        // stage_start is sorted; partition_point returns how many starts are <= n.
        self.stage_start.partition_point(|&s| s <= n.0)
    }

    /// Ancestor `a(n)`, or `None` for the root.
    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        if n.0 == 1 {
            None
        } else {
            Some(NodeId((n.0 - 2) / self.branching + 1))
        }
    }

    /// Children of `n`, empty for leaf nodes.
    pub fn children(
        &self,
        n: NodeId,
    ) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator + Clone {
        let b = self.branching;
        let range = if self.stage_of(n) == self.num_stages {
            1..1 // empty
        } else {
            b * (n.0 - 1) + 2..b * n.0 + 2
        };
        range.map(NodeId)
    }

    #[inline]
    pub fn probability(&self, n: NodeId) -> f64 {
        self.probabilities[n.index()]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.stage_of(n) == self.num_stages
    }

    /// The ordered node set `S_t` of one stage.
    pub fn stage_nodes(&self, t: usize) -> Result<NodeRange, TreeError> {
        self.check_stage(t)?;
        Ok(NodeRange {
            first: self.stage_start[t - 1],
            last: self.stage_start[t] - 1,
        })
    }

    /// The path `P(n) = [root, ..., a(n), n]`; its length equals the stage of `n`.
    pub fn path_to_root(&self, n: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.check_node(n)?;
        let mut path = Vec::with_capacity(self.stage_of(n));
        let mut cur = Some(n);
        while let Some(m) = cur {
            path.push(m);
            cur = self.parent(m);
        }
        path.reverse();
        Ok(path)
    }

    /// Nodes of stage `t` that descend from `l`, in global stage order.
    /// Contains `B^(t - t_l)` nodes.
    pub fn subtree_stage_nodes(&self, l: NodeId, t: usize) -> Result<NodeRange, TreeError> {
        self.check_node(l)?;
        self.check_stage(t)?;
        let tl = self.stage_of(l);
        if t < tl {
            return Err(TreeError::StageBeforeNode {
                node: l.0,
                stage: tl,
                target: t,
            });
        }
        // Descendants keep the within-stage offset of l, scaled by B^(t - tl).
        let offset = l.0 - self.stage_start[tl - 1];
        let span = self.branching.pow((t - tl) as u32);
        let first = self.stage_start[t - 1] + offset * span;
        Ok(NodeRange {
            first,
            last: first + span - 1,
        })
    }

    /// Stage of the last common ancestor of two distinct nodes of the same
    /// stage; always strictly less than their stage.
    pub fn lca_stage(&self, m: NodeId, n: NodeId) -> Result<usize, TreeError> {
        self.check_node(m)?;
        self.check_node(n)?;
        if m == n {
            return Err(TreeError::IdenticalNodes);
        }
        let (tm, tn) = (self.stage_of(m), self.stage_of(n));
        if tm != tn {
            return Err(TreeError::StageMismatch(m.0, n.0));
        }
        let mut a = m;
        let mut b = n;
        let mut t = tm;
        while a != b {
            // both nodes are non-root here: distinct nodes at stage 1 cannot exist
            a = self.parent(a).expect("non-root node");
            b = self.parent(b).expect("non-root node");
            t -= 1;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_tree_t4_b2_has_fifteen_nodes() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        assert_eq!(tree.num_nodes(), 15);
        assert_eq!(tree.stage_nodes(4).unwrap().len(), 8);
        assert_eq!(tree.root(), NodeId(1));
        assert_eq!(tree.stage_of(NodeId(1)), 1);
        assert_eq!(tree.stage_of(NodeId(15)), 4);
    }

    #[test]
    fn single_stage_tree_is_root_only() {
        let tree = ScenarioTree::uniform(1, 3).unwrap();
        assert_eq!(tree.num_nodes(), 1);
        assert_eq!(tree.probability(NodeId(1)), 1.0);
        assert!(tree.is_leaf(NodeId(1)));
        assert_eq!(tree.children(NodeId(1)).count(), 0);
    }

    #[test]
    fn node_count_matches_geometric_series() {
        // oracle: sum of stage widths 2^(t-1)
        let expected: usize = (1..=10).map(|t| 1usize << (t - 1)).sum();
        let tree = ScenarioTree::uniform(10, 2).unwrap();
        assert_eq!(expected, 1023);
        assert_eq!(tree.num_nodes(), expected);
    }

    #[test]
    fn rejects_zero_parameters() {
        assert_eq!(ScenarioTree::uniform(0, 2).unwrap_err(), TreeError::ZeroStages);
        assert_eq!(ScenarioTree::uniform(3, 0).unwrap_err(), TreeError::ZeroBranching);
    }

    #[test]
    fn path_of_root_is_root() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        assert_eq!(tree.path_to_root(NodeId(1)).unwrap(), vec![NodeId(1)]);
    }

    #[test]
    fn path_matches_repeated_ancestor_oracle() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        // oracle: for B = 2 the parent of n is n / 2
        let mut expected = vec![10usize];
        while *expected.last().unwrap() > 1 {
            let last = *expected.last().unwrap();
            expected.push(last / 2);
        }
        expected.reverse();
        let path: Vec<usize> = tree
            .path_to_root(NodeId(10))
            .unwrap()
            .into_iter()
            .map(|n| n.0)
            .collect();
        assert_eq!(path, expected);
        assert_eq!(path, vec![1, 2, 5, 10]);
    }

    #[test]
    fn leaf_path_length_equals_stage_count() {
        let tree = ScenarioTree::uniform(5, 3).unwrap();
        for leaf in tree.stage_nodes(5).unwrap() {
            assert_eq!(tree.path_to_root(leaf).unwrap().len(), 5);
        }
    }

    #[test]
    fn path_rejects_invalid_node() {
        let tree = ScenarioTree::uniform(3, 2).unwrap();
        assert_eq!(
            tree.path_to_root(NodeId(99)).unwrap_err(),
            TreeError::InvalidNode(99)
        );
    }

    #[test]
    fn subtree_of_root_is_whole_stage() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        let leaves = tree.subtree_stage_nodes(NodeId(1), 4).unwrap();
        assert_eq!(leaves, tree.stage_nodes(4).unwrap());
        assert_eq!(leaves.len(), 8);
    }

    #[test]
    fn subtree_matches_child_index_oracle() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        // oracle: children of n are 2n and 2n + 1
        let expected: Vec<usize> = vec![2 * 2, 2 * 2 + 1];
        let got: Vec<usize> = tree
            .subtree_stage_nodes(NodeId(2), 3)
            .unwrap()
            .into_iter()
            .map(|n| n.0)
            .collect();
        assert_eq!(got, expected);
        assert_eq!(got, vec![4, 5]);
    }

    #[test]
    fn subtree_at_own_stage_is_singleton() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        let r = tree.subtree_stage_nodes(NodeId(6), 3).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.first(), NodeId(6));
    }

    #[test]
    fn subtree_rejects_bad_stages() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        assert!(matches!(
            tree.subtree_stage_nodes(NodeId(4), 2),
            Err(TreeError::StageBeforeNode { .. })
        ));
        assert!(matches!(
            tree.subtree_stage_nodes(NodeId(4), 5),
            Err(TreeError::InvalidStage { .. })
        ));
    }

    /// Path-intersection oracle built from raw index arithmetic only.
    fn lca_stage_oracle(m: usize, n: usize, b: usize) -> usize {
        let climb = |mut x: usize| {
            let mut path = vec![x];
            while x > 1 {
                x = (x - 2) / b + 1;
                path.push(x);
            }
            path
        };
        let pm = climb(m);
        let pn = climb(n);
        let common = pm.iter().find(|x| pn.contains(x)).unwrap();
        climb(*common).len()
    }

    #[test]
    fn lca_of_siblings_is_previous_stage() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        assert_eq!(tree.lca_stage(NodeId(8), NodeId(9)).unwrap(), 3);
        assert_eq!(lca_stage_oracle(8, 9, 2), 3);
    }

    #[test]
    fn lca_matches_path_intersection_oracle() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        assert_eq!(tree.lca_stage(NodeId(4), NodeId(6)).unwrap(), 1);
        assert_eq!(lca_stage_oracle(4, 6, 2), 1);
        for t in 2..=4 {
            let nodes: Vec<NodeId> = tree.stage_nodes(t).unwrap().into_iter().collect();
            for &m in &nodes {
                for &n in &nodes {
                    if m != n {
                        assert_eq!(
                            tree.lca_stage(m, n).unwrap(),
                            lca_stage_oracle(m.0, n.0, 2)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lca_rejects_mismatched_and_identical_nodes() {
        let tree = ScenarioTree::uniform(4, 2).unwrap();
        assert_eq!(
            tree.lca_stage(NodeId(2), NodeId(4)).unwrap_err(),
            TreeError::StageMismatch(2, 4)
        );
        assert_eq!(
            tree.lca_stage(NodeId(4), NodeId(4)).unwrap_err(),
            TreeError::IdenticalNodes
        );
    }

    #[test]
    fn children_probabilities_sum_to_parent() {
        let tree = ScenarioTree::uniform(5, 3).unwrap();
        for n in tree.nodes() {
            if !tree.is_leaf(n) {
                let sum: f64 = tree.children(n).map(|c| tree.probability(c)).sum();
                assert!((sum - tree.probability(n)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_chain_tree() {
        let tree = ScenarioTree::uniform(5, 1).unwrap();
        assert_eq!(tree.num_nodes(), 5);
        for n in tree.nodes() {
            assert_eq!(tree.stage_of(n), n.0);
            assert_eq!(tree.probability(n), 1.0);
        }
        assert_eq!(tree.parent(NodeId(4)), Some(NodeId(3)));
        let r = tree.subtree_stage_nodes(NodeId(2), 5).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.first(), NodeId(5));
    }

    #[test]
    fn import_validates_probabilities() {
        let err = ScenarioTree::with_probabilities(2, 2, vec![1.0, 0.7, 0.7]).unwrap_err();
        assert!(matches!(err, TreeError::ProbabilitySum { stage: 2, .. }));
        let err = ScenarioTree::with_probabilities(2, 2, vec![1.0, 0.5]).unwrap_err();
        assert!(matches!(err, TreeError::ProbabilityCount { .. }));
        let ok = ScenarioTree::with_probabilities(2, 2, vec![1.0, 0.25, 0.75]).unwrap();
        assert_eq!(ok.probability(NodeId(3)), 0.75);
    }
}
