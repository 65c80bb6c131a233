//! Rooted binary topologies and clade partitions.
//!
//! Tips keep the node ids `0..n` in the order they appear in the Newick
//! text; internal nodes follow. Every node stores the length and support of
//! the edge above it. Rearrangements only rewire parent/child links, so tip
//! ids and per-node annotations survive NNI moves.

mod distance;
pub(crate) mod newick;
mod nni;
mod partition;
mod reroot;

pub use distance::{dunn_index, patristic_distances, DistanceMatrix, Linkage};
pub use newick::NewickOptions;
pub use partition::{
    clade_partition_search, default_distance_grid, select_starting_partition, StartingPartition,
};
pub use reroot::parse_and_root;

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("Newick parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("node with {0} children: only binary trees are supported")]
    Polytomy(usize),
    #[error("internal node with a single child")]
    Unary,
    #[error("duplicate tip label '{0}'")]
    DuplicateTip(String),
    #[error("tip without a label")]
    UnlabeledTip,
    #[error("tip '{0}' not found in the tree")]
    MissingLabel(String),
    #[error("negative branch length {0}")]
    NegativeLength(f64),
    #[error("support value {0} outside [0, 100]")]
    InvalidSupport(f64),
    #[error("the tree is missing branch lengths")]
    MissingBranchLengths,
    #[error("cluster {0} is not a clade of the topology")]
    NotAClade(usize),
    #[error("assignment covers {found} tips, the topology has {expected}")]
    AssignmentSize { expected: usize, found: usize },
    #[error("Dunn index undefined: {0}")]
    UndefinedDunn(&'static str),
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Node {
    pub(crate) parent: Option<NodeId>,
    pub(crate) children: Option<[NodeId; 2]>,
    pub(crate) label: Option<String>,
    /// Length of the edge above this node.
    pub(crate) length: Option<f64>,
    /// Support of the clade below this node, in [0, 1].
    pub(crate) support: Option<f64>,
}

/// A rooted binary tree with labeled tips.
#[derive(Clone, Debug)]
pub struct Topology {
    nodes: Vec<Node>,
    root: NodeId,
    n_tips: usize,
    // Derived from the links; rebuilt by `refresh`.
    postorder: Vec<NodeId>,
    dfs_tips: Vec<NodeId>,
    clade_range: Vec<(usize, usize)>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.root == other.root
    }
}

impl Topology {
    pub(crate) fn from_nodes(nodes: Vec<Node>, root: NodeId, n_tips: usize) -> Self {
        let mut t = Topology {
            nodes,
            root,
            n_tips,
            postorder: Vec::new(),
            dfs_tips: Vec::new(),
            clade_range: Vec::new(),
        };
        t.refresh();
        t
    }

    /// Recomputes traversal orders and clade ranges after links changed.
    pub(crate) fn refresh(&mut self) {
        let n = self.nodes.len();
        self.postorder.clear();
        self.dfs_tips.clear();
        self.clade_range = vec![(0, 0); n];
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            match self.nodes[v].children {
                Some([l, r]) if !expanded => {
                    self.clade_range[v].0 = self.dfs_tips.len();
                    stack.push((v, true));
                    stack.push((r, false));
                    stack.push((l, false));
                }
                Some(_) => {
                    self.clade_range[v].1 = self.dfs_tips.len();
                    self.postorder.push(v);
                }
                None => {
                    self.clade_range[v] = (self.dfs_tips.len(), self.dfs_tips.len() + 1);
                    self.dfs_tips.push(v);
                    self.postorder.push(v);
                }
            }
        }
    }

    /// Parses a rooted binary Newick tree.
    pub fn parse_newick(text: &str) -> Result<Self, TreeError> {
        Self::parse_newick_with(text, NewickOptions::default())
    }

    pub fn parse_newick_with(text: &str, options: NewickOptions) -> Result<Self, TreeError> {
        newick::parse(text)?.into_topology(options.resolve_polytomies)
    }

    pub fn to_newick(&self) -> String {
        newick::write(self)
    }

    pub fn n_tips(&self) -> usize {
        self.n_tips
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn is_tip(&self, v: NodeId) -> bool {
        self.nodes[v].children.is_none()
    }

    pub fn children(&self, v: NodeId) -> Option<[NodeId; 2]> {
        self.nodes[v].children
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent
    }

    pub fn sibling(&self, v: NodeId) -> Option<NodeId> {
        let [l, r] = self.nodes[self.nodes[v].parent?].children?;
        Some(if l == v { r } else { l })
    }

    pub fn label(&self, v: NodeId) -> Option<&str> {
        self.nodes[v].label.as_deref()
    }

    /// Length of the edge above `v`.
    pub fn length(&self, v: NodeId) -> Option<f64> {
        self.nodes[v].length
    }

    /// Support of the clade below `v`, scaled to [0, 1].
    pub fn support(&self, v: NodeId) -> Option<f64> {
        self.nodes[v].support
    }

    pub fn set_length(&mut self, v: NodeId, length: Option<f64>) {
        self.nodes[v].length = length;
    }

    pub fn set_support(&mut self, v: NodeId, support: Option<f64>) {
        self.nodes[v].support = support;
    }

    /// Children before parents, ending at the root.
    pub fn postorder(&self) -> &[NodeId] {
        &self.postorder
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&v| !self.is_tip(v))
    }

    /// Tip labels indexed by tip id.
    pub fn tip_labels(&self) -> Vec<String> {
        (0..self.n_tips)
            .map(|i| self.nodes[i].label.clone().unwrap_or_default())
            .collect()
    }

    pub fn tip_id(&self, label: &str) -> Option<NodeId> {
        (0..self.n_tips).find(|&i| self.nodes[i].label.as_deref() == Some(label))
    }

    /// Tips below `v` (all tips for the root).
    pub fn clade(&self, v: NodeId) -> &[NodeId] {
        let (lo, hi) = self.clade_range[v];
        &self.dfs_tips[lo..hi]
    }

    pub fn clade_size(&self, v: NodeId) -> usize {
        let (lo, hi) = self.clade_range[v];
        hi - lo
    }

    /// Whether `tip` lies in the clade of `v`.
    pub fn clade_contains(&self, v: NodeId, tip: NodeId) -> bool {
        let (lo, hi) = self.clade_range[v];
        let (pos, _) = self.clade_range[tip];
        lo <= pos && pos < hi
    }

    /// True when every edge except the one above the root has a length.
    pub fn has_lengths(&self) -> bool {
        (0..self.nodes.len()).all(|v| v == self.root || self.nodes[v].length.is_some())
    }

    /// Distance from the root to every node.
    pub fn root_distances(&self) -> Result<Vec<f64>, TreeError> {
        let mut depth = vec![0.0; self.nodes.len()];
        for &v in self.postorder.iter().rev() {
            if let Some(p) = self.nodes[v].parent {
                let l = self.nodes[v].length.ok_or(TreeError::MissingBranchLengths)?;
                depth[v] = depth[p] + l;
            }
        }
        Ok(depth)
    }

    /// Non-trivial clades as sets of tip labels, ignoring the full tip set.
    /// Two topologies over the same tips are equal as rooted trees exactly
    /// when these sets agree.
    pub fn clade_sets(&self) -> BTreeSet<BTreeSet<String>> {
        self.internal_nodes()
            .filter(|&v| v != self.root)
            .map(|v| {
                self.clade(v)
                    .iter()
                    .map(|&t| self.nodes[t].label.clone().unwrap_or_default())
                    .collect()
            })
            .collect()
    }

    /// MRCA of each cluster of a clade partition, in cluster order.
    pub fn cluster_roots(&self, c: &ClusterAssignment) -> Result<Vec<NodeId>, TreeError> {
        if c.len() != self.n_tips {
            return Err(TreeError::AssignmentSize {
                expected: self.n_tips,
                found: c.len(),
            });
        }
        let maximal = self.maximal_pure_nodes(c.labels());
        let mut roots = vec![None; c.n_clusters()];
        for v in maximal {
            let k = c.labels()[self.clade(v)[0]];
            if roots[k - 1].replace(v).is_some() {
                return Err(TreeError::NotAClade(k));
            }
        }
        Ok(roots.into_iter().map(|r| r.expect("every cluster has a member")).collect())
    }

    pub fn is_clade_partition(&self, c: &ClusterAssignment) -> bool {
        self.cluster_roots(c).is_ok()
    }

    /// Assignment whose clusters are the clades below `roots`. The roots
    /// must be pairwise disjoint and cover every tip.
    pub fn assignment_from_roots(&self, roots: &[NodeId]) -> ClusterAssignment {
        let mut labels = vec![0; self.n_tips];
        for (k, &r) in roots.iter().enumerate() {
            for &t in self.clade(r) {
                labels[t] = k + 1;
            }
        }
        debug_assert!(labels.iter().all(|&l| l > 0), "roots do not cover all tips");
        ClusterAssignment::from_labels(labels)
    }

    /// Coarsest clade partition refining `labels`: each cluster is broken
    /// into the maximal clades whose tips all share its label.
    pub fn refine_to_clades(&self, labels: &[usize]) -> ClusterAssignment {
        let roots = self.maximal_pure_nodes(labels);
        self.assignment_from_roots(&roots)
    }

    /// Highest nodes whose clade carries a single label.
    fn maximal_pure_nodes(&self, labels: &[usize]) -> Vec<NodeId> {
        let mut pure: Vec<Option<usize>> = vec![None; self.nodes.len()];
        for &v in &self.postorder {
            pure[v] = match self.nodes[v].children {
                None => Some(labels[v]),
                Some([l, r]) => match (pure[l], pure[r]) {
                    (Some(a), Some(b)) if a == b => Some(a),
                    _ => None,
                },
            };
        }
        let mut out: Vec<NodeId> = self
            .postorder
            .iter()
            .copied()
            .filter(|&v| {
                pure[v].is_some() && self.nodes[v].parent.is_none_or(|p| pure[p].is_none())
            })
            .collect();
        out.sort_by_key(|&v| self.clade_range[v].0);
        out
    }

    /// Exchanges the subtrees below `a` and `b`, which must not be nested.
    /// Each subtree takes the other's slot under its parent.
    pub(crate) fn swap_subtrees(&mut self, a: NodeId, b: NodeId) {
        let pa = self.nodes[a].parent.expect("swap below the root");
        let pb = self.nodes[b].parent.expect("swap below the root");
        let slot = |t: &Topology, p: NodeId, v: NodeId| {
            t.nodes[p].children.unwrap().iter().position(|&c| c == v).unwrap()
        };
        let sa = slot(self, pa, a);
        let sb = slot(self, pb, b);
        self.nodes[pa].children.as_mut().unwrap()[sa] = b;
        self.nodes[pb].children.as_mut().unwrap()[sb] = a;
        self.nodes[a].parent = Some(pb);
        self.nodes[b].parent = Some(pa);
        self.refresh();
    }

    /// Checks the binary-tree invariants; used by tests and debug builds.
    pub fn validate(&self) -> Result<(), TreeError> {
        let mut labels = HashSet::new();
        for i in 0..self.n_tips {
            let label = self.nodes[i].label.as_ref().ok_or(TreeError::UnlabeledTip)?;
            if !labels.insert(label) {
                return Err(TreeError::DuplicateTip(label.clone()));
            }
            if self.nodes[i].children.is_some() {
                return Err(TreeError::InvalidNode(i));
            }
        }
        if self.nodes.len() != 2 * self.n_tips - 1 || self.postorder.len() != self.nodes.len() {
            return Err(TreeError::InvalidNode(self.nodes.len()));
        }
        for (v, node) in self.nodes.iter().enumerate() {
            if let Some(l) = node.length {
                if l < 0.0 {
                    return Err(TreeError::NegativeLength(l));
                }
            }
            if let Some(children) = node.children {
                for c in children {
                    if self.nodes[c].parent != Some(v) {
                        return Err(TreeError::InvalidNode(c));
                    }
                }
            }
        }
        Ok(())
    }

    /// Map from tip label to tip id.
    pub fn tip_index(&self) -> HashMap<String, NodeId> {
        (0..self.n_tips)
            .filter_map(|i| self.nodes[i].label.clone().map(|l| (l, i)))
            .collect()
    }

    /// Copy without the named tip. The tip's parent is suppressed and its
    /// sibling takes its place; edge lengths along the merged path add up.
    pub fn remove_tip(&self, label: &str) -> Result<Topology, TreeError> {
        reroot::remove_tip(self, label)
    }

    /// Re-roots on the edge above `outgroup`, which becomes a child of the
    /// new root.
    pub fn root_with_outgroup(&self, outgroup: &str) -> Result<Topology, TreeError> {
        reroot::root_with_outgroup(self, outgroup)
    }

    /// All rooted NNI neighbours; see [`nni::neighbors`].
    pub fn nni_neighbors(&self) -> Vec<Topology> {
        nni::neighbors(self)
    }

    /// Applies one rooted NNI across the edge above internal node `v`:
    /// child `which` (0 or 1) of `v` trades places with the sibling of `v`.
    pub fn nni(&self, v: NodeId, which: usize) -> Result<Topology, TreeError> {
        nni::apply(self, v, which)
    }
}

/// Cluster index per tip, 1-based and contiguous. Indices are canonical:
/// clusters are numbered in order of their first tip, so two assignments
/// describing the same partition compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
}

impl ClusterAssignment {
    /// Relabels arbitrary cluster ids into canonical form.
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(raw: impl IntoIterator<Item = L>) -> Self {
        let mut map = HashMap::new();
        let labels = raw
            .into_iter()
            .map(|l| {
                let next = map.len() + 1;
                *map.entry(l).or_insert(next)
            })
            .collect();
        ClusterAssignment { labels }
    }

    /// Every tip alone.
    pub fn singletons(n: usize) -> Self {
        ClusterAssignment {
            labels: (1..=n).collect(),
        }
    }

    /// All tips together.
    pub fn single(n: usize) -> Self {
        ClusterAssignment { labels: vec![1; n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `max(c)`.
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Cluster sizes `n_k`, indexed by `k - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    /// Member tips of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l - 1].push(i);
        }
        members
    }

    pub fn together(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Whether every cluster of `self` lies inside a cluster of `coarser`.
    pub fn refines(&self, coarser: &ClusterAssignment) -> bool {
        let mut image: HashMap<usize, usize> = HashMap::new();
        self.labels
            .iter()
            .zip(&coarser.labels)
            .all(|(&a, &b)| *image.entry(a).or_insert(b) == b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(s: &str) -> Topology {
        Topology::parse_newick(s).unwrap()
    }

    #[test]
    fn tips_first_and_clades_contiguous() {
        let t = tree("((A:1,B:1):1,(C:1,(D:1,E:1):1):1);");
        assert_eq!(t.n_tips(), 5);
        assert_eq!(t.n_nodes(), 9);
        assert_eq!(t.tip_labels(), vec!["A", "B", "C", "D", "E"]);
        let root = t.root();
        assert_eq!(t.clade(root).len(), 5);
        let [l, r] = t.children(root).unwrap();
        assert_eq!(t.clade(l), &[0, 1]);
        assert_eq!(t.clade(r), &[2, 3, 4]);
        assert!(t.clade_contains(r, 4));
        assert!(!t.clade_contains(l, 4));
        t.validate().unwrap();
    }

    #[test]
    fn cluster_roots_follow_clades() {
        let t = tree("((A,B),(C,(D,E)));");
        let c = ClusterAssignment::from_labels([1, 1, 2, 3, 3]);
        let roots = t.cluster_roots(&c).unwrap();
        assert_eq!(roots.len(), 3);
        assert_eq!(t.clade(roots[0]), &[0, 1]);
        assert_eq!(t.clade(roots[1]), &[2]);
        assert_eq!(t.clade(roots[2]), &[3, 4]);
        assert_eq!(t.assignment_from_roots(&roots), c);
    }

    #[test]
    fn non_clade_cluster_is_rejected() {
        let t = tree("((A,B),(C,(D,E)));");
        let c = ClusterAssignment::from_labels([1, 2, 1, 3, 3]);
        assert!(matches!(t.cluster_roots(&c), Err(TreeError::NotAClade(1))));
        assert!(!t.is_clade_partition(&c));
    }

    #[test]
    fn refinement_splits_non_clades() {
        let t = tree("((A,B),(C,(D,E)));");
        let refined = t.refine_to_clades(&[1, 2, 1, 1, 1]);
        assert_eq!(refined, ClusterAssignment::from_labels([1, 2, 3, 3, 3]));
        assert!(t.is_clade_partition(&refined));
    }

    #[test]
    fn canonical_labels() {
        let a = ClusterAssignment::from_labels([7, 7, 3, 9]);
        assert_eq!(a.labels(), &[1, 1, 2, 3]);
        assert_eq!(a.sizes(), vec![2, 1, 1]);
        assert_eq!(a.n_clusters(), 3);
        assert!(ClusterAssignment::singletons(4).refines(&a));
        assert!(!a.refines(&ClusterAssignment::singletons(4)));
        assert!(a.refines(&ClusterAssignment::single(4)));
    }

    #[test]
    fn remove_tip_suppresses_parent() {
        let t = tree("((A:1,B:2):3,C:4);");
        let u = t.remove_tip("A").unwrap();
        assert_eq!(u.n_tips(), 2);
        let b = u.tip_id("B").unwrap();
        assert_eq!(u.length(b), Some(5.0));
        u.validate().unwrap();
        assert!(matches!(t.remove_tip("Z"), Err(TreeError::MissingLabel(_))));
    }
}
