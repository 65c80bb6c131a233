use crate::substmodel::BranchRegime;
use crate::tree::{ClusterAssignment, NodeId, Topology, TreeError};

/// Component an edge belongs to once the tree is split by a clade partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeLabel {
    /// Inside the clade of the given cluster (1-based).
    Within(usize),
    /// On the phylogeny connecting cluster MRCAs, including the stem edge
    /// above every cluster MRCA.
    Between,
}

impl EdgeLabel {
    pub fn regime(self) -> BranchRegime {
        match self {
            EdgeLabel::Within(_) => BranchRegime::Within,
            EdgeLabel::Between => BranchRegime::Between,
        }
    }
}

/// Label of the edge above every node; the root has none.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegimeLabeling {
    labels: Vec<Option<EdgeLabel>>,
}

impl RegimeLabeling {
    /// An edge is within cluster `k` when its upper end lies in the clade
    /// of cluster `k`'s MRCA; every other edge is between clusters.
    pub fn new(t: &Topology, c: &ClusterAssignment) -> Result<Self, TreeError> {
        let mut flags = vec![false; t.n_nodes()];
        for r in t.cluster_roots(c)? {
            flags[r] = true;
        }
        Ok(Self::from_root_flags(t, &flags))
    }

    /// Labeling for the clade partition whose cluster MRCAs are the nodes
    /// flagged in `is_root`. Clusters are numbered by node id order.
    pub fn from_root_flags(t: &Topology, is_root: &[bool]) -> Self {
        let mut inside: Vec<Option<usize>> = vec![None; t.n_nodes()];
        let mut k = 0;
        for (v, &flag) in is_root.iter().enumerate() {
            if flag {
                k += 1;
                inside[v] = Some(k);
            }
        }
        let mut labels = vec![None; t.n_nodes()];
        // Reverse postorder visits parents before children.
        for &v in t.postorder().iter().rev() {
            if let Some(p) = t.parent(v) {
                labels[v] = Some(match inside[p] {
                    Some(k) => {
                        inside[v] = Some(k);
                        EdgeLabel::Within(k)
                    }
                    None => EdgeLabel::Between,
                });
            }
        }
        RegimeLabeling { labels }
    }

    /// Every edge in one regime; used for exact-matrix evaluations.
    pub fn uniform(t: &Topology, label: EdgeLabel) -> Self {
        RegimeLabeling {
            labels: (0..t.n_nodes())
                .map(|v| t.parent(v).map(|_| label))
                .collect(),
        }
    }

    pub fn label(&self, v: NodeId) -> Option<EdgeLabel> {
        self.labels[v]
    }

    pub fn regime(&self, v: NodeId) -> Option<BranchRegime> {
        self.labels[v].map(EdgeLabel::regime)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Nodes whose upper edge is in `regime`.
    pub fn edges_in(&self, regime: BranchRegime) -> Vec<NodeId> {
        (0..self.labels.len())
            .filter(|&v| self.regime(v) == Some(regime))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_all_within() {
        let t = Topology::parse_newick("((A,B),(C,D));").unwrap();
        let l = RegimeLabeling::new(&t, &ClusterAssignment::single(4)).unwrap();
        assert_eq!(l.edges_in(BranchRegime::Between), Vec::<NodeId>::new());
        assert_eq!(l.edges_in(BranchRegime::Within).len(), 6);
        assert_eq!(l.label(t.root()), None);
    }

    #[test]
    fn singletons_are_all_between() {
        let t = Topology::parse_newick("((A,B),(C,D));").unwrap();
        let l = RegimeLabeling::new(&t, &ClusterAssignment::singletons(4)).unwrap();
        assert_eq!(l.edges_in(BranchRegime::Between).len(), 6);
        assert!(l.edges_in(BranchRegime::Within).is_empty());
    }

    #[test]
    fn non_clade_is_an_error() {
        let t = Topology::parse_newick("((A,B),(C,D));").unwrap();
        let c = ClusterAssignment::from_labels([1, 2, 1, 3]);
        assert!(RegimeLabeling::new(&t, &c).is_err());
    }
}
