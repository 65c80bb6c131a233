use serde::{Deserialize, Serialize};

use crate::tree::{ClusterAssignment, NodeId, Topology, TreeError};

/// A split-merge proposal, named by cluster MRCAs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    /// The cluster whose MRCA is this internal node becomes the two
    /// clusters below its children.
    Split(NodeId),
    /// The two clusters whose MRCAs are the children of this node merge.
    Merge(NodeId),
}

/// Cluster MRCAs as flags over the nodes of a topology.
pub(crate) fn root_flags(t: &Topology, c: &ClusterAssignment) -> Result<Vec<bool>, TreeError> {
    let mut flags = vec![false; t.n_nodes()];
    for r in t.cluster_roots(c)? {
        flags[r] = true;
    }
    Ok(flags)
}

/// Every split and merge available from the partition `is_root` encodes,
/// splits first, each group in node-id order.
pub(crate) fn available(t: &Topology, is_root: &[bool]) -> Vec<Move> {
    let mut moves = Vec::new();
    for (v, &flag) in is_root.iter().enumerate() {
        if flag && !t.is_tip(v) {
            moves.push(Move::Split(v));
        }
    }
    for v in t.internal_nodes() {
        let [l, r] = t.children(v).unwrap();
        if is_root[l] && is_root[r] {
            moves.push(Move::Merge(v));
        }
    }
    moves
}

pub(crate) fn count(t: &Topology, is_root: &[bool]) -> usize {
    let splits = is_root
        .iter()
        .enumerate()
        .filter(|&(v, &flag)| flag && !t.is_tip(v))
        .count();
    let merges = t
        .internal_nodes()
        .filter(|&v| {
            let [l, r] = t.children(v).unwrap();
            is_root[l] && is_root[r]
        })
        .count();
    splits + merges
}

pub(crate) fn apply(t: &Topology, is_root: &mut [bool], m: Move) {
    match m {
        Move::Split(v) => {
            let [l, r] = t.children(v).expect("split at an internal node");
            is_root[v] = false;
            is_root[l] = true;
            is_root[r] = true;
        }
        Move::Merge(v) => {
            let [l, r] = t.children(v).expect("merge below an internal node");
            is_root[l] = false;
            is_root[r] = false;
            is_root[v] = true;
        }
    }
}

pub(crate) fn assignment(t: &Topology, is_root: &[bool]) -> ClusterAssignment {
    let roots: Vec<NodeId> = (0..is_root.len()).filter(|&v| is_root[v]).collect();
    t.assignment_from_roots(&roots)
}

/// Cluster sizes in node-id order of their MRCAs.
pub(crate) fn sizes(t: &Topology, is_root: &[bool]) -> Vec<usize> {
    (0..is_root.len())
        .filter(|&v| is_root[v])
        .map(|v| t.clade_size(v))
        .collect()
}

/// All split-merge moves from `c` together with the partition each one
/// leads to.
pub fn enumerate_moves(
    t: &Topology,
    c: &ClusterAssignment,
) -> Result<Vec<(Move, ClusterAssignment)>, TreeError> {
    let flags = root_flags(t, c)?;
    Ok(available(t, &flags)
        .into_iter()
        .map(|m| {
            let mut next = flags.clone();
            apply(t, &mut next, m);
            (m, assignment(t, &next))
        })
        .collect())
}

/// The move undoing `m`.
pub fn reverse(m: Move, t: &Topology) -> Move {
    match m {
        Move::Split(v) => Move::Merge(v),
        Move::Merge(v) => {
            debug_assert!(!t.is_tip(v));
            Move::Split(v)
        }
    }
}
