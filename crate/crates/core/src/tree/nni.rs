use super::{NodeId, Topology, TreeError};

/// Rooted nearest-neighbour interchanges. For each internal non-root node
/// `v` with sibling `w` and children `a`, `b`, the two neighbours swap `w`
/// with `a` or with `b`. A tree with `n >= 4` tips has `2 (n - 2)`
/// neighbours; smaller trees get none.
pub(crate) fn neighbors(t: &Topology) -> Vec<Topology> {
    let mut out = Vec::new();
    if t.n_tips() < 4 {
        return out;
    }
    for v in t.internal_nodes() {
        if v == t.root() {
            continue;
        }
        for which in 0..2 {
            out.push(apply(t, v, which).expect("internal non-root node"));
        }
    }
    out
}

pub(crate) fn apply(t: &Topology, v: NodeId, which: usize) -> Result<Topology, TreeError> {
    if v >= t.n_nodes() || which > 1 {
        return Err(TreeError::InvalidNode(v));
    }
    let children = t.children(v).ok_or(TreeError::InvalidNode(v))?;
    let w = t.sibling(v).ok_or(TreeError::InvalidNode(v))?;
    let mut u = t.clone();
    u.swap_subtrees(children[which], w);
    Ok(u)
}
