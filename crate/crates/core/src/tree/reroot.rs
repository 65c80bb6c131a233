use super::newick::{self, RawNode, RawTree};
use super::{Topology, TreeError};

/// Parses Newick text (rooted or not) and roots it on the edge above
/// `outgroup`. A basal trifurcation, as written for unrooted trees, is
/// accepted here.
pub fn parse_and_root(text: &str, outgroup: &str) -> Result<Topology, TreeError> {
    reroot_raw(newick::parse(text)?, outgroup)?.into_topology(false)
}

pub(crate) fn root_with_outgroup(t: &Topology, outgroup: &str) -> Result<Topology, TreeError> {
    let o = t
        .tip_id(outgroup)
        .ok_or_else(|| TreeError::MissingLabel(outgroup.to_string()))?;
    if t.parent(o) == Some(t.root()) {
        return Ok(t.clone());
    }
    reroot_raw(RawTree::from_topology(t), outgroup)?.into_topology(false)
}

#[derive(Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    length: Option<f64>,
    support: Option<f64>,
}

fn add_lengths(x: Option<f64>, y: Option<f64>) -> Option<f64> {
    match (x, y) {
        (None, None) => None,
        _ => Some(x.unwrap_or(0.0) + y.unwrap_or(0.0)),
    }
}

/// Rebuilds the tree from an undirected view so that a new root node sits
/// on the edge above `outgroup`, splitting that edge's length in half. A
/// degree-2 former root is dissolved and its two edges merged.
fn reroot_raw(tree: RawTree, outgroup: &str) -> Result<RawTree, TreeError> {
    let n = tree.nodes.len();
    let o = (0..n)
        .find(|&v| tree.nodes[v].children.is_empty() && tree.nodes[v].label.as_deref() == Some(outgroup))
        .ok_or_else(|| TreeError::MissingLabel(outgroup.to_string()))?;

    let mut edges = Vec::new();
    for (p, node) in tree.nodes.iter().enumerate() {
        for &c in &node.children {
            edges.push(Edge {
                a: p,
                b: c,
                length: tree.nodes[c].length,
                support: tree.nodes[c].support,
            });
        }
    }
    let old_root = tree.root;
    if tree.nodes[old_root].children.len() == 2 {
        let (i, j) = {
            let mut at_root = edges.iter().enumerate().filter(|(_, e)| e.a == old_root).map(|(i, _)| i);
            (at_root.next().unwrap(), at_root.next().unwrap())
        };
        let (e1, e2) = (edges[i], edges[j]);
        // Both edges carry the same bipartition once the root is gone.
        edges[i] = Edge {
            a: e1.b,
            b: e2.b,
            length: add_lengths(e1.length, e2.length),
            support: e1.support.or(e2.support),
        };
        edges.remove(j);
    }

    let new_root = n;
    let split = edges.iter().position(|e| e.a == o || e.b == o).ok_or(TreeError::Unary)?;
    let above = edges[split];
    let other = if above.a == o { above.b } else { above.a };
    let half = above.length.map(|l| l / 2.0);
    edges[split] = Edge {
        a: new_root,
        b: o,
        length: half,
        support: None,
    };
    edges.push(Edge {
        a: new_root,
        b: other,
        length: half,
        support: above.support,
    });

    let mut adjacency = vec![Vec::new(); n + 1];
    for (k, e) in edges.iter().enumerate() {
        adjacency[e.a].push(k);
        adjacency[e.b].push(k);
    }
    let mut nodes: Vec<RawNode> = tree
        .nodes
        .iter()
        .map(|node| RawNode {
            children: Vec::new(),
            label: node.label.clone(),
            length: None,
            support: if node.children.is_empty() { None } else { node.support },
        })
        .collect();
    nodes.push(RawNode::default());
    // Orient away from the new root; outgroup first among its children.
    let mut visited = vec![false; n + 1];
    visited[new_root] = true;
    let mut stack = vec![new_root];
    while let Some(v) = stack.pop() {
        let mut incident = adjacency[v].clone();
        if v == new_root {
            incident.sort_by_key(|&k| edges[k].b != o);
        }
        for k in incident {
            let e = edges[k];
            let w = if e.a == v { e.b } else { e.a };
            if visited[w] {
                continue;
            }
            visited[w] = true;
            nodes[v].children.push(w);
            nodes[w].length = e.length;
            nodes[w].support = if tree.nodes[w].children.is_empty() {
                None
            } else {
                e.support
            };
            stack.push(w);
        }
    }
    if tree.nodes[old_root].children.len() == 2 {
        nodes[old_root] = RawNode::default();
    }
    Ok(RawTree {
        nodes,
        root: new_root,
    })
}

pub(crate) fn remove_tip(t: &Topology, label: &str) -> Result<Topology, TreeError> {
    let x = t
        .tip_id(label)
        .ok_or_else(|| TreeError::MissingLabel(label.to_string()))?;
    let mut raw = RawTree::from_topology(t);
    let p = t.parent(x).ok_or(TreeError::Unary)?;
    let s = t.sibling(x).expect("binary tree");
    match t.parent(p) {
        None => {
            raw.root = s;
            raw.nodes[s].length = None;
        }
        Some(g) => {
            let slot = raw.nodes[g].children.iter().position(|&c| c == p).unwrap();
            raw.nodes[g].children[slot] = s;
            raw.nodes[s].length = add_lengths(raw.nodes[s].length, raw.nodes[p].length);
        }
    }
    raw.nodes[p].children.clear();
    raw.into_topology(false)
}
