use std::collections::HashSet;
use std::fmt::Write as _;

use super::{Node, NodeId, Topology, TreeError};

/// Options for reading Newick text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NewickOptions {
    /// Resolve multifurcations into caterpillars of zero-length edges
    /// instead of rejecting them.
    pub resolve_polytomies: bool,
}

/// A tree of arbitrary arity as read from Newick text.
#[derive(Clone, Debug, Default)]
pub(crate) struct RawTree {
    pub(crate) nodes: Vec<RawNode>,
    pub(crate) root: usize,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct RawNode {
    pub(crate) children: Vec<usize>,
    pub(crate) label: Option<String>,
    pub(crate) length: Option<f64>,
    pub(crate) support: Option<f64>,
}

impl RawTree {
    pub(crate) fn from_topology(t: &Topology) -> Self {
        let nodes = t
            .nodes
            .iter()
            .map(|n| RawNode {
                children: n.children.map(|c| c.to_vec()).unwrap_or_default(),
                label: n.label.clone(),
                length: n.length,
                support: n.support,
            })
            .collect();
        RawTree {
            nodes,
            root: t.root,
        }
    }

    /// Binary topology with tips numbered in order of appearance.
    pub(crate) fn into_topology(self, resolve_polytomies: bool) -> Result<Topology, TreeError> {
        // Preorder walk; children pushed in reverse so they pop in order.
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            let children = &self.nodes[v].children;
            match children.len() {
                0 | 2 => {}
                1 => return Err(TreeError::Unary),
                k if !resolve_polytomies => return Err(TreeError::Polytomy(k)),
                _ => {}
            }
            stack.extend(children.iter().rev());
        }

        let n_tips = order.iter().filter(|&&v| self.nodes[v].children.is_empty()).count();
        let mut seen = HashSet::new();
        for &v in &order {
            let node = &self.nodes[v];
            if let Some(l) = node.length {
                if l < 0.0 || l.is_nan() {
                    return Err(TreeError::NegativeLength(l));
                }
            }
            if node.children.is_empty() {
                let label = node.label.as_ref().ok_or(TreeError::UnlabeledTip)?;
                if !seen.insert(label.as_str()) {
                    return Err(TreeError::DuplicateTip(label.clone()));
                }
            }
        }

        let mut id = vec![usize::MAX; self.nodes.len()];
        let mut next_tip = 0;
        let mut next_internal = n_tips;
        for &v in &order {
            if self.nodes[v].children.is_empty() {
                id[v] = next_tip;
                next_tip += 1;
            } else {
                id[v] = next_internal;
                next_internal += 1;
            }
        }

        let blank = Node {
            parent: None,
            children: None,
            label: None,
            length: None,
            support: None,
        };
        let mut nodes = vec![blank.clone(); next_internal];
        for &v in &order {
            let raw = &self.nodes[v];
            let me = id[v];
            nodes[me].label = raw.label.clone();
            nodes[me].length = raw.length;
            nodes[me].support = raw.support;
            if raw.children.is_empty() {
                continue;
            }
            // A multifurcation c1..ck becomes (c1, (c2, (... ck))) with the
            // extra internal nodes on zero-length edges.
            let mut parent = me;
            let k = raw.children.len();
            for (i, &c) in raw.children.iter().enumerate() {
                let child = id[c];
                let right = if i + 2 == k {
                    id[raw.children[k - 1]]
                } else if i + 1 == k {
                    break;
                } else {
                    nodes.push(Node {
                        length: Some(0.0),
                        ..blank.clone()
                    });
                    nodes.len() - 1
                };
                nodes[parent].children = Some([child, right]);
                nodes[child].parent = Some(parent);
                nodes[right].parent = Some(parent);
                parent = right;
            }
        }
        Ok(Topology::from_nodes(nodes, id[self.root], n_tips))
    }
}

pub(crate) fn parse(text: &str) -> Result<RawTree, TreeError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        tree: RawTree::default(),
    };
    let root = p.subtree()?;
    p.skip_blank()?;
    match p.peek() {
        Some(b';') => p.pos += 1,
        _ => return Err(p.error("expected ';'")),
    }
    p.skip_blank()?;
    if p.pos != p.bytes.len() {
        return Err(p.error("trailing characters after ';'"));
    }
    p.tree.root = root;
    normalize_support(&mut p.tree)?;
    Ok(p.tree)
}

/// Supports written as percentages are scaled to [0, 1].
fn normalize_support(tree: &mut RawTree) -> Result<(), TreeError> {
    let mut max: f64 = 0.0;
    for node in &tree.nodes {
        if let Some(s) = node.support {
            if !(0.0..=100.0).contains(&s) {
                return Err(TreeError::InvalidSupport(s));
            }
            max = max.max(s);
        }
    }
    if max > 1.0 {
        for node in &mut tree.nodes {
            if let Some(s) = node.support.as_mut() {
                *s /= 100.0;
            }
        }
    }
    Ok(())
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    tree: RawTree,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> TreeError {
        TreeError::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skips whitespace and bracketed comments.
    fn skip_blank(&mut self) -> Result<(), TreeError> {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'[' {
                let start = self.pos;
                while self.peek().is_some_and(|c| c != b']') {
                    self.pos += 1;
                }
                if self.peek().is_none() {
                    self.pos = start;
                    return Err(self.error("unterminated comment"));
                }
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn subtree(&mut self) -> Result<usize, TreeError> {
        self.skip_blank()?;
        let mut node = RawNode::default();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                node.children.push(self.subtree()?);
                self.skip_blank()?;
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected ',' or ')'")),
                }
            }
        }
        self.skip_blank()?;
        let label = self.label()?;
        if node.children.is_empty() {
            if label.is_none() {
                return Err(self.error("expected a label or '('"));
            }
            node.label = label;
        } else if let Some(text) = label {
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => node.support = Some(v),
                _ => node.label = Some(text),
            }
        }
        self.skip_blank()?;
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip_blank()?;
            let start = self.pos;
            while self
                .peek()
                .is_some_and(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
            {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
            let length: f64 = text.parse().map_err(|_| TreeError::Parse {
                position: start,
                message: format!("invalid branch length '{text}'"),
            })?;
            node.length = Some(length);
        }
        self.tree.nodes.push(node);
        Ok(self.tree.nodes.len() - 1)
    }

    fn label(&mut self) -> Result<Option<String>, TreeError> {
        if self.peek() == Some(b'\'') {
            let start = self.pos;
            self.pos += 1;
            let mut out = Vec::new();
            loop {
                match self.peek() {
                    None => {
                        self.pos = start;
                        return Err(self.error("unterminated quoted label"));
                    }
                    Some(b'\'') if self.bytes.get(self.pos + 1) == Some(&b'\'') => {
                        out.push(b'\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(b) => {
                        out.push(b);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(out)
                .map(Some)
                .map_err(|_| self.error("label is not valid UTF-8"));
        }
        let start = self.pos;
        while self.peek().is_some_and(|b| !is_special(b) && !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Ok(None);
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map(|s| Some(s.to_string()))
            .map_err(|_| self.error("label is not valid UTF-8"))
    }
}

fn is_special(b: u8) -> bool {
    matches!(b, b'(' | b')' | b',' | b':' | b';' | b'[' | b']' | b'\'')
}

fn write_label(out: &mut String, label: &str) {
    let needs_quotes = label.is_empty()
        || label
            .bytes()
            .any(|b| is_special(b) || b.is_ascii_whitespace());
    if needs_quotes {
        out.push('\'');
        out.push_str(&label.replace('\'', "''"));
        out.push('\'');
    } else {
        out.push_str(label);
    }
}

pub(crate) fn write(t: &Topology) -> String {
    let mut out = String::new();
    // (node, next child slot to visit)
    let mut stack: Vec<(NodeId, usize)> = vec![(t.root, 0)];
    while let Some((v, slot)) = stack.pop() {
        match t.nodes[v].children {
            Some(children) if slot < 2 => {
                out.push(if slot == 0 { '(' } else { ',' });
                stack.push((v, slot + 1));
                stack.push((children[slot], 0));
            }
            children => {
                if children.is_some() {
                    out.push(')');
                }
                let node = &t.nodes[v];
                if let Some(s) = node.support {
                    write!(out, "{s}").unwrap();
                } else if let Some(label) = &node.label {
                    write_label(&mut out, label);
                }
                if let Some(l) = node.length {
                    write!(out, ":{l}").unwrap();
                }
            }
        }
    }
    out.push(';');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_lengths_support_and_comments() {
        let t = Topology::parse_newick("((A:0.1,B:0.2)95:0.3, [note] C:0.4);").unwrap();
        let a = t.tip_id("A").unwrap();
        assert_eq!(t.length(a), Some(0.1));
        let ab = t.parent(a).unwrap();
        assert_eq!(t.support(ab), Some(0.95));
        assert_eq!(t.length(ab), Some(0.3));
        assert_eq!(t.support(t.root()), None);
    }

    #[test]
    fn fractional_support_is_kept() {
        let t = Topology::parse_newick("((A,B)0.7,C);").unwrap();
        let ab = t.parent(0).unwrap();
        assert_eq!(t.support(ab), Some(0.7));
    }

    #[test]
    fn quoted_labels_round_trip() {
        let t = Topology::parse_newick("('it''s here':1,(B:1,'x y':2):1);").unwrap();
        assert_eq!(t.tip_labels(), vec!["it's here", "B", "x y"]);
        let again = Topology::parse_newick(&t.to_newick()).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn writes_canonical_text() {
        let s = "((A:0.1,B:0.2)0.95:0.3,C:0.4);";
        assert_eq!(Topology::parse_newick(s).unwrap().to_newick(), s);
    }

    #[test]
    fn rejects_malformed_input() {
        for s in ["((A,B),C)", "((A,B),C;", "((A,B),C);x", "((A,B),:1);", "((A:x,B),C);", "'A;"] {
            assert!(
                matches!(Topology::parse_newick(s), Err(TreeError::Parse { .. })),
                "{s}"
            );
        }
    }

    #[test]
    fn structural_errors() {
        assert_eq!(Topology::parse_newick("(A,B,C);"), Err(TreeError::Polytomy(3)));
        assert_eq!(Topology::parse_newick("((A),B);"), Err(TreeError::Unary));
        assert_eq!(
            Topology::parse_newick("(A,A);"),
            Err(TreeError::DuplicateTip("A".into()))
        );
        assert_eq!(
            Topology::parse_newick("(A:-1,B);"),
            Err(TreeError::NegativeLength(-1.0))
        );
        assert_eq!(
            Topology::parse_newick("((A,B)150,C);"),
            Err(TreeError::InvalidSupport(150.0))
        );
    }

    #[test]
    fn polytomies_can_be_resolved() {
        let options = NewickOptions {
            resolve_polytomies: true,
        };
        let t = Topology::parse_newick_with("(A:1,B:2,C:3,D:4);", options).unwrap();
        t.validate().unwrap();
        assert_eq!(t.n_tips(), 4);
        assert_eq!(t.tip_labels(), vec!["A", "B", "C", "D"]);
        let added: Vec<_> = t
            .internal_nodes()
            .filter(|&v| v != t.root())
            .map(|v| t.length(v))
            .collect();
        assert_eq!(added, vec![Some(0.0), Some(0.0)]);
        let d = t.tip_id("D").unwrap();
        assert_eq!(t.length(d), Some(4.0));
    }
}
