use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, Topology, TreeError};

/// Symmetric matrix of pairwise tip distances, indexed by tip id.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        DistanceMatrix { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Sum of edge lengths on the path between every pair of tips.
pub fn patristic_distances(t: &Topology) -> Result<DistanceMatrix, TreeError> {
    let depth = t.root_distances()?;
    let n = t.n_tips();
    let mut values = vec![0.0; n * n];
    // Every pair straddling the two children of `v` has its MRCA at `v`.
    for v in t.internal_nodes() {
        let [l, r] = t.children(v).unwrap();
        for &i in t.clade(l) {
            for &j in t.clade(r) {
                let d = depth[i] + depth[j] - 2.0 * depth[v];
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Distance between two clusters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    /// Closest pair.
    #[default]
    Single,
    /// Farthest pair.
    Complete,
}

/// Smallest inter-cluster distance over the largest cluster diameter.
/// Undefined with fewer than two clusters or when every cluster is a
/// singleton.
pub fn dunn_index(
    c: &ClusterAssignment,
    d: &DistanceMatrix,
    linkage: Linkage,
) -> Result<f64, TreeError> {
    if c.len() != d.len() {
        return Err(TreeError::AssignmentSize {
            expected: d.len(),
            found: c.len(),
        });
    }
    let members = c.members();
    if members.len() < 2 {
        return Err(TreeError::UndefinedDunn("fewer than two clusters"));
    }
    if members.iter().all(|m| m.len() < 2) {
        return Err(TreeError::UndefinedDunn("every cluster is a singleton"));
    }
    let mut diameter: f64 = 0.0;
    for m in &members {
        for (x, &i) in m.iter().enumerate() {
            for &j in &m[x + 1..] {
                diameter = diameter.max(d.get(i, j));
            }
        }
    }
    let mut separation = f64::INFINITY;
    for (k, a) in members.iter().enumerate() {
        for b in &members[k + 1..] {
            let pairs = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j)));
            let between = match linkage {
                Linkage::Single => pairs.map(|(i, j)| d.get(i, j)).fold(f64::INFINITY, f64::min),
                Linkage::Complete => pairs.map(|(i, j)| d.get(i, j)).fold(0.0, f64::max),
            };
            separation = separation.min(between);
        }
    }
    Ok(separation / diameter)
}
