use super::{dunn_index, patristic_distances, ClusterAssignment, Linkage, Topology, TreeError};

/// Distance thresholds 0.03, 0.04, ..., 0.12.
pub fn default_distance_grid() -> Vec<f64> {
    (3..=12).map(|i| i as f64 / 100.0).collect()
}

/// Top-down clade search. Walking from the root, a clade becomes a cluster
/// when its support is at least `support_min` and its largest within-clade
/// patristic distance is at most `distance_max`; otherwise the search
/// descends into its children. Tips reached without acceptance stand alone.
///
/// The root clade counts as fully supported; other clades without a
/// support value count as unsupported.
pub fn clade_partition_search(
    t: &Topology,
    support_min: f64,
    distance_max: f64,
) -> Result<ClusterAssignment, TreeError> {
    let spread = clade_diameters(t)?;
    let mut roots = Vec::new();
    let mut stack = vec![t.root()];
    while let Some(v) = stack.pop() {
        let support = if v == t.root() {
            1.0
        } else {
            t.support(v).unwrap_or(0.0)
        };
        match t.children(v) {
            None => roots.push(v),
            Some(_) if support >= support_min && spread[v] <= distance_max => roots.push(v),
            Some([l, r]) => {
                stack.push(r);
                stack.push(l);
            }
        }
    }
    Ok(t.assignment_from_roots(&roots))
}

/// Largest pairwise patristic distance inside each node's clade.
fn clade_diameters(t: &Topology) -> Result<Vec<f64>, TreeError> {
    let n = t.n_nodes();
    // Height: longest path from the node down to one of its tips.
    let mut height = vec![0.0; n];
    let mut diameter = vec![0.0; n];
    for &v in t.postorder() {
        if let Some([l, r]) = t.children(v) {
            let dl = height[l] + t.length(l).ok_or(TreeError::MissingBranchLengths)?;
            let dr = height[r] + t.length(r).ok_or(TreeError::MissingBranchLengths)?;
            height[v] = f64::max(dl, dr);
            diameter[v] = f64::max(f64::max(diameter[l], diameter[r]), dl + dr);
        }
    }
    Ok(diameter)
}

/// Outcome of [`select_starting_partition`].
#[derive(Clone, Debug, PartialEq)]
pub struct StartingPartition {
    pub assignment: ClusterAssignment,
    pub distance_max: f64,
    /// `None` when no threshold gave a defined Dunn index.
    pub dunn: Option<f64>,
}

/// Runs the clade search for every distance threshold and keeps the
/// partition with the largest Dunn index, preferring the smaller threshold
/// on ties. If the index is undefined everywhere, the partition at the
/// largest threshold is returned.
pub fn select_starting_partition(
    t: &Topology,
    support_min: f64,
    distance_grid: &[f64],
    linkage: Linkage,
) -> Result<StartingPartition, TreeError> {
    let d = patristic_distances(t)?;
    let mut grid = distance_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut best: Option<StartingPartition> = None;
    for &threshold in &grid {
        let assignment = clade_partition_search(t, support_min, threshold)?;
        let Ok(value) = dunn_index(&assignment, &d, linkage) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| value > b.dunn.unwrap()) {
            best = Some(StartingPartition {
                assignment,
                distance_max: threshold,
                dunn: Some(value),
            });
        }
    }
    if let Some(best) = best {
        return Ok(best);
    }
    let threshold = *grid.last().unwrap_or(&f64::INFINITY);
    log::warn!("Dunn index undefined at every distance threshold; using {threshold}");
    Ok(StartingPartition {
        assignment: clade_partition_search(t, support_min, threshold)?,
        distance_max: threshold,
        dunn: None,
    })
}
