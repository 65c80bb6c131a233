//! Point estimates of the cluster assignment from a trace.

use std::collections::BTreeMap;
use std::io::Write;

use petgraph::unionfind::UnionFind;
use thiserror::Error;

use crate::mcmc::Trace;
use crate::tree::ClusterAssignment;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("trace has no retained samples")]
    EmptyTrace,
    #[error("co-clustering threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("assignment of iteration {iteration} covers {found} tips, expected {expected}")]
    Width {
        iteration: u64,
        expected: usize,
        found: usize,
    },
    #[error("writing co-clustering matrix: {0}")]
    Io(String),
}

/// The retained sample with the highest log-posterior. Ties go to the
/// earliest iteration.
pub fn map_estimate(trace: &Trace) -> Result<ClusterAssignment, EstimateError> {
    let mut best = trace.records.first().ok_or(EstimateError::EmptyTrace)?;
    for r in &trace.records[1..] {
        if r.log_posterior > best.log_posterior {
            best = r;
        }
    }
    Ok(best.assignment.clone())
}

/// Fraction of retained samples in which each pair of tips shares a
/// cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct CoclusteringMatrix {
    n: usize,
    samples: u64,
    counts: Vec<u64>,
}

impl CoclusteringMatrix {
    pub fn from_trace(trace: &Trace) -> Result<Self, EstimateError> {
        let first = trace.records.first().ok_or(EstimateError::EmptyTrace)?;
        let n = first.assignment.len();
        let mut counts = vec![0u64; n * n];
        for r in &trace.records {
            let labels = r.assignment.labels();
            if labels.len() != n {
                return Err(EstimateError::Width {
                    iteration: r.iteration,
                    expected: n,
                    found: labels.len(),
                });
            }
            for i in 0..n {
                for j in i..n {
                    if labels[i] == labels[j] {
                        counts[i * n + j] += 1;
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                counts[i * n + j] = counts[j * n + i];
            }
        }
        Ok(CoclusteringMatrix {
            n,
            samples: trace.records.len() as u64,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.n + j] as f64 / self.samples as f64
    }

    /// Whether the pair is linked at `threshold`: its frequency exceeds the
    /// threshold, or the pair is together in every sample.
    pub fn linked(&self, i: usize, j: usize, threshold: f64) -> bool {
        let c = self.counts[i * self.n + j];
        c == self.samples || c as f64 > threshold * self.samples as f64
    }

    /// Square CSV with a header row and a label column.
    pub fn write_csv<W: Write>(&self, writer: W, labels: &[String]) -> Result<(), EstimateError> {
        let io = |e: csv::Error| EstimateError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(labels.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for i in 0..self.n {
            let mut row = vec![labels[i].clone()];
            row.extend((0..self.n).map(|j| self.get(i, j).to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| EstimateError::Io(e.to_string()))?;
        Ok(())
    }
}

/// Clusters are the connected components of the graph linking every pair
/// co-clustered in more than `threshold` of the samples (or in all of
/// them, so that a threshold of 1 keeps the pairs never apart). The result
/// need not be a clade partition.
pub fn linkage_estimate(trace: &Trace, threshold: f64) -> Result<ClusterAssignment, EstimateError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EstimateError::Threshold(threshold));
    }
    let m = CoclusteringMatrix::from_trace(trace)?;
    Ok(linkage_from_matrix(&m, threshold))
}

pub fn linkage_from_matrix(m: &CoclusteringMatrix, threshold: f64) -> ClusterAssignment {
    let n = m.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if m.linked(i, j, threshold) {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.into_labeling();
    debug_assert_eq!(
        ClusterAssignment::from_labels(labels.iter().copied()),
        random_walk_classes(m, threshold),
        "component extraction disagrees with random-walk reachability"
    );
    ClusterAssignment::from_labels(labels)
}

/// Classes of tips that a lazy random walk on the thresholded graph can
/// reach from one another, found by propagating walk support to a fixed
/// point.
fn random_walk_classes(m: &CoclusteringMatrix, threshold: f64) -> ClusterAssignment {
    let n = m.len();
    let mut class = vec![usize::MAX; n];
    for start in 0..n {
        if class[start] != usize::MAX {
            continue;
        }
        let mut support = vec![false; n];
        support[start] = true;
        loop {
            let next: Vec<bool> = (0..n)
                .map(|j| support[j] || (0..n).any(|i| support[i] && m.linked(i, j, threshold)))
                .collect();
            if next == support {
                break;
            }
            support = next;
        }
        for (j, &s) in support.iter().enumerate() {
            if s {
                class[j] = start;
            }
        }
    }
    ClusterAssignment::from_labels(class)
}

/// `{label: cluster}` map for JSON output.
pub fn assignment_by_label(labels: &[String], c: &ClusterAssignment) -> BTreeMap<String, usize> {
    labels
        .iter()
        .cloned()
        .zip(c.labels().iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::TraceRecord;
    use proptest::prelude::*;

    fn trace(samples: &[(f64, &[usize])]) -> Trace {
        let n = samples[0].1.len();
        Trace {
            tip_labels: (0..n).map(|i| format!("t{i}")).collect(),
            records: samples
                .iter()
                .enumerate()
                .map(|(k, &(lp, labels))| TraceRecord {
                    iteration: k as u64 + 1,
                    log_posterior: lp,
                    alpha: 1.0,
                    within_index: 0,
                    between_index: 0,
                    assignment: ClusterAssignment::from_labels(labels.iter().copied()),
                })
                .collect(),
        }
    }

    #[test]
    fn map_takes_highest_then_earliest() {
        let t = trace(&[(-5.0, &[1, 1, 2]), (-3.0, &[1, 2, 3]), (-3.0, &[1, 1, 1])]);
        assert_eq!(map_estimate(&t).unwrap(), ClusterAssignment::from_labels([1, 2, 3]));
        let one = trace(&[(-9.0, &[1, 2, 2])]);
        assert_eq!(map_estimate(&one).unwrap(), ClusterAssignment::from_labels([1, 2, 2]));
        assert!(matches!(map_estimate(&Trace::default()), Err(EstimateError::EmptyTrace)));
    }

    #[test]
    fn half_frequency_falls_below_threshold() {
        let t = trace(&[(0.0, &[1, 1, 2]), (0.0, &[1, 2, 3])]);
        let m = CoclusteringMatrix::from_trace(&t).unwrap();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(linkage_estimate(&t, 0.7).unwrap(), ClusterAssignment::singletons(3));
        assert_eq!(linkage_estimate(&t, 0.4).unwrap(), ClusterAssignment::from_labels([1, 1, 2]));
    }

    #[test]
    fn unanimous_trace_is_reproduced() {
        let t = trace(&[(0.0, &[1, 2, 1, 3]), (0.0, &[2, 1, 2, 3])]);
        for th in [0.01, 0.5, 0.99, 1.0] {
            assert_eq!(linkage_estimate(&t, th).unwrap(), ClusterAssignment::from_labels([1, 2, 1, 3]));
        }
    }

    #[test]
    fn threshold_one_keeps_pairs_never_apart() {
        let t = trace(&[(0.0, &[1, 1, 1, 2]), (0.0, &[1, 1, 2, 2]), (0.0, &[1, 1, 2, 3])]);
        assert_eq!(linkage_estimate(&t, 1.0).unwrap(), ClusterAssignment::from_labels([1, 1, 2, 3]));
    }

    #[test]
    fn invalid_thresholds() {
        let t = trace(&[(0.0, &[1, 1])]);
        for th in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(linkage_estimate(&t, th), Err(EstimateError::Threshold(_))));
        }
    }

    #[test]
    fn matrix_csv_has_labels() {
        let t = trace(&[(0.0, &[1, 1]), (0.0, &[1, 2])]);
        let m = CoclusteringMatrix::from_trace(&t).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, &t.tip_labels).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",t0,t1\nt0,1,0.5\nt1,0.5,1\n");
    }

    proptest! {
        #[test]
        fn higher_thresholds_refine(
            raw in proptest::collection::vec(proptest::collection::vec(0usize..4, 7), 1..12),
            a in 0.01f64..1.0,
            b in 0.01f64..1.0,
        ) {
            let samples: Vec<(f64, &[usize])> = raw.iter().map(|s| (0.0, s.as_slice())).collect();
            let t = trace(&samples);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let coarse = linkage_estimate(&t, lo).unwrap();
            let fine = linkage_estimate(&t, hi).unwrap();
            prop_assert!(fine.refines(&coarse));
            let m = CoclusteringMatrix::from_trace(&t).unwrap();
            for i in 0..7 {
                prop_assert_eq!(m.get(i, i), 1.0);
                for j in 0..7 {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
        }
    }
}
