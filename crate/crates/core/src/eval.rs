//! Partition agreement and summaries of recovery across replicates.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;
use thiserror::Error;

use crate::tree::ClusterAssignment;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("partitions cover different numbers of elements ({left} and {right})")]
    Mismatch { left: usize, right: usize },
    #[error("cannot summarize an empty list")]
    Empty,
    #[error("non-finite value {0} in summary input")]
    NonFinite(f64),
    #[error("writing summary table: {0}")]
    Io(String),
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Pair-counting Rand index corrected for chance. Two identical partitions
/// score 1, including the degenerate cases where the correction is 0/0.
pub fn adjusted_rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Mismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    // Scaled by `total` so small tables stay in exact integer arithmetic.
    let expected = sum_a * sum_b;
    let max = 0.5 * (sum_a + sum_b) * total;
    if max == expected {
        // Only reachable when both partitions are all singletons or both a
        // single block.
        return Ok(1.0);
    }
    Ok((index * total - expected) / (max - expected))
}

/// Location and spread of a list of values, in table column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub min: f64,
    pub max: f64,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

/// Percentile `q` in [0, 1] of sorted values by linear interpolation
/// between closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of `values`. The standard deviation is the sample one, taken as
/// 0 for a single value.
pub fn summarize_recovery(values: &[f64]) -> Result<RecoverySummary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(v));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let sd = if values.len() > 1 { values.std_dev() } else { 0.0 };
    Ok(RecoverySummary {
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        p10: percentile(&sorted, 0.1),
        median: percentile(&sorted, 0.5),
        p90: percentile(&sorted, 0.9),
        mean: values.mean(),
        sd,
        se: sd / n.sqrt(),
    })
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "method", "min", "max", "p10", "median", "p90", "mean", "sd", "se",
];

/// Writes one row per method with values rounded to three decimals.
pub fn write_summary_table<W: Write>(
    writer: W,
    rows: &[(String, RecoverySummary)],
) -> Result<(), EvalError> {
    let io = |e: csv::Error| EvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for (name, s) in rows {
        let cells = [s.min, s.max, s.p10, s.median, s.p90, s.mean, s.sd, s.se];
        let mut record = vec![name.clone()];
        record.extend(cells.iter().map(|v| format!("{v:.3}")));
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ca(labels: &[usize]) -> ClusterAssignment {
        ClusterAssignment::from_labels(labels.iter().copied())
    }

    #[test]
    fn crossed_pairs_score_minus_half() {
        let ari = adjusted_rand_index(&ca(&[1, 1, 2, 2]), &ca(&[1, 2, 1, 2])).unwrap();
        assert_eq!(ari, -0.5);
    }

    #[test]
    fn identical_and_degenerate() {
        for p in [ca(&[1, 1, 2, 3]), ca(&[1, 2, 3]), ca(&[1, 1, 1]), ca(&[1])] {
            assert_eq!(adjusted_rand_index(&p, &p).unwrap(), 1.0);
        }
        assert_eq!(adjusted_rand_index(&ca(&[1, 2, 3]), &ca(&[1, 1, 1])).unwrap(), 0.0);
        assert!(matches!(
            adjusted_rand_index(&ca(&[1, 2]), &ca(&[1, 2, 3])),
            Err(EvalError::Mismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn textbook_contingency_value() {
        // Contingency [[2,1,0],[0,2,1],[1,0,2]] on 9 items.
        let a = ca(&[1, 1, 1, 2, 2, 2, 3, 3, 3]);
        let b = ca(&[1, 1, 2, 2, 2, 3, 1, 3, 3]);
        // index 3, row and column sums 9, total 36, expected 2.25.
        let expected = (3.0 - 2.25) / (9.0 - 2.25);
        assert!((adjusted_rand_index(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn random_partitions_average_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..500)
            .map(|_| {
                let a: Vec<usize> = (0..50).map(|_| rng.random_range(0..5)).collect();
                let b: Vec<usize> = (0..50).map(|_| rng.random_range(0..5)).collect();
                adjusted_rand_index(&ca(&a), &ca(&b)).unwrap()
            })
            .collect();
        let s = summarize_recovery(&values).unwrap();
        assert!(s.mean.abs() < 3.0 * s.se, "mean {} se {}", s.mean, s.se);
    }

    #[test]
    fn summaries() {
        let one = summarize_recovery(&[0.4]).unwrap();
        assert_eq!((one.min, one.max, one.median, one.p10, one.p90, one.mean), (0.4, 0.4, 0.4, 0.4, 0.4, 0.4));
        assert_eq!((one.sd, one.se), (0.0, 0.0));
        let two = summarize_recovery(&[1.0, 0.0]).unwrap();
        assert_eq!((two.mean, two.median), (0.5, 0.5));
        assert!((two.p10 - 0.1).abs() < 1e-15);
        assert!((two.sd - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(summarize_recovery(&[]), Err(EvalError::Empty)));
        assert!(summarize_recovery(&[f64::NAN]).is_err());
    }

    #[test]
    fn percentiles_match_numpy_linear() {
        // numpy.percentile([1, 2, 4, 8, 16], [10, 50, 90]) = [1.4, 4, 12.8]
        let v = [1.0, 2.0, 4.0, 8.0, 16.0];
        assert!((percentile(&v, 0.1) - 1.4).abs() < 1e-12);
        assert_eq!(percentile(&v, 0.5), 4.0);
        assert!((percentile(&v, 0.9) - 12.8).abs() < 1e-12);
    }

    #[test]
    fn table_row_formatting() {
        // Values chosen so that min, max and mean print as 0.012, 0.719, 0.361.
        let values = [0.012, 0.352, 0.719];
        let s = summarize_recovery(&values).unwrap();
        let mut buf = Vec::new();
        write_summary_table(&mut buf, &[("GapProcedure".into(), s)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("GapProcedure,0.012,0.719,"), "{row}");
        assert_eq!(row.split(',').nth(6), Some("0.361"));
        assert_eq!(text.lines().next(), Some("method,min,max,p10,median,p90,mean,sd,se"));
    }

    proptest! {
        #[test]
        fn symmetric_and_label_invariant(
            a in proptest::collection::vec(0usize..4, 2..20),
            seed in any::<u64>(),
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..4)).collect();
            let pa = ca(&a);
            let pb = ca(&b);
            let ab = adjusted_rand_index(&pa, &pb).unwrap();
            prop_assert!((ab - adjusted_rand_index(&pb, &pa).unwrap()).abs() < 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12);
            let relabeled: Vec<usize> = a.iter().map(|&x| 7 - x).collect();
            prop_assert!((adjusted_rand_index(&ca(&relabeled), &pb).unwrap() - ab).abs() < 1e-12);
            prop_assert_eq!(adjusted_rand_index(&pa, &pa).unwrap(), 1.0);
        }
    }
}
