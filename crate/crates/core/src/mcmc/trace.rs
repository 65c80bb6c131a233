use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ChainError;
use crate::tree::ClusterAssignment;

/// One retained iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// 1-based iteration number.
    pub iteration: u64,
    pub log_posterior: f64,
    pub alpha: f64,
    pub within_index: usize,
    pub between_index: usize,
    pub assignment: ClusterAssignment,
}

/// Retained samples of a chain, with the tip labels the assignments refer
/// to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub tip_labels: Vec<String>,
    pub records: Vec<TraceRecord>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    iteration: u64,
    log_posterior: f64,
    alpha: f64,
    within_index: usize,
    between_index: usize,
    assignment: String,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn assignments(&self) -> impl Iterator<Item = &ClusterAssignment> {
        self.records.iter().map(|r| &r.assignment)
    }

    /// CSV with one row per record; the assignment column holds the
    /// comma-separated cluster indices in tip order, quoted.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ChainError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            let assignment = r
                .assignment
                .labels()
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(",");
            w.serialize(CsvRow {
                iteration: r.iteration,
                log_posterior: r.log_posterior,
                alpha: r.alpha,
                within_index: r.within_index,
                between_index: r.between_index,
                assignment,
            })
            .map_err(|e| ChainError::Trace(e.to_string()))?;
        }
        w.flush().map_err(|e| ChainError::Trace(e.to_string()))?;
        Ok(())
    }

    /// Reads a trace written by [`Self::write_csv`]. Every assignment must
    /// cover `tip_labels`.
    pub fn read_csv<R: Read>(reader: R, tip_labels: Vec<String>) -> Result<Self, ChainError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let row = row.map_err(|e| ChainError::Trace(e.to_string()))?;
            let labels = row
                .assignment
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ChainError::Trace(format!("iteration {}: {e}", row.iteration)))?;
            if labels.len() != tip_labels.len() {
                return Err(ChainError::Trace(format!(
                    "iteration {}: assignment has {} entries, expected {}",
                    row.iteration,
                    labels.len(),
                    tip_labels.len()
                )));
            }
            records.push(TraceRecord {
                iteration: row.iteration,
                log_posterior: row.log_posterior,
                alpha: row.alpha,
                within_index: row.within_index,
                between_index: row.between_index,
                assignment: ClusterAssignment::from_labels(labels),
            });
        }
        Ok(Trace {
            tip_labels,
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let trace = Trace {
            tip_labels: vec!["a".into(), "b".into(), "c".into()],
            records: vec![
                TraceRecord {
                    iteration: 3,
                    log_posterior: -1234.5678901234567,
                    alpha: 99.87654321,
                    within_index: 4,
                    between_index: 19,
                    assignment: ClusterAssignment::from_labels([1, 1, 2]),
                },
                TraceRecord {
                    iteration: 6,
                    log_posterior: f64::NEG_INFINITY,
                    alpha: 0.1,
                    within_index: 0,
                    between_index: 0,
                    assignment: ClusterAssignment::singletons(3),
                },
            ],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,log_posterior,alpha,within_index,between_index,assignment\n"));
        assert!(text.contains("\"1,1,2\""));
        let back = Trace::read_csv(&buf[..], trace.tip_labels.clone()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let text = "iteration,log_posterior,alpha,within_index,between_index,assignment\n1,-1,1,0,0,\"1,2\"\n";
        assert!(Trace::read_csv(text.as_bytes(), vec!["a".into()]).is_err());
    }
}
