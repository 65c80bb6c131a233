//! Nucleotide alignments.
//!
//! Each observed base is stored as an indicator set over the states in the
//! canonical order A, C, G, T. Ambiguity codes set several flags and gaps or
//! `N` set all four, which makes them contribute a factor of one in the
//! pruning recursion.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("record '{record}', column {column}: '{found}' is not an IUPAC nucleotide code")]
    Parse {
        record: String,
        column: usize,
        found: char,
    },
    #[error("alignment shape: record '{record}' has {found} sites, expected {expected}")]
    Shape {
        record: String,
        expected: usize,
        found: usize,
    },
    #[error("malformed FASTA: {0}")]
    Format(String),
    #[error("duplicate sequence label '{0}'")]
    DuplicateLabel(String),
    #[error("label '{0}' not found in the alignment")]
    MissingLabel(String),
    #[error("alignment has no sites")]
    Empty,
}

/// Number of nucleotide states.
pub const STATES: usize = 4;

/// Indicator set over {A, C, G, T}; bit `k` is set when state `k` is
/// compatible with the observation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nucleotide(u8);

impl Nucleotide {
    pub const A: Nucleotide = Nucleotide(0b0001);
    pub const C: Nucleotide = Nucleotide(0b0010);
    pub const G: Nucleotide = Nucleotide(0b0100);
    pub const T: Nucleotide = Nucleotide(0b1000);
    pub const ANY: Nucleotide = Nucleotide(0b1111);

    /// Builds from a bitmask; `None` for the empty set or stray high bits.
    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits != 0 && bits <= 0b1111).then_some(Nucleotide(bits))
    }

    /// Single-state observation.
    pub fn from_state(state: usize) -> Self {
        assert!(state < STATES, "state index {state} out of range");
        Nucleotide(1 << state)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, state: usize) -> bool {
        self.0 >> state & 1 == 1
    }

    /// The 0/1 indicator vector in A, C, G, T order.
    pub fn indicator(self) -> [f64; STATES] {
        std::array::from_fn(|k| if self.contains(k) { 1.0 } else { 0.0 })
    }

    pub fn flag_count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_ambiguous(self) -> bool {
        self.flag_count() > 1
    }

    /// Parses an IUPAC nucleotide code, case-insensitively. `U` reads as
    /// `T`; `-`, `.`, `?` and `N` are fully ambiguous.
    pub fn from_iupac(c: char) -> Option<Self> {
        let bits = match c.to_ascii_uppercase() {
            'A' => 0b0001,
            'C' => 0b0010,
            'G' => 0b0100,
            'T' | 'U' => 0b1000,
            'R' => 0b0101,
            'Y' => 0b1010,
            'S' => 0b0110,
            'W' => 0b1001,
            'K' => 0b1100,
            'M' => 0b0011,
            'B' => 0b1110,
            'D' => 0b1101,
            'H' => 0b1011,
            'V' => 0b0111,
            'N' | '-' | '.' | '?' => 0b1111,
            _ => return None,
        };
        Some(Nucleotide(bits))
    }

    /// IUPAC code for this set. Full ambiguity is written as `N`.
    pub fn to_iupac(self) -> char {
        const CODES: [char; 16] = [
            '?', 'A', 'C', 'M', 'G', 'R', 'S', 'V', 'T', 'W', 'Y', 'H', 'K', 'D', 'B', 'N',
        ];
        CODES[self.0 as usize]
    }
}

impl fmt::Debug for Nucleotide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_iupac())
    }
}

/// Pre-aligned sequences: `rows[i][s]` is the observation of sequence `i`
/// at site `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    labels: Vec<String>,
    rows: Vec<Vec<Nucleotide>>,
}

impl Alignment {
    pub fn new(labels: Vec<String>, rows: Vec<Vec<Nucleotide>>) -> Result<Self, SeqError> {
        if labels.len() != rows.len() {
            return Err(SeqError::Format(format!(
                "{} labels for {} sequences",
                labels.len(),
                rows.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(SeqError::DuplicateLabel(label.clone()));
            }
        }
        if let Some(first) = rows.first() {
            let expected = first.len();
            for (label, row) in labels.iter().zip(&rows) {
                if row.len() != expected {
                    return Err(SeqError::Shape {
                        record: label.clone(),
                        expected,
                        found: row.len(),
                    });
                }
            }
        }
        Ok(Alignment { labels, rows })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<Nucleotide>] {
        &self.rows
    }

    pub fn n_sequences(&self) -> usize {
        self.rows.len()
    }

    pub fn n_sites(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, label: &str) -> Option<&[Nucleotide]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.rows[i].as_slice())
    }

    /// Copy whose rows follow `order`. Extra sequences are dropped; a label
    /// in `order` that is missing here is an error naming it.
    pub fn reorder(&self, order: &[String]) -> Result<Alignment, SeqError> {
        let index: HashMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(order.len());
        for label in order {
            let i = index
                .get(label.as_str())
                .ok_or_else(|| SeqError::MissingLabel(label.clone()))?;
            rows.push(self.rows[*i].clone());
        }
        Alignment::new(order.to_vec(), rows)
    }

    /// Alignment restricted to the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Alignment {
        let rows = self
            .rows
            .iter()
            .map(|row| columns.iter().map(|&s| row[s]).collect())
            .collect();
        Alignment {
            labels: self.labels.clone(),
            rows,
        }
    }

    /// Column `s` across all sequences.
    pub fn column(&self, s: usize) -> Vec<Nucleotide> {
        self.rows.iter().map(|row| row[s]).collect()
    }
}

/// Parses FASTA text. Headers are cut at the first whitespace to form the
/// label; sequence lines may be wrapped and may contain spaces.
pub fn parse_fasta(text: &str) -> Result<Alignment, SeqError> {
    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<Nucleotide>> = Vec::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            let label = header.split_whitespace().next().unwrap_or("");
            if label.is_empty() {
                return Err(SeqError::Format("record with an empty header".into()));
            }
            labels.push(label.to_string());
            rows.push(Vec::new());
            continue;
        }
        if line.trim().is_empty() || line.starts_with(';') {
            continue;
        }
        let Some(row) = rows.last_mut() else {
            return Err(SeqError::Format("sequence data before the first header".into()));
        };
        for c in line.chars().filter(|c| !c.is_whitespace()) {
            let nuc = Nucleotide::from_iupac(c).ok_or_else(|| SeqError::Parse {
                record: labels.last().cloned().unwrap_or_default(),
                column: row.len() + 1,
                found: c,
            })?;
            row.push(nuc);
        }
    }
    Alignment::new(labels, rows)
}

/// Writes FASTA with sequences wrapped at `width` characters (0 = no wrap).
pub fn write_fasta(alignment: &Alignment, width: usize) -> String {
    let mut out = String::new();
    for (label, row) in alignment.labels.iter().zip(&alignment.rows) {
        out.push('>');
        out.push_str(label);
        out.push('\n');
        let seq: String = row.iter().map(|n| n.to_iupac()).collect();
        if width == 0 || seq.is_empty() {
            out.push_str(&seq);
            out.push('\n');
        } else {
            for chunk in seq.as_bytes().chunks(width) {
                out.push_str(std::str::from_utf8(chunk).expect("IUPAC codes are ASCII"));
                out.push('\n');
            }
        }
    }
    out
}

/// Distinct alignment columns with multiplicities.
///
/// `columns[p][i]` is the observation of sequence `i` in pattern `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct SitePatterns {
    columns: Vec<Vec<Nucleotide>>,
    weights: Vec<u32>,
    n_sequences: usize,
}

impl SitePatterns {
    /// Every raw column as its own pattern with weight one.
    pub fn uncompressed(alignment: &Alignment) -> Self {
        let columns = (0..alignment.n_sites())
            .map(|s| alignment.column(s))
            .collect::<Vec<_>>();
        let weights = vec![1; columns.len()];
        SitePatterns {
            columns,
            weights,
            n_sequences: alignment.n_sequences(),
        }
    }

    pub fn columns(&self) -> &[Vec<Nucleotide>] {
        &self.columns
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn n_patterns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_sequences(&self) -> usize {
        self.n_sequences
    }

    /// Total number of raw sites represented.
    pub fn n_sites(&self) -> u64 {
        self.weights.iter().map(|&w| u64::from(w)).sum()
    }

    /// Raw columns again, each pattern repeated by its weight.
    pub fn expand(&self, labels: Vec<String>) -> Result<Alignment, SeqError> {
        let mut rows = vec![Vec::new(); self.n_sequences];
        for (column, &w) in self.columns.iter().zip(&self.weights) {
            for _ in 0..w {
                for (row, &nuc) in rows.iter_mut().zip(column) {
                    row.push(nuc);
                }
            }
        }
        Alignment::new(labels, rows)
    }
}

/// Collapses identical columns. Patterns keep the order of their first
/// occurrence.
pub fn compress_patterns(alignment: &Alignment) -> SitePatterns {
    let mut index: HashMap<Vec<Nucleotide>, usize> = HashMap::new();
    let mut columns = Vec::new();
    let mut weights: Vec<u32> = Vec::new();
    for s in 0..alignment.n_sites() {
        let column = alignment.column(s);
        match index.get(&column) {
            Some(&p) => weights[p] += 1,
            None => {
                index.insert(column.clone(), columns.len());
                columns.push(column);
                weights.push(1);
            }
        }
    }
    SitePatterns {
        columns,
        weights,
        n_sequences: alignment.n_sequences(),
    }
}

/// Resamples alignment columns uniformly with replacement, keeping the
/// number of sites. Replicate `r` of a run uses `bootstrap_columns(a, seed, r)`.
pub fn bootstrap_columns(
    alignment: &Alignment,
    seed: u64,
    replicate: u64,
) -> Result<Alignment, SeqError> {
    let n_sites = alignment.n_sites();
    if n_sites == 0 || alignment.n_sequences() == 0 {
        return Err(SeqError::Empty);
    }
    let mut rng = rng::stream(seed, rng::BOOTSTRAP_STREAM + replicate);
    let picks: Vec<usize> = (0..n_sites).map(|_| rng.random_range(0..n_sites)).collect();
    Ok(alignment.select_columns(&picks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn aln(text: &str) -> Alignment {
        parse_fasta(text).unwrap()
    }

    #[test]
    fn single_base_indicator() {
        let a = aln(">x\nA\n");
        assert_eq!(a.rows()[0][0].indicator(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn a_or_t_sets_exactly_a_and_t() {
        // W is the IUPAC code for "A or T".
        let a = aln(">x\nW\n");
        assert_eq!(a.rows()[0][0].indicator(), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(Nucleotide::from_iupac('R').unwrap().indicator(), [1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn gaps_and_n_are_fully_ambiguous() {
        for c in ['-', 'N', 'n', '?'] {
            assert_eq!(Nucleotide::from_iupac(c), Some(Nucleotide::ANY));
        }
    }

    #[test]
    fn parsing_is_deterministic() {
        let text = ">a\nACGT\n>b\nAC-T\n>c\nRYKM\n";
        assert_eq!(aln(text), aln(text));
    }

    #[test]
    fn headers_are_cut_at_whitespace_and_lines_joined() {
        let a = aln(">seq1 some description\nAC\nGT\n>seq2\nACGT\n");
        assert_eq!(a.labels(), &["seq1".to_string(), "seq2".to_string()]);
        assert_eq!(a.n_sites(), 4);
    }

    #[test]
    fn unequal_lengths_are_a_shape_error() {
        let err = parse_fasta(">a\nACGT\n>b\nACG\n").unwrap_err();
        assert!(matches!(err, SeqError::Shape { ref record, expected: 4, found: 3 } if record == "b"));
    }

    #[test]
    fn invalid_character_names_record_and_column() {
        let err = parse_fasta(">a\nACGT\n>b\nACXT\n").unwrap_err();
        match err {
            SeqError::Parse { record, column, found } => {
                assert_eq!(record, "b");
                assert_eq!(column, 3);
                assert_eq!(found, 'X');
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(matches!(
            parse_fasta(">a\nA\n>a\nC\n"),
            Err(SeqError::DuplicateLabel(_))
        ));
    }

    #[test]
    fn identical_columns_collapse() {
        let a = aln(">a\nAAAA\n>b\nCCCC\n");
        let p = compress_patterns(&a);
        assert_eq!(p.n_patterns(), 1);
        assert_eq!(p.weights(), &[4]);
    }

    #[test]
    fn distinct_columns_stay_separate() {
        let a = aln(">a\nACGT\n>b\nCCCC\n");
        let p = compress_patterns(&a);
        assert_eq!(p.n_patterns(), 4);
        assert!(p.weights().iter().all(|&w| w == 1));
    }

    #[test]
    fn bootstrap_of_one_site_is_identity() {
        let a = aln(">a\nA\n>b\nG\n");
        assert_eq!(bootstrap_columns(&a, 3, 0).unwrap(), a);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let a = aln(">a\nACGTACGTTT\n>b\nGGCCAATTGA\n");
        assert_eq!(
            bootstrap_columns(&a, 11, 2).unwrap(),
            bootstrap_columns(&a, 11, 2).unwrap()
        );
        assert_ne!(
            bootstrap_columns(&a, 11, 2).unwrap(),
            bootstrap_columns(&a, 11, 3).unwrap()
        );
    }

    #[test]
    fn bootstrap_of_empty_alignment_fails() {
        let a = Alignment::new(vec!["a".into()], vec![vec![]]).unwrap();
        assert!(matches!(bootstrap_columns(&a, 1, 0), Err(SeqError::Empty)));
    }

    #[test]
    fn bootstrap_column_counts_are_binomial() {
        // Each output column is column 0 with probability 1/1000, so the
        // count of column 0 is Binomial(1000, 1/1000): mean 1, variance 0.999.
        let n_sites = 1000;
        let mut row = vec![Nucleotide::A; n_sites];
        row[0] = Nucleotide::C;
        let a = Alignment::new(vec!["x".into()], vec![row]).unwrap();
        let replicates = 200;
        let counts: Vec<f64> = (0..replicates)
            .map(|r| {
                let b = bootstrap_columns(&a, 42, r).unwrap();
                b.rows()[0].iter().filter(|&&n| n == Nucleotide::C).count() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / replicates as f64;
        let se = (0.999f64 / replicates as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }

    fn nucleotide() -> impl Strategy<Value = Nucleotide> {
        (1u8..16).prop_map(|b| Nucleotide::from_bits(b).unwrap())
    }

    proptest! {
        #[test]
        fn fasta_round_trip(rows in prop::collection::vec(prop::collection::vec(nucleotide(), 7), 1..6), width in 0usize..5) {
            let labels = (0..rows.len()).map(|i| format!("s{i}")).collect();
            let a = Alignment::new(labels, rows).unwrap();
            prop_assert_eq!(parse_fasta(&write_fasta(&a, width)).unwrap(), a);
        }

        #[test]
        fn flags_between_one_and_four(c in prop::sample::select("ACGTURYSWKMBDHVN-.?acgt".chars().collect::<Vec<_>>())) {
            let n = Nucleotide::from_iupac(c).unwrap();
            prop_assert!((1..=4).contains(&n.flag_count()));
        }

        #[test]
        fn patterns_expand_to_a_column_permutation(rows in prop::collection::vec(prop::collection::vec(prop::sample::select(vec![Nucleotide::A, Nucleotide::C, Nucleotide::ANY]), 12), 3)) {
            let labels: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
            let a = Alignment::new(labels.clone(), rows).unwrap();
            let p = compress_patterns(&a);
            prop_assert_eq!(p.n_sites(), a.n_sites() as u64);
            let back = p.expand(labels).unwrap();
            let mut x: Vec<_> = (0..a.n_sites()).map(|s| a.column(s)).collect();
            let mut y: Vec<_> = (0..back.n_sites()).map(|s| back.column(s)).collect();
            x.sort();
            y.sort();
            prop_assert_eq!(x, y);
        }
    }
}
