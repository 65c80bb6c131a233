//! Marginal likelihood of an alignment on a fixed topology by Felsenstein
//! pruning, with per-regime transition matrices and a memo of internal
//! partial likelihoods.

mod cache;
mod regime;
mod source;

pub use cache::{CacheStats, LikelihoodCache, DEFAULT_CAPACITY};
pub use regime::{EdgeLabel, RegimeLabeling};
pub use source::{BranchLengthMatrices, FixedMatrices, GridChoice, TransitionSource};

use std::sync::Arc;

use thiserror::Error;

use cache::{digest128, NodeKey, Partial};
use crate::seqdata::{compress_patterns, Alignment, SeqError, SitePatterns, STATES};
use crate::substmodel::{Mat4, ModelError};
use crate::tree::{ClusterAssignment, NodeId, Topology, TreeError};

#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("edge above node {0} has no branch length")]
    MissingBranchLength(NodeId),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Partials whose largest entry drops below 2^-256 are multiplied by 2^256.
/// Powers of two keep the rescaling exact.
const SCALE_THRESHOLD: f64 = 8.636_168_555_094_445e-78; // 2^-256
const SCALE_FACTOR: f64 = 1.157_920_892_373_162e77; // 2^256
const LN_SCALE_FACTOR: f64 = 256.0 * std::f64::consts::LN_2;

/// Site patterns bound to the tips of a topology, plus the stationary
/// frequencies used at the root.
#[derive(Clone, Debug)]
pub struct LikelihoodEngine {
    n_categories: usize,
    frequencies: [f64; STATES],
    weights: Vec<f64>,
    // tips[tip][pattern]
    tips: Vec<Vec<[f64; STATES]>>,
    fingerprint: u128,
}

impl LikelihoodEngine {
    /// Matches alignment rows to the topology's tips by label and
    /// compresses the columns into weighted patterns.
    pub fn new(
        alignment: &Alignment,
        t: &Topology,
        frequencies: [f64; STATES],
        n_categories: usize,
    ) -> Result<Self, LikelihoodError> {
        if alignment.n_sequences() != t.n_tips() {
            return Err(LikelihoodError::Dimension(format!(
                "alignment has {} sequences, tree has {} tips",
                alignment.n_sequences(),
                t.n_tips()
            )));
        }
        let ordered = alignment.reorder(&t.tip_labels())?;
        Self::from_patterns(&compress_patterns(&ordered), frequencies, n_categories)
    }

    /// Patterns whose rows are already in tip-id order.
    pub fn from_patterns(
        patterns: &SitePatterns,
        frequencies: [f64; STATES],
        n_categories: usize,
    ) -> Result<Self, LikelihoodError> {
        if n_categories == 0 {
            return Err(LikelihoodError::Dimension("no rate categories".into()));
        }
        let n = patterns.n_sequences();
        let mut tips = vec![Vec::with_capacity(patterns.n_patterns()); n];
        for column in patterns.columns() {
            for (i, nt) in column.iter().enumerate() {
                tips[i].push(nt.indicator());
            }
        }
        let weights: Vec<f64> = patterns.weights().iter().map(|&w| w as f64).collect();
        let bits: Vec<Vec<u8>> = patterns
            .columns()
            .iter()
            .map(|c| c.iter().map(|nt| nt.bits()).collect())
            .collect();
        let fingerprint = digest128(&(
            &bits,
            patterns.weights(),
            frequencies.map(f64::to_bits),
            n_categories,
        ));
        Ok(LikelihoodEngine {
            n_categories,
            frequencies,
            weights,
            tips,
            fingerprint,
        })
    }

    pub fn n_patterns(&self) -> usize {
        self.weights.len()
    }

    pub fn n_tips(&self) -> usize {
        self.tips.len()
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    /// `sum_s w_s log zeta_s` with
    /// `zeta_s = (1/n_r) sum_m sum_x L(s, root, m)_x pi_x`.
    ///
    /// Returns negative infinity when some pattern has zero probability
    /// under the model. A cache, when given, is consulted and filled; the
    /// result is bit-identical with or without it.
    pub fn log_likelihood(
        &self,
        t: &Topology,
        labels: &RegimeLabeling,
        source: &dyn TransitionSource,
        mut cache: Option<&mut LikelihoodCache>,
    ) -> Result<f64, LikelihoodError> {
        self.check(t, labels, source)?;
        let n_patterns = self.n_patterns();
        let mut digests = vec![0u128; t.n_nodes()];
        let mut partials: Vec<Option<Arc<Partial>>> = vec![None; t.n_nodes()];
        for &v in t.postorder() {
            let Some([l, r]) = t.children(v) else {
                digests[v] = digest128(&(self.fingerprint, v));
                continue;
            };
            let regime_l = labels.regime(l).expect("child edge");
            let regime_r = labels.regime(r).expect("child edge");
            let key = NodeKey {
                left: digests[l],
                left_edge: source.edge_key(l, regime_l),
                right: digests[r],
                right_edge: source.edge_key(r, regime_r),
            };
            digests[v] = key.digest();
            let cached = cache.as_deref_mut().and_then(|c| c.get(&key));
            let partial = match cached {
                Some(p) => p,
                None => {
                    let mut values = Vec::with_capacity(self.n_categories * n_patterns);
                    let mut scales = Vec::with_capacity(self.n_categories * n_patterns);
                    for m in 0..self.n_categories {
                        let pl = source.matrix(l, regime_l, m);
                        let pr = source.matrix(r, regime_r, m);
                        for s in 0..n_patterns {
                            let (a, sa) = self.child(&partials, l, m, s);
                            let (b, sb) = self.child(&partials, r, m, s);
                            let ua = mat_vec(&pl, &a);
                            let ub = mat_vec(&pr, &b);
                            let mut x: [f64; STATES] = std::array::from_fn(|i| ua[i] * ub[i]);
                            let mut scale = sa + sb;
                            let max = x.iter().copied().fold(0.0, f64::max);
                            if max > 0.0 && max < SCALE_THRESHOLD {
                                for xi in &mut x {
                                    *xi *= SCALE_FACTOR;
                                }
                                scale += 1;
                            }
                            values.push(x);
                            scales.push(scale);
                        }
                    }
                    let p = Arc::new(Partial { values, scales });
                    if let Some(c) = cache.as_deref_mut() {
                        c.insert(key, Arc::clone(&p));
                    }
                    p
                }
            };
            partials[v] = Some(partial);
        }
        Ok(self.root_log_likelihood(&partials, t.root()))
    }

    fn check(
        &self,
        t: &Topology,
        labels: &RegimeLabeling,
        source: &dyn TransitionSource,
    ) -> Result<(), LikelihoodError> {
        if t.n_tips() != self.n_tips() {
            return Err(LikelihoodError::Dimension(format!(
                "topology has {} tips, data has {} sequences",
                t.n_tips(),
                self.n_tips()
            )));
        }
        if labels.len() != t.n_nodes() {
            return Err(LikelihoodError::Dimension(format!(
                "regime labels cover {} nodes, topology has {}",
                labels.len(),
                t.n_nodes()
            )));
        }
        if source.n_categories() != self.n_categories {
            return Err(LikelihoodError::Dimension(format!(
                "transition source has {} rate categories, expected {}",
                source.n_categories(),
                self.n_categories
            )));
        }
        Ok(())
    }

    fn child(
        &self,
        partials: &[Option<Arc<Partial>>],
        v: NodeId,
        m: usize,
        s: usize,
    ) -> ([f64; STATES], u32) {
        match &partials[v] {
            Some(p) => {
                let i = m * self.n_patterns() + s;
                (p.values[i], p.scales[i])
            }
            None => (self.tips[v][s], 0),
        }
    }

    fn root_log_likelihood(&self, partials: &[Option<Arc<Partial>>], root: NodeId) -> f64 {
        let n_r = self.n_categories as f64;
        let mut total = 0.0;
        let mut per_category = vec![(0.0, 0u32); self.n_categories];
        for s in 0..self.n_patterns() {
            for (m, slot) in per_category.iter_mut().enumerate() {
                let (x, scale) = self.child(partials, root, m, s);
                let site: f64 = x.iter().zip(&self.frequencies).map(|(a, p)| a * p).sum();
                *slot = (site, scale);
            }
            // Bring the categories to a common scale before summing.
            let base = per_category.iter().map(|&(_, k)| k).min().unwrap_or(0);
            let mut sum = 0.0;
            for &(site, k) in &per_category {
                let mut v = site;
                for _ in base..k {
                    v /= SCALE_FACTOR;
                }
                sum += v;
            }
            if sum <= 0.0 {
                log::debug!("pattern {s} has zero likelihood");
                return f64::NEG_INFINITY;
            }
            let log_zeta = (sum / n_r).ln() - base as f64 * LN_SCALE_FACTOR;
            total += self.weights[s] * log_zeta;
        }
        total
    }
}

fn mat_vec(p: &Mat4, v: &[f64; STATES]) -> [f64; STATES] {
    std::array::from_fn(|x| p[x][0] * v[0] + p[x][1] * v[1] + p[x][2] * v[2] + p[x][3] * v[3])
}

/// Log-likelihood of `alignment` with edge matrices taken from the grids at
/// the chosen indices according to the regime of each edge under `c`.
pub fn marginal_log_likelihood(
    engine: &LikelihoodEngine,
    t: &Topology,
    c: &ClusterAssignment,
    choice: &GridChoice<'_>,
    cache: Option<&mut LikelihoodCache>,
) -> Result<f64, LikelihoodError> {
    let labels = RegimeLabeling::new(t, c)?;
    engine.log_likelihood(t, &labels, choice, cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::{parse_fasta, Nucleotide};
    use crate::substmodel::{DiscreteGamma, RateMatrix};

    fn model() -> RateMatrix {
        RateMatrix::hiv_reference()
    }

    #[test]
    fn two_tips_match_root_state_sum() {
        let m = model();
        let t = Topology::parse_newick("(x:0.1,y:0.3);").unwrap();
        let a = parse_fasta(">x\nA\n>y\nG\n").unwrap();
        let engine = LikelihoodEngine::new(&a, &t, *m.frequencies(), 1).unwrap();
        let source = BranchLengthMatrices::new(&t, &m, &DiscreteGamma::uniform()).unwrap();
        let labels = RegimeLabeling::new(&t, &ClusterAssignment::singletons(2)).unwrap();
        let got = engine.log_likelihood(&t, &labels, &source, None).unwrap();
        let p1 = m.exp(0.1).unwrap();
        let p2 = m.exp(0.3).unwrap();
        let pi = m.frequencies();
        let expected: f64 = (0..4).map(|x| pi[x] * p1[x][0] * p2[x][2]).sum::<f64>().ln();
        assert!((got - expected).abs() < 1e-14 * expected.abs());
    }

    #[test]
    fn fully_ambiguous_data_has_zero_log_likelihood() {
        let m = model();
        let t = Topology::parse_newick("((a:0.1,b:0.2):0.05,(c:0.3,d:0.1):0.2);").unwrap();
        let a = parse_fasta(">a\nNNN\n>b\n---\n>c\nNN?\n>d\nNNN\n").unwrap();
        let g = DiscreteGamma::new(3, 0.7589).unwrap();
        let engine = LikelihoodEngine::new(&a, &t, *m.frequencies(), 3).unwrap();
        let source = BranchLengthMatrices::new(&t, &m, &g).unwrap();
        let labels = RegimeLabeling::new(&t, &ClusterAssignment::single(4)).unwrap();
        let got = engine.log_likelihood(&t, &labels, &source, None).unwrap();
        assert!(got.abs() < 1e-12, "{got}");
    }

    #[test]
    fn deep_trees_do_not_underflow() {
        // 600 tips, long edges: the raw product underflows without rescaling.
        let m = model();
        let n = 600;
        let mut s = "t0:2".to_string();
        for i in 1..n {
            s = format!("({s},t{i}:2):2");
        }
        let t = Topology::parse_newick(&format!("{s};")).unwrap();
        let labels: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let rows = (0..n)
            .map(|i| vec![Nucleotide::from_state(i % 4); 20])
            .collect();
        let a = Alignment::new(labels, rows).unwrap();
        let engine = LikelihoodEngine::new(&a, &t, *m.frequencies(), 1).unwrap();
        let source = BranchLengthMatrices::new(&t, &m, &DiscreteGamma::uniform()).unwrap();
        let regimes = RegimeLabeling::new(&t, &ClusterAssignment::singletons(n)).unwrap();
        let ll = engine.log_likelihood(&t, &regimes, &source, None).unwrap();
        assert!(ll.is_finite() && ll < -20.0 * 600.0 * 0.5, "{ll}");
    }

    #[test]
    fn impossible_data_is_negative_infinity() {
        let t = Topology::parse_newick("(x:0.1,y:0.1);").unwrap();
        let a = parse_fasta(">x\nA\n>y\nC\n").unwrap();
        let engine = LikelihoodEngine::new(&a, &t, [0.25; 4], 1).unwrap();
        let id = crate::substmodel::identity();
        let source = FixedMatrices::shared(vec![id]);
        let labels = RegimeLabeling::new(&t, &ClusterAssignment::single(2)).unwrap();
        assert_eq!(
            engine.log_likelihood(&t, &labels, &source, None).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn dimension_errors() {
        let t = Topology::parse_newick("(x:0.1,y:0.1);").unwrap();
        let a = parse_fasta(">x\nA\n>y\nC\n").unwrap();
        let engine = LikelihoodEngine::new(&a, &t, [0.25; 4], 2).unwrap();
        let source = FixedMatrices::shared(vec![crate::substmodel::identity()]);
        let labels = RegimeLabeling::new(&t, &ClusterAssignment::single(2)).unwrap();
        assert!(matches!(
            engine.log_likelihood(&t, &labels, &source, None),
            Err(LikelihoodError::Dimension(_))
        ));
        let bigger = Topology::parse_newick("((x,y),z);").unwrap();
        assert!(LikelihoodEngine::new(&a, &bigger, [0.25; 4], 1).is_err());
        let renamed = Topology::parse_newick("(x,w);").unwrap();
        assert!(matches!(
            LikelihoodEngine::new(&a, &renamed, [0.25; 4], 1),
            Err(LikelihoodError::Seq(_))
        ));
    }
}
