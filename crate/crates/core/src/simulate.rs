//! Synthetic datasets with a known cluster structure.
//!
//! Clusters and their sizes come from a Poisson count truncated to [1, n], a
//! symmetric Dirichlet and a multinomial draw. Each cluster gets a random
//! within-cluster tree with exponential branch lengths; the cluster roots
//! are then joined by a random between-cluster tree with log-normal
//! branch lengths (the stem above each cluster root belongs to the latter).
//! Sequences evolve down the tree from a root sequence under a GTR model
//! with discrete gamma rate categories.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Normal};
use statrs::function::gamma::ln_gamma;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, StreamRng};
use crate::seqdata::{Alignment, Nucleotide, STATES};
use crate::substmodel::{DiscreteGamma, GammaScaling, Mat4, ModelError, RateMatrix};
use crate::tree::newick::{RawNode, RawTree};
use crate::tree::{ClusterAssignment, Topology, TreeError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameter {name}: {detail}")]
    Param { name: &'static str, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("root sequence is empty")]
    EmptyRoot,
}

/// Protocol parameters. Defaults are the 200-tip setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub n_sequences: usize,
    /// Poisson mean of the number of clusters.
    pub cluster_rate: f64,
    pub concentration_mean: f64,
    pub concentration_sd: f64,
    /// Mean of the exponential within-cluster branch lengths.
    pub within_mean: f64,
    /// Mean and standard deviation of the log-normal between-cluster
    /// branch lengths.
    pub between_mean: f64,
    pub between_sd: f64,
    pub rate_categories: usize,
    pub gamma_shape: f64,
    pub gamma_scaling: GammaScaling,
    /// Length of the stationary root sequence drawn when none is supplied.
    pub sequence_length: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            n_sequences: 200,
            cluster_rate: 50.0,
            concentration_mean: 10.0,
            concentration_sd: 2.0,
            within_mean: 0.003,
            between_mean: 0.008,
            between_sd: 0.008,
            rate_categories: 5,
            gamma_shape: 0.7589,
            gamma_scaling: GammaScaling::MeanOne,
            sequence_length: 918,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<(), SimError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SimError::Param {
            name,
            detail: format!("must be positive and finite, got {v}"),
        })
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_sequences == 0 {
            return Err(SimError::Param {
                name: "n_sequences",
                detail: "at least one sequence is required".into(),
            });
        }
        positive("cluster_rate", self.cluster_rate)?;
        positive("concentration_mean", self.concentration_mean)?;
        if !(self.concentration_sd.is_finite() && self.concentration_sd >= 0.0) {
            return Err(SimError::Param {
                name: "concentration_sd",
                detail: format!("must be non-negative, got {}", self.concentration_sd),
            });
        }
        positive("within_mean", self.within_mean)?;
        positive("between_mean", self.between_mean)?;
        positive("between_sd", self.between_sd)?;
        positive("gamma_shape", self.gamma_shape)?;
        if self.rate_categories == 0 {
            return Err(SimError::Param {
                name: "rate_categories",
                detail: "at least one category is required".into(),
            });
        }
        Ok(())
    }

    pub fn rates(&self) -> Result<DiscreteGamma, SimError> {
        Ok(DiscreteGamma::with_scaling(
            self.rate_categories,
            self.gamma_shape,
            self.gamma_scaling,
        )?)
    }
}

/// A generated dataset. Alignment rows follow the topology's tip order.
#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub alignment: Alignment,
    pub topology: Topology,
    pub truth: ClusterAssignment,
    pub record: SimulationRecord,
}

/// Drawn quantities, for the truth JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub seed: u64,
    pub replicate: u64,
    /// Cluster count drawn from the Poisson, after truncation to [1, n].
    pub drawn_clusters: usize,
    /// Non-empty clusters.
    pub clusters: usize,
    pub concentration: f64,
    pub sizes: Vec<usize>,
    pub assignment: BTreeMap<String, usize>,
}

/// Builds rooted binary trees over existing nodes.
#[derive(Default)]
struct Builder {
    nodes: Vec<RawNode>,
    parent: Vec<Option<usize>>,
}

impl Builder {
    fn tip(&mut self, label: String) -> usize {
        self.nodes.push(RawNode {
            label: Some(label),
            ..RawNode::default()
        });
        self.parent.push(None);
        self.nodes.len() - 1
    }

    /// Joins `items` (roots of existing subtrees) into one random rooted
    /// binary tree by sequential addition, each new item attached above a
    /// uniformly chosen node of the tree built so far (the root included).
    /// Returns the new root.
    fn join(&mut self, items: &[usize], rng: &mut StreamRng) -> usize {
        let mut root = items[0];
        let mut members = vec![root];
        for &x in &items[1..] {
            let v = members[rng.random_range(0..members.len())];
            let u = self.nodes.len();
            let pair = if rng.random::<bool>() { vec![v, x] } else { vec![x, v] };
            self.nodes.push(RawNode {
                children: pair,
                ..RawNode::default()
            });
            self.parent.push(self.parent[v]);
            match self.parent[v] {
                Some(p) => {
                    let slot = self.nodes[p].children.iter().position(|&c| c == v).unwrap();
                    self.nodes[p].children[slot] = u;
                }
                None => root = u,
            }
            self.parent[v] = Some(u);
            self.parent[x] = Some(u);
            members.push(u);
            members.push(x);
        }
        root
    }

    fn finish(self, root: usize) -> Result<Topology, TreeError> {
        RawTree {
            nodes: self.nodes,
            root,
        }
        .into_topology(false)
    }
}

fn tip_label(i: usize, n: usize) -> String {
    let width = n.to_string().len();
    format!("t{:0width$}", i + 1)
}

/// Uniform random rooted binary topology on `n` tips labeled `t1..tn`,
/// without branch lengths.
pub fn random_topology(n: usize, rng: &mut StreamRng) -> Result<Topology, SimError> {
    if n == 0 {
        return Err(SimError::Param {
            name: "n_sequences",
            detail: "at least one tip is required".into(),
        });
    }
    let mut b = Builder::default();
    let tips: Vec<usize> = (0..n).map(|i| b.tip(tip_label(i, n))).collect();
    let root = b.join(&tips, rng);
    Ok(b.finish(root)?)
}

fn draw_state(rng: &mut StreamRng, weights: &[f64; STATES]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (s, &w) in weights.iter().enumerate() {
        if u < w {
            return s;
        }
        u -= w;
    }
    // Rounding left `u` past the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(STATES - 1)
}

/// Draws one dataset. Without `root`, the root sequence is drawn from the
/// model's stationary distribution. Ambiguous root characters are resolved
/// by a stationary draw restricted to the states they allow.
pub fn generate_dataset(
    params: &SimParams,
    model: &RateMatrix,
    root: Option<&[Nucleotide]>,
    seed: u64,
    replicate: u64,
) -> Result<SimulatedDataset, SimError> {
    params.validate()?;
    let rates = params.rates()?;
    let mut rng = rng::stream(seed, rng::SIMULATION_STREAM + replicate);
    let n = params.n_sequences;

    // Poisson truncated to [1, n], drawn exactly from the renormalized
    // masses; rejection sampling stalls when n is far below the mean.
    let log_mass: Vec<f64> = (1..=n)
        .map(|k| k as f64 * params.cluster_rate.ln() - ln_gamma(k as f64 + 1.0))
        .collect();
    let top = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let count = WeightedIndex::new(log_mass.iter().map(|&l| (l - top).exp()))
        .expect("finite positive masses");
    let drawn = count.sample(&mut rng) + 1;
    let normal = Normal::new(params.concentration_mean, params.concentration_sd).map_err(|e| {
        SimError::Param {
            name: "concentration_sd",
            detail: e.to_string(),
        }
    })?;
    let concentration = loop {
        let a = normal.sample(&mut rng);
        if a > 0.0 {
            break a;
        }
    };
    let gamma = Gamma::new(concentration, 1.0).expect("positive shape");
    let mut probabilities: Vec<f64> = (0..drawn).map(|_| gamma.sample(&mut rng)).collect();
    if probabilities.iter().sum::<f64>() <= 0.0 {
        probabilities.fill(1.0);
    }
    let pick = WeightedIndex::new(&probabilities).expect("positive weights");
    let mut counts = vec![0usize; drawn];
    for _ in 0..n {
        counts[pick.sample(&mut rng)] += 1;
    }
    let sizes: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();

    let within = Exp::new(1.0 / params.within_mean).expect("positive rate");
    let between = LogNormal::from_mean_cv(params.between_mean, params.between_sd / params.between_mean)
        .map_err(|e| SimError::Param {
            name: "between_sd",
            detail: e.to_string(),
        })?;

    let mut b = Builder::default();
    let mut next_tip = 0;
    let mut cluster_of_label = BTreeMap::new();
    let mut cluster_roots = Vec::with_capacity(sizes.len());
    for (k, &size) in sizes.iter().enumerate() {
        let tips: Vec<usize> = (0..size)
            .map(|_| {
                let label = tip_label(next_tip, n);
                next_tip += 1;
                cluster_of_label.insert(label.clone(), k + 1);
                b.tip(label)
            })
            .collect();
        let first_new = b.nodes.len();
        let r = b.join(&tips, &mut rng);
        for v in tips.iter().copied().chain(first_new..b.nodes.len()) {
            if v != r {
                b.nodes[v].length = Some(within.sample(&mut rng));
            }
        }
        cluster_roots.push(r);
    }
    let first_new = b.nodes.len();
    let root_node = b.join(&cluster_roots, &mut rng);
    for v in cluster_roots.iter().copied().chain(first_new..b.nodes.len()) {
        if v != root_node {
            b.nodes[v].length = Some(between.sample(&mut rng));
        }
    }
    let topology = b.finish(root_node)?;

    let labels = topology.tip_labels();
    let truth = ClusterAssignment::from_labels(labels.iter().map(|l| cluster_of_label[l]));
    let pi = *model.frequencies();
    let root_states: Vec<usize> = match root {
        Some([]) => return Err(SimError::EmptyRoot),
        Some(seq) => seq
            .iter()
            .map(|nuc| {
                let mut w = pi;
                for (s, x) in w.iter_mut().enumerate() {
                    if !nuc.contains(s) {
                        *x = 0.0;
                    }
                }
                if w.iter().all(|&x| x == 0.0) {
                    w = pi;
                }
                draw_state(&mut rng, &w)
            })
            .collect(),
        None => {
            if params.sequence_length == 0 {
                return Err(SimError::EmptyRoot);
            }
            (0..params.sequence_length).map(|_| draw_state(&mut rng, &pi)).collect()
        }
    };
    let rows = evolve(&topology, model, &rates, &root_states, &mut rng)?;
    let alignment = Alignment::new(labels.clone(), rows).expect("rows match tips");

    let record = SimulationRecord {
        seed,
        replicate,
        drawn_clusters: drawn,
        clusters: sizes.len(),
        concentration,
        sizes: truth.sizes(),
        assignment: labels
            .iter()
            .cloned()
            .zip(truth.labels().iter().copied())
            .collect(),
    };
    Ok(SimulatedDataset {
        alignment,
        topology,
        truth,
        record,
    })
}

/// Evolves every site independently down `t` from the root states, with a
/// uniformly drawn rate category per site. Returns one row per tip.
pub fn evolve(
    t: &Topology,
    model: &RateMatrix,
    rates: &DiscreteGamma,
    root_states: &[usize],
    rng: &mut StreamRng,
) -> Result<Vec<Vec<Nucleotide>>, SimError> {
    let n_cat = rates.n_categories();
    let mut matrices: Vec<Vec<Mat4>> = vec![Vec::new(); t.n_nodes()];
    for v in 0..t.n_nodes() {
        if t.parent(v).is_some() {
            let l = t.length(v).unwrap_or(0.0);
            matrices[v] = rates
                .scalers()
                .iter()
                .map(|&xi| model.exp(xi * l))
                .collect::<Result<_, _>>()?;
        }
    }
    let preorder: Vec<_> = t.postorder().iter().rev().copied().collect();
    let mut rows = vec![Vec::with_capacity(root_states.len()); t.n_tips()];
    let mut state = vec![0usize; t.n_nodes()];
    for &r in root_states {
        let m = rng.random_range(0..n_cat);
        for &v in &preorder {
            state[v] = match t.parent(v) {
                None => r,
                Some(p) => draw_state(rng, &matrices[v][m][state[p]]),
            };
            if t.is_tip(v) {
                rows[v].push(Nucleotide::from_state(state[v]));
            }
        }
    }
    Ok(rows)
}
