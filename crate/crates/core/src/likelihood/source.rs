use crate::substmodel::{BranchRegime, DiscreteGamma, Mat4, MarginalTransitionGrid, RateMatrix};
use crate::tree::{NodeId, Topology};

use super::LikelihoodError;

/// Supplies the per-category transition matrix of each edge.
pub trait TransitionSource {
    fn n_categories(&self) -> usize;

    /// Matrix on the edge above `node`, labeled `regime`, for rate
    /// category `category`.
    fn matrix(&self, node: NodeId, regime: BranchRegime, category: usize) -> Mat4;

    /// Identifies the matrices [`Self::matrix`] returns for this edge across
    /// all categories. Equal keys must mean equal matrices.
    fn edge_key(&self, node: NodeId, regime: BranchRegime) -> u64;
}

/// Monte Carlo marginalized matrices at the chain's current grid indices.
#[derive(Clone, Copy, Debug)]
pub struct GridChoice<'a> {
    pub within: &'a MarginalTransitionGrid,
    pub between: &'a MarginalTransitionGrid,
    pub within_index: usize,
    pub between_index: usize,
}

impl<'a> GridChoice<'a> {
    pub fn new(
        within: &'a MarginalTransitionGrid,
        between: &'a MarginalTransitionGrid,
        within_index: usize,
        between_index: usize,
    ) -> Result<Self, LikelihoodError> {
        if within.regime() != BranchRegime::Within || between.regime() != BranchRegime::Between {
            return Err(LikelihoodError::Dimension("grids passed in the wrong regime slots".into()));
        }
        if within.n_categories() != between.n_categories() {
            return Err(LikelihoodError::Dimension(format!(
                "within grid has {} rate categories, between grid {}",
                within.n_categories(),
                between.n_categories()
            )));
        }
        if within_index >= within.len() || between_index >= between.len() {
            return Err(LikelihoodError::Dimension(format!(
                "grid indices ({within_index}, {between_index}) outside ({}, {})",
                within.len(),
                between.len()
            )));
        }
        Ok(GridChoice {
            within,
            between,
            within_index,
            between_index,
        })
    }
}

impl TransitionSource for GridChoice<'_> {
    fn n_categories(&self) -> usize {
        self.within.n_categories()
    }

    fn matrix(&self, _node: NodeId, regime: BranchRegime, category: usize) -> Mat4 {
        match regime {
            BranchRegime::Within => *self.within.matrix(self.within_index, category),
            BranchRegime::Between => *self.between.matrix(self.between_index, category),
        }
    }

    fn edge_key(&self, _node: NodeId, regime: BranchRegime) -> u64 {
        match regime {
            BranchRegime::Within => self.within_index as u64,
            BranchRegime::Between => (1 << 32) | self.between_index as u64,
        }
    }
}

/// The same matrices on every edge of a regime, one per rate category.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedMatrices {
    pub within: Vec<Mat4>,
    pub between: Vec<Mat4>,
}

impl FixedMatrices {
    /// One set of matrices for both regimes.
    pub fn shared(matrices: Vec<Mat4>) -> Self {
        FixedMatrices {
            within: matrices.clone(),
            between: matrices,
        }
    }
}

impl TransitionSource for FixedMatrices {
    fn n_categories(&self) -> usize {
        self.within.len()
    }

    fn matrix(&self, _node: NodeId, regime: BranchRegime, category: usize) -> Mat4 {
        match regime {
            BranchRegime::Within => self.within[category],
            BranchRegime::Between => self.between[category],
        }
    }

    fn edge_key(&self, _node: NodeId, regime: BranchRegime) -> u64 {
        regime as u64
    }
}

/// `exp(Q xi_m l)` from the branch lengths of one topology.
#[derive(Clone, Debug)]
pub struct BranchLengthMatrices {
    n_categories: usize,
    // Indexed by node, then category.
    matrices: Vec<Vec<Mat4>>,
    lengths: Vec<f64>,
}

impl BranchLengthMatrices {
    pub fn new(
        t: &Topology,
        model: &RateMatrix,
        rates: &DiscreteGamma,
    ) -> Result<Self, LikelihoodError> {
        let mut matrices = Vec::with_capacity(t.n_nodes());
        let mut lengths = Vec::with_capacity(t.n_nodes());
        for v in 0..t.n_nodes() {
            let l = if v == t.root() {
                0.0
            } else {
                t.length(v).ok_or(LikelihoodError::MissingBranchLength(v))?
            };
            lengths.push(l);
            matrices.push(
                rates
                    .scalers()
                    .iter()
                    .map(|&xi| model.exp(xi * l))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        Ok(BranchLengthMatrices {
            n_categories: rates.n_categories(),
            matrices,
            lengths,
        })
    }
}

impl TransitionSource for BranchLengthMatrices {
    fn n_categories(&self) -> usize {
        self.n_categories
    }

    fn matrix(&self, node: NodeId, _regime: BranchRegime, category: usize) -> Mat4 {
        self.matrices[node][category]
    }

    fn edge_key(&self, node: NodeId, _regime: BranchRegime) -> u64 {
        self.lengths[node].to_bits()
    }
}
