//! Metropolis-Hastings sampling of cluster assignments on a fixed topology,
//! together with the Dirichlet concentration and the branch-length grid
//! indices, plus a greedy NNI pre-search of the topology.

mod chain;
mod moves;
mod search;
mod trace;

pub use chain::{run_chain, ChainOutput, Sampler};
pub use moves::{enumerate_moves, reverse, Move};
pub use search::{preliminary_topology_search, SearchOutcome};
pub use trace::{Trace, TraceRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::likelihood::{CacheStats, LikelihoodEngine, LikelihoodError, DEFAULT_CAPACITY};
use crate::priors::ClusterPriorParams;
use crate::substmodel::MarginalTransitionGrid;
use crate::tree::{ClusterAssignment, Topology, TreeError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error("invalid starting state: {0}")]
    Start(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("log-posterior drift at iteration {iteration}: tracked {tracked}, recomputed {recomputed}")]
    Drift {
        iteration: u64,
        tracked: f64,
        recomputed: f64,
    },
    #[error("trace: {0}")]
    Trace(String),
}

/// Run-length and kernel settings of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    /// Half-width of the uniform proposal window for the concentration.
    pub alpha_radius: f64,
    /// Wipe the likelihood cache every this many iterations.
    pub wipe_every: Option<u64>,
    /// Bound on cached partial-likelihood vectors before a wipe.
    pub cache_capacity: usize,
    /// Compare the tracked log-posterior with a cache-free recomputation
    /// every this many iterations (0 disables).
    pub check_every: u64,
    /// Progress log interval in iterations (0 disables).
    pub log_every: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 55_000,
            burn_in: 5_000,
            thinning: 50,
            seed: 1,
            alpha_radius: 0.5,
            wipe_every: None,
            cache_capacity: DEFAULT_CAPACITY,
            check_every: 1_000,
            log_every: 5_000,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.burn_in >= self.iterations {
            return Err(ChainError::Config(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(ChainError::Config("thinning must be at least 1".into()));
        }
        if !(self.alpha_radius.is_finite() && self.alpha_radius > 0.0) {
            return Err(ChainError::Config(format!(
                "alpha radius must be positive, got {}",
                self.alpha_radius
            )));
        }
        if self.wipe_every == Some(0) {
            return Err(ChainError::Config("wipe interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of records a run keeps: `ceil((iterations - burn_in) / thinning)`.
    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in).div_ceil(self.thinning)
    }

    /// Whether 1-based iteration `i` is kept.
    pub fn keeps(&self, i: u64) -> bool {
        i > self.burn_in && (i - self.burn_in - 1).is_multiple_of(self.thinning)
    }
}

/// Fixed ingredients of a chain.
#[derive(Clone, Copy, Debug)]
pub struct ChainInputs<'a> {
    pub topology: &'a Topology,
    pub engine: &'a LikelihoodEngine,
    pub within: &'a MarginalTransitionGrid,
    pub between: &'a MarginalTransitionGrid,
    /// `lambda`, `eta` and `beta`; the `alpha` field is ignored.
    pub prior: ClusterPriorParams,
}

/// Where a chain begins.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainStart {
    pub assignment: ClusterAssignment,
    pub alpha: f64,
    pub within_index: usize,
    pub between_index: usize,
}

/// Current values of the sampled quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub assignment: ClusterAssignment,
    pub alpha: f64,
    pub within_index: usize,
    pub between_index: usize,
    pub log_likelihood: f64,
    /// Unnormalized log-posterior; grid priors are uniform and omitted.
    pub log_posterior: f64,
}

/// Proposal and acceptance counts of one kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl KernelStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub(crate) fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub cluster: KernelStats,
    pub alpha: KernelStats,
    pub within_grid: KernelStats,
    pub between_grid: KernelStats,
}

/// Summary of a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub iterations: u64,
    pub retained: usize,
    pub acceptance: AcceptanceStats,
    pub cache: CacheStats,
    pub final_log_posterior: f64,
    pub final_alpha: f64,
    pub final_clusters: usize,
    pub elapsed_seconds: f64,
    pub config: ChainConfig,
}
