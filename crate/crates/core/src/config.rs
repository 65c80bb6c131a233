//! The TOML run configuration.
//!
//! Every section is optional and falls back to the defaults below.
//! Matrices and frequencies are written in A, C, G, T order.
//!
//! ```toml
//! outgroup = "AB254141"           # optional; rooted on, then dropped
//!
//! [model]
//! q = [[-0.837, 0.121, 0.673, 0.043], ...]
//! frequencies = [0.39, 0.17, 0.22, 0.22]
//! rate_categories = 3
//! gamma_shape = 0.7589
//! gamma_scaling = "mean-one"      # or "shape-equals-scale"
//!
//! [prior]
//! lambda = 50.0                   # Poisson rate on the cluster count
//! eta = 100.0                     # gamma shape of the concentration prior
//! beta = 0.1                      # gamma scale of the concentration prior
//!
//! [branch_lengths]                # grid construction
//! [start]                         # starting partition and values
//! [chain]                         # iterations, burn_in, thinning, seed, ...
//! [search]                        # optional NNI pre-search
//! [simulation]                    # simulate subcommand
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcmc::ChainConfig;
use crate::priors::{BranchLengthPriorConfig, ClusterPriorParams};
use crate::simulate::SimParams;
use crate::substmodel::{
    remap_atcg_matrix, remap_atcg_vector, DiscreteGamma, GammaScaling, Mat4, RateMatrix,
    HIV_REFERENCE_PI_ATCG, HIV_REFERENCE_Q_ATCG,
};
use crate::tree::{default_distance_grid, Linkage};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Substitution model and rate variation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Rate matrix, rows and columns in A, C, G, T order.
    pub q: Mat4,
    /// Stationary frequencies in A, C, G, T order.
    pub frequencies: [f64; 4],
    pub rate_categories: usize,
    pub gamma_shape: f64,
    pub gamma_scaling: GammaScaling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            q: remap_atcg_matrix(&HIV_REFERENCE_Q_ATCG),
            frequencies: remap_atcg_vector(&HIV_REFERENCE_PI_ATCG),
            rate_categories: 3,
            gamma_shape: 0.7589,
            gamma_scaling: GammaScaling::MeanOne,
        }
    }
}

impl ModelConfig {
    pub fn rate_matrix(&self) -> Result<RateMatrix, ConfigError> {
        RateMatrix::new(self.q, self.frequencies)
            .map_err(|e| ConfigError::Invalid(format!("model: {e}")))
    }

    pub fn rates(&self) -> Result<DiscreteGamma, ConfigError> {
        DiscreteGamma::with_scaling(self.rate_categories, self.gamma_shape, self.gamma_scaling)
            .map_err(|e| ConfigError::Invalid(format!("model: {e}")))
    }
}

/// Cluster-prior hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub lambda: f64,
    pub eta: f64,
    pub beta: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lambda: 50.0,
            eta: 100.0,
            beta: 0.1,
        }
    }
}

impl PriorConfig {
    /// Parameters with `alpha` set to the hyperprior mean.
    pub fn params(&self) -> ClusterPriorParams {
        ClusterPriorParams {
            lambda: self.lambda,
            alpha: self.eta * self.beta,
            eta: self.eta,
            beta: self.beta,
        }
    }
}

/// Starting partition search and starting values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartConfig {
    /// Minimum clade support, in [0, 1].
    pub support_min: f64,
    /// Maximum within-clade patristic distances to try.
    pub distance_grid: Vec<f64>,
    /// Inter-cluster distance of the Dunn index.
    pub linkage: Linkage,
    /// Starting concentration; the hyperprior mean when absent.
    pub alpha: Option<f64>,
    /// Starting grid indices; the grid center when absent.
    pub within_index: Option<usize>,
    pub between_index: Option<usize>,
}

impl Default for StartConfig {
    fn default() -> Self {
        StartConfig {
            support_min: 0.7,
            distance_grid: default_distance_grid(),
            linkage: Linkage::Single,
            alpha: None,
            within_index: None,
            between_index: None,
        }
    }
}

/// Optional greedy NNI search before the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Neighbor evaluations allowed; 0 disables the search.
    pub nni_budget: usize,
    /// MH iterations run after every accepted topology move.
    pub burst_iterations: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            nni_budget: 0,
            burst_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub outgroup: Option<String>,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub branch_lengths: BranchLengthPriorConfig,
    pub start: StartConfig,
    pub chain: ChainConfig,
    pub search: SearchConfig,
    pub simulation: SimParams,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks everything an inference run uses.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.rate_matrix()?;
        self.model.rates()?;
        self.prior
            .params()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("prior: {e}")))?;
        if let Some(a) = self.start.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(ConfigError::Invalid(format!("start.alpha must be positive, got {a}")));
            }
        }
        if !(0.0..=1.0).contains(&self.start.support_min) {
            return Err(ConfigError::Invalid(format!(
                "start.support_min must lie in [0, 1], got {}",
                self.start.support_min
            )));
        }
        if self.start.distance_grid.is_empty()
            || self.start.distance_grid.iter().any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(ConfigError::Invalid(
                "start.distance_grid needs at least one non-negative distance".into(),
            ));
        }
        let b = &self.branch_lengths;
        if b.grid_size == 0 || b.mc_samples == 0 {
            return Err(ConfigError::Invalid(
                "branch_lengths.grid_size and mc_samples must be positive".into(),
            ));
        }
        for (name, idx) in [
            ("within_index", self.start.within_index),
            ("between_index", self.start.between_index),
        ] {
            if idx.is_some_and(|i| i >= b.grid_size) {
                return Err(ConfigError::Invalid(format!(
                    "start.{name} must be below the grid size {}",
                    b.grid_size
                )));
            }
        }
        self.chain
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
        assert_eq!(c.prior.params().alpha, 10.0);
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.outgroup = Some("og".into());
        c.chain.iterations = 220_000;
        c.chain.burn_in = 70_000;
        c.chain.thinning = 150;
        c.start.alpha = Some(3.5);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.chain.retained(), 1000);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(matches!(
            RunConfig::from_toml("[chain]\niteration = 3\n"),
            Err(ConfigError::Parse(_))
        ));
        let c = RunConfig::from_toml("[chain]\niterations = 10\nburn_in = 10\n").unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        let c = RunConfig::from_toml("[prior]\neta = -1.0\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_toml("[start]\nwithin_index = 20\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_toml("[model]\nrate_categories = 5\n").unwrap();
        assert_eq!(c.model.rate_categories, 5);
        assert_eq!(c.model.gamma_shape, 0.7589);
        assert_eq!(c.model.rate_matrix().unwrap().q(), RateMatrix::hiv_reference().q());
    }
}
