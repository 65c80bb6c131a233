//! Bayesian phylogenetic clustering of sequence samples into transmission
//! clusters.
//!
//! Given an alignment and a fixed rooted topology, the sampler explores
//! partitions of the tips into clades. Branch lengths inside clusters and
//! between clusters follow two different priors and are integrated out of
//! the likelihood by Monte Carlo, so the chain only moves over the cluster
//! assignment, the Dirichlet concentration and two discrete grid indices.
//!
//! Module map:
//!
//! - [`seqdata`]: FASTA ingestion, IUPAC indicator encoding, site patterns, bootstrap.
//! - [`substmodel`]: GTR rate matrices, discrete gamma rates, marginal transition grids.
//! - [`tree`]: rooted binary topologies, Newick, rooting, clade partitions, NNI.
//! - [`likelihood`]: Felsenstein pruning with regime-dependent matrices and a memo cache.
//! - [`priors`]: cluster-assignment prior and concentration hyperprior.
//! - [`mcmc`]: the Metropolis-Hastings sampler and the NNI pre-search.
//! - [`estimators`]: MAP and linkage point estimates.
//! - [`simulate`]: synthetic datasets.
//! - [`eval`]: adjusted Rand index and recovery summaries.
//! - [`config`]: the run configuration file.
//! - [`workflow`]: a complete inference run from alignment and tree.

pub mod config;
pub mod estimators;
pub mod eval;
pub mod likelihood;
pub mod mcmc;
pub mod priors;
pub mod rng;
pub mod seqdata;
pub mod simulate;
pub mod substmodel;
pub mod tree;
pub mod workflow;

mod error;

pub use error::{Error, Result};
