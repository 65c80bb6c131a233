use std::time::Instant;

use rand::Rng;

use super::moves::{self, Move};
use super::{
    AcceptanceStats, ChainConfig, ChainError, ChainInputs, ChainStart, ChainState, RunReport,
    Trace, TraceRecord,
};
use crate::likelihood::{GridChoice, LikelihoodCache, LikelihoodEngine, RegimeLabeling};
use crate::priors::{log_alpha_prior, log_partition_prior, ClusterPriorParams};
use crate::rng::{self, StreamRng};
use crate::substmodel::{BranchRegime, MarginalTransitionGrid};
use crate::tree::{ClusterAssignment, Topology};

const CLUSTER_KERNEL: u64 = 0;
const ALPHA_KERNEL: u64 = 1;
const WITHIN_KERNEL: u64 = 2;
const BETWEEN_KERNEL: u64 = 3;

/// One Metropolis-Hastings chain. Each iteration updates, in order, the
/// cluster assignment (split-merge), the concentration and the two grid
/// indices. Every kernel draws from its own random stream.
pub struct Sampler<'a> {
    topology: Topology,
    engine: &'a LikelihoodEngine,
    within: &'a MarginalTransitionGrid,
    between: &'a MarginalTransitionGrid,
    prior: ClusterPriorParams,
    alpha_radius: f64,
    cache: LikelihoodCache,
    is_root: Vec<bool>,
    alpha: f64,
    within_index: usize,
    between_index: usize,
    log_likelihood: f64,
    log_cluster_prior: f64,
    log_alpha_prior: f64,
    rngs: [StreamRng; 4],
    stats: AcceptanceStats,
}

impl<'a> Sampler<'a> {
    pub fn new(
        inputs: ChainInputs<'a>,
        start: &ChainStart,
        config: &ChainConfig,
    ) -> Result<Self, ChainError> {
        Self::with_streams(inputs, start, config, rng::KERNEL_STREAM)
    }

    /// Like [`Self::new`], with kernel `k` drawing from stream `base + k`.
    pub(crate) fn with_streams(
        inputs: ChainInputs<'a>,
        start: &ChainStart,
        config: &ChainConfig,
        base: u64,
    ) -> Result<Self, ChainError> {
        let ChainInputs {
            topology,
            engine,
            within,
            between,
            prior,
        } = inputs;
        let checked = ClusterPriorParams {
            alpha: start.alpha,
            ..prior
        };
        checked.validate().map_err(ChainError::Start)?;
        if start.within_index >= within.len() || start.between_index >= between.len() {
            return Err(ChainError::Start(format!(
                "grid indices ({}, {}) outside grids of size ({}, {})",
                start.within_index,
                start.between_index,
                within.len(),
                between.len()
            )));
        }
        GridChoice::new(within, between, start.within_index, start.between_index)?;
        let is_root = moves::root_flags(topology, &start.assignment)
            .map_err(|e| ChainError::Start(e.to_string()))?;
        let rngs = std::array::from_fn(|k| rng::stream(config.seed, base + k as u64));
        let mut sampler = Sampler {
            topology: topology.clone(),
            engine,
            within,
            between,
            prior,
            alpha_radius: config.alpha_radius,
            cache: LikelihoodCache::new(config.cache_capacity),
            is_root,
            alpha: start.alpha,
            within_index: start.within_index,
            between_index: start.between_index,
            log_likelihood: 0.0,
            log_cluster_prior: 0.0,
            log_alpha_prior: 0.0,
            rngs,
            stats: AcceptanceStats::default(),
        };
        sampler.refresh()?;
        Ok(sampler)
    }

    /// Recomputes the tracked posterior terms for the current state.
    fn refresh(&mut self) -> Result<(), ChainError> {
        let flags = self.is_root.clone();
        self.log_likelihood = self.likelihood(&flags, self.within_index, self.between_index)?;
        self.log_cluster_prior = self.cluster_prior(&flags, self.alpha);
        self.log_alpha_prior = log_alpha_prior(self.alpha, self.prior.eta, self.prior.beta);
        Ok(())
    }

    fn likelihood(&mut self, flags: &[bool], wi: usize, bi: usize) -> Result<f64, ChainError> {
        let labels = RegimeLabeling::from_root_flags(&self.topology, flags);
        let choice = GridChoice {
            within: self.within,
            between: self.between,
            within_index: wi,
            between_index: bi,
        };
        Ok(self
            .engine
            .log_likelihood(&self.topology, &labels, &choice, Some(&mut self.cache))?)
    }

    fn cluster_prior(&self, flags: &[bool], alpha: f64) -> f64 {
        log_partition_prior(&moves::sizes(&self.topology, flags), alpha, self.prior.lambda)
    }

    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood + self.log_cluster_prior + self.log_alpha_prior
    }

    pub fn state(&self) -> ChainState {
        ChainState {
            assignment: moves::assignment(&self.topology, &self.is_root),
            alpha: self.alpha,
            within_index: self.within_index,
            between_index: self.between_index,
            log_likelihood: self.log_likelihood,
            log_posterior: self.log_posterior(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn acceptance(&self) -> AcceptanceStats {
        self.stats
    }

    pub fn cache(&self) -> &LikelihoodCache {
        &self.cache
    }

    pub fn wipe_cache(&mut self) {
        self.cache.wipe();
    }

    /// Log-posterior of the current state recomputed without the cache.
    pub fn recompute_log_posterior(&self) -> Result<f64, ChainError> {
        let labels = RegimeLabeling::from_root_flags(&self.topology, &self.is_root);
        let choice = GridChoice {
            within: self.within,
            between: self.between,
            within_index: self.within_index,
            between_index: self.between_index,
        };
        let ll = self
            .engine
            .log_likelihood(&self.topology, &labels, &choice, None)?;
        Ok(ll
            + self.cluster_prior(&self.is_root, self.alpha)
            + log_alpha_prior(self.alpha, self.prior.eta, self.prior.beta))
    }

    /// Log-posterior of assignment `c` on topology `t` at the current
    /// concentration and grid indices. The sampler's state is untouched.
    pub fn evaluate(&mut self, t: &Topology, c: &ClusterAssignment) -> Result<f64, ChainError> {
        let flags = moves::root_flags(t, c)?;
        let labels = RegimeLabeling::from_root_flags(t, &flags);
        let choice = GridChoice {
            within: self.within,
            between: self.between,
            within_index: self.within_index,
            between_index: self.between_index,
        };
        let ll = self.engine.log_likelihood(t, &labels, &choice, Some(&mut self.cache))?;
        let sizes: Vec<usize> = c.sizes();
        Ok(ll
            + log_partition_prior(&sizes, self.alpha, self.prior.lambda)
            + log_alpha_prior(self.alpha, self.prior.eta, self.prior.beta))
    }

    /// Moves the chain onto another topology with assignment `c`.
    pub fn set_topology(&mut self, t: Topology, c: &ClusterAssignment) -> Result<(), ChainError> {
        self.is_root = moves::root_flags(&t, c)?;
        self.topology = t;
        self.refresh()
    }

    /// One full iteration of all four kernels.
    pub fn step(&mut self) -> Result<(), ChainError> {
        self.cluster_step()?;
        self.alpha_step();
        self.grid_step(BranchRegime::Within)?;
        self.grid_step(BranchRegime::Between)?;
        Ok(())
    }

    fn cluster_step(&mut self) -> Result<(), ChainError> {
        let available = moves::available(&self.topology, &self.is_root);
        if available.is_empty() {
            return Ok(());
        }
        let rng = &mut self.rngs[CLUSTER_KERNEL as usize];
        let m: Move = available[rng.random_range(0..available.len())];
        let u: f64 = rng.random();
        let mut proposal = self.is_root.clone();
        moves::apply(&self.topology, &mut proposal, m);
        let back = moves::count(&self.topology, &proposal);
        let prior = self.cluster_prior(&proposal, self.alpha);
        let ll = self.likelihood(&proposal, self.within_index, self.between_index)?;
        let log_ratio = (ll - self.log_likelihood)
            + (prior - self.log_cluster_prior)
            + (available.len() as f64).ln()
            - (back as f64).ln();
        let accepted = accept(u, ll + prior, log_ratio);
        if accepted {
            self.is_root = proposal;
            self.log_likelihood = ll;
            self.log_cluster_prior = prior;
        }
        self.stats.cluster.record(accepted);
        Ok(())
    }

    fn alpha_step(&mut self) {
        let rng = &mut self.rngs[ALPHA_KERNEL as usize];
        let shift: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let u: f64 = rng.random();
        let proposal = self.alpha + shift * self.alpha_radius;
        let accepted = if proposal <= 0.0 {
            false
        } else {
            let cluster = self.cluster_prior(&self.is_root, proposal);
            let hyper = log_alpha_prior(proposal, self.prior.eta, self.prior.beta);
            let log_ratio = (cluster - self.log_cluster_prior) + (hyper - self.log_alpha_prior);
            let ok = accept(u, cluster + hyper, log_ratio);
            if ok {
                self.alpha = proposal;
                self.log_cluster_prior = cluster;
                self.log_alpha_prior = hyper;
            }
            ok
        };
        self.stats.alpha.record(accepted);
    }

    fn grid_step(&mut self, regime: BranchRegime) -> Result<(), ChainError> {
        let (kernel, current, len) = match regime {
            BranchRegime::Within => (WITHIN_KERNEL, self.within_index, self.within.len()),
            BranchRegime::Between => (BETWEEN_KERNEL, self.between_index, self.between.len()),
        };
        if len < 2 {
            return Ok(());
        }
        let rng = &mut self.rngs[kernel as usize];
        let options = neighbours(current, len);
        let proposal = options[rng.random_range(0..options.len())];
        let u: f64 = rng.random();
        let kernel_ratio = (options.len() as f64).ln() - (neighbours(proposal, len).len() as f64).ln();
        let (wi, bi) = match regime {
            BranchRegime::Within => (proposal, self.between_index),
            BranchRegime::Between => (self.within_index, proposal),
        };
        let flags = self.is_root.clone();
        let ll = self.likelihood(&flags, wi, bi)?;
        let log_ratio = ll - self.log_likelihood + kernel_ratio;
        let accepted = accept(u, ll, log_ratio);
        if accepted {
            self.within_index = wi;
            self.between_index = bi;
            self.log_likelihood = ll;
        }
        match regime {
            BranchRegime::Within => self.stats.within_grid.record(accepted),
            BranchRegime::Between => self.stats.between_grid.record(accepted),
        }
        Ok(())
    }
}

/// Valid indices one step away from `i`.
fn neighbours(i: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2);
    if i > 0 {
        out.push(i - 1);
    }
    if i + 1 < len {
        out.push(i + 1);
    }
    out
}

/// MH decision with a pre-drawn uniform. Proposals with an impossible
/// target value are always rejected.
fn accept(u: f64, proposal_target: f64, log_ratio: f64) -> bool {
    if proposal_target == f64::NEG_INFINITY || proposal_target.is_nan() || log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || u.ln() < log_ratio
}

/// Result of [`run_chain`].
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub trace: Trace,
    pub report: RunReport,
    pub final_state: ChainState,
}

/// Runs a chain from `start` and keeps every `thinning`-th iteration after
/// the burn-in.
pub fn run_chain(
    inputs: ChainInputs<'_>,
    start: &ChainStart,
    config: &ChainConfig,
) -> Result<ChainOutput, ChainError> {
    config.validate()?;
    let clock = Instant::now();
    let mut sampler = Sampler::new(inputs, start, config)?;
    let mut trace = Trace {
        tip_labels: inputs.topology.tip_labels(),
        records: Vec::with_capacity(config.retained() as usize),
    };
    for i in 1..=config.iterations {
        sampler.step()?;
        if let Some(k) = config.wipe_every {
            if i % k == 0 {
                sampler.wipe_cache();
            }
        }
        if config.check_every > 0 && i % config.check_every == 0 {
            let tracked = sampler.log_posterior();
            let recomputed = sampler.recompute_log_posterior()?;
            let same = tracked == recomputed || (tracked - recomputed).abs() <= 1e-9;
            if !same {
                return Err(ChainError::Drift {
                    iteration: i,
                    tracked,
                    recomputed,
                });
            }
        }
        if config.keeps(i) {
            let s = sampler.state();
            trace.records.push(TraceRecord {
                iteration: i,
                log_posterior: s.log_posterior,
                alpha: s.alpha,
                within_index: s.within_index,
                between_index: s.between_index,
                assignment: s.assignment,
            });
        }
        if config.log_every > 0 && i % config.log_every == 0 {
            let a = sampler.acceptance();
            log::info!(
                "iteration {i}/{}: log-posterior {:.3}, clusters {}, alpha {:.3}, acceptance c {:.3} alpha {:.3} grids {:.3}/{:.3}, cache hit rate {:.3}",
                config.iterations,
                sampler.log_posterior(),
                sampler.is_root.iter().filter(|&&f| f).count(),
                sampler.alpha,
                a.cluster.rate(),
                a.alpha.rate(),
                a.within_grid.rate(),
                a.between_grid.rate(),
                sampler.cache().stats().hit_rate(),
            );
        }
    }
    let final_state = sampler.state();
    let report = RunReport {
        iterations: config.iterations,
        retained: trace.len(),
        acceptance: sampler.acceptance(),
        cache: sampler.cache().stats(),
        final_log_posterior: final_state.log_posterior,
        final_alpha: final_state.alpha,
        final_clusters: final_state.assignment.n_clusters(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    Ok(ChainOutput {
        trace,
        report,
        final_state,
    })
}
