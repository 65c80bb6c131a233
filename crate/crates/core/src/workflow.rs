//! A full inference run: tree and alignment matching, starting partition,
//! empirical-Bayes grid centers, optional NNI pre-search and the chain.

use crate::config::RunConfig;
use crate::likelihood::LikelihoodEngine;
use crate::mcmc::{
    preliminary_topology_search, run_chain, ChainInputs, ChainOutput, ChainStart, SearchOutcome,
};
use crate::priors::{regime_mean_lengths, ClusterPriorParams};
use crate::seqdata::{Alignment, SeqError};
use crate::substmodel::{BranchRegime, GridSpec, MarginalTransitionGrid};
use crate::tree::{parse_and_root, select_starting_partition, StartingPartition, Topology};
use crate::Result;

/// Parses a Newick tree. With an outgroup, the tree is rooted on it and the
/// outgroup tip is then removed.
pub fn load_tree(newick: &str, outgroup: Option<&str>) -> Result<Topology> {
    Ok(match outgroup {
        Some(og) => parse_and_root(newick, og)?.remove_tip(og)?,
        None => Topology::parse_newick(newick)?,
    })
}

/// Alignment rows in tip order. Every tip needs a sequence, and every
/// sequence other than the outgroup's needs a tip.
pub fn match_alignment(alignment: &Alignment, t: &Topology, outgroup: Option<&str>) -> Result<Alignment> {
    let tips = t.tip_index();
    if let Some(extra) = alignment
        .labels()
        .iter()
        .find(|l| Some(l.as_str()) != outgroup && !tips.contains_key(l.as_str()))
    {
        return Err(SeqError::MissingLabel(format!("{extra} (present in the alignment, absent from the tree)")).into());
    }
    Ok(alignment.reorder(&t.tip_labels())?)
}

/// Where the grids were centered.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct GridCenters {
    pub within: f64,
    pub between: f64,
    /// Whether a fallback center replaced an undefined regime mean.
    pub within_fallback: bool,
    pub between_fallback: bool,
}

/// Everything a chain needs, built from the inputs and the configuration.
pub struct PreparedRun {
    pub topology: Topology,
    pub engine: LikelihoodEngine,
    pub within: MarginalTransitionGrid,
    pub between: MarginalTransitionGrid,
    pub prior: ClusterPriorParams,
    pub start: ChainStart,
    pub starting: StartingPartition,
    pub centers: GridCenters,
}

impl PreparedRun {
    pub fn inputs(&self) -> ChainInputs<'_> {
        ChainInputs {
            topology: &self.topology,
            engine: &self.engine,
            within: &self.within,
            between: &self.between,
            prior: self.prior,
        }
    }
}

/// Builds grids and starting values for `t`, whose tips must carry
/// branch lengths. Alignment rows are matched to tips by label.
pub fn prepare(alignment: &Alignment, t: &Topology, cfg: &RunConfig) -> Result<PreparedRun> {
    cfg.validate()?;
    let model = cfg.model.rate_matrix()?;
    let rates = cfg.model.rates()?;
    let engine = LikelihoodEngine::new(alignment, t, *model.frequencies(), rates.n_categories())?;

    let starting = select_starting_partition(
        t,
        cfg.start.support_min,
        &cfg.start.distance_grid,
        cfg.start.linkage,
    )?;
    log::info!(
        "starting partition: {} clusters at distance threshold {} (Dunn index {:?})",
        starting.assignment.n_clusters(),
        starting.distance_max,
        starting.dunn
    );

    let b = &cfg.branch_lengths;
    let (within_mean, between_mean) = regime_mean_lengths(t, &starting.assignment);
    let centers = GridCenters {
        within: within_mean.unwrap_or(b.fallback_within_mean),
        between: between_mean.unwrap_or(b.fallback_between_mean),
        within_fallback: within_mean.is_none(),
        between_fallback: between_mean.is_none(),
    };
    if centers.within_fallback || centers.between_fallback {
        log::warn!("a regime has no usable branch lengths; using fallback grid centers {centers:?}");
    }
    let spec = |regime, center| GridSpec {
        radius_fraction: b.radius_fraction,
        grid_size: b.grid_size,
        mc_samples: b.mc_samples,
        coefficient_of_variation: b.coefficient_of_variation,
        ..GridSpec::new(regime, center, cfg.chain.seed)
    };
    let within = MarginalTransitionGrid::build(&model, &rates, &spec(BranchRegime::Within, centers.within))?;
    let between =
        MarginalTransitionGrid::build(&model, &rates, &spec(BranchRegime::Between, centers.between))?;

    let prior = cfg.prior.params();
    let start = ChainStart {
        assignment: starting.assignment.clone(),
        alpha: cfg.start.alpha.unwrap_or(prior.alpha),
        within_index: cfg.start.within_index.unwrap_or(b.grid_size / 2),
        between_index: cfg.start.between_index.unwrap_or(b.grid_size / 2),
    };
    Ok(PreparedRun {
        topology: t.clone(),
        engine,
        within,
        between,
        prior,
        start,
        starting,
        centers,
    })
}

pub struct InferenceOutput {
    pub search: Option<SearchOutcome>,
    pub chain: ChainOutput,
}

/// Runs the optional pre-search, then the chain on the resulting topology.
pub fn infer(prepared: &mut PreparedRun, cfg: &RunConfig) -> Result<InferenceOutput> {
    let search = if cfg.search.nni_budget > 0 {
        let outcome = preliminary_topology_search(
            prepared.inputs(),
            &prepared.start,
            cfg.search.nni_budget,
            cfg.search.burst_iterations,
            cfg.chain.seed,
        )?;
        log::info!(
            "NNI search: {} moves in {} evaluations, log-posterior {:.4}",
            outcome.moves,
            outcome.evaluations,
            outcome.state.log_posterior
        );
        prepared.topology = outcome.topology.clone();
        prepared.start = ChainStart {
            assignment: outcome.state.assignment.clone(),
            alpha: outcome.state.alpha,
            within_index: outcome.state.within_index,
            between_index: outcome.state.between_index,
        };
        Some(outcome)
    } else {
        None
    };
    let chain = run_chain(prepared.inputs(), &prepared.start, &cfg.chain)?;
    Ok(InferenceOutput { search, chain })
}
