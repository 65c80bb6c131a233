use rand::seq::IndexedRandom;
use rand::Rng;

use phyloclust::config::RunConfig;
use phyloclust::likelihood::{marginal_log_likelihood, GridChoice, LikelihoodEngine};
use phyloclust::mcmc::{
    preliminary_topology_search, run_chain, ChainConfig, ChainInputs, ChainStart, Trace,
};
use phyloclust::priors::{log_alpha_prior, log_partition_prior, ClusterPriorParams};
use phyloclust::rng;
use phyloclust::seqdata::{parse_fasta, Alignment};
use phyloclust::simulate::{evolve, random_topology};
use phyloclust::substmodel::{BranchRegime, DiscreteGamma, GridSpec, MarginalTransitionGrid, RateMatrix};
use phyloclust::tree::{ClusterAssignment, Topology};
use phyloclust::workflow::prepare;

struct Toy {
    t: Topology,
    engine: LikelihoodEngine,
    within: MarginalTransitionGrid,
    between: MarginalTransitionGrid,
    prior: ClusterPriorParams,
}

impl Toy {
    fn new(newick: &str, fasta: &str) -> Self {
        let t = Topology::parse_newick(newick).unwrap();
        let alignment: Alignment = parse_fasta(fasta).unwrap();
        let model = RateMatrix::hiv_reference();
        let rates = DiscreteGamma::uniform();
        let grid = |regime, center| {
            let spec = GridSpec {
                grid_size: 2,
                mc_samples: 2000,
                radius_fraction: 0.5,
                ..GridSpec::new(regime, center, 5)
            };
            MarginalTransitionGrid::build(&model, &rates, &spec).unwrap()
        };
        Toy {
            engine: LikelihoodEngine::new(&alignment, &t, *model.frequencies(), 1).unwrap(),
            within: grid(BranchRegime::Within, 0.05),
            between: grid(BranchRegime::Between, 0.3),
            t,
            prior: ClusterPriorParams {
                lambda: 1.5,
                alpha: 1.0,
                eta: 2.0,
                beta: 0.5,
            },
        }
    }

    fn inputs(&self) -> ChainInputs<'_> {
        ChainInputs {
            topology: &self.t,
            engine: &self.engine,
            within: &self.within,
            between: &self.between,
            prior: self.prior,
        }
    }

    fn start(&self) -> ChainStart {
        ChainStart {
            assignment: ClusterAssignment::single(self.t.n_tips()),
            alpha: 1.0,
            within_index: 0,
            between_index: 0,
        }
    }

    /// Posterior mass of `c`, up to a constant, with the concentration
    /// integrated by the trapezoid rule.
    fn weight(&self, c: &ClusterAssignment) -> f64 {
        let sizes = c.sizes();
        let h = 1e-3;
        let prior: f64 = (1..40_000)
            .map(|i| {
                let a = i as f64 * h;
                (log_partition_prior(&sizes, a, self.prior.lambda)
                    + log_alpha_prior(a, self.prior.eta, self.prior.beta))
                .exp()
            })
            .sum::<f64>()
            * h;
        let mut lik = 0.0;
        for wi in 0..self.within.len() {
            for bi in 0..self.between.len() {
                let choice = GridChoice::new(&self.within, &self.between, wi, bi).unwrap();
                lik += marginal_log_likelihood(&self.engine, &self.t, c, &choice, None)
                    .unwrap()
                    .exp();
            }
        }
        prior * lik
    }
}

fn quick(iterations: u64, burn_in: u64, thinning: u64, seed: u64) -> ChainConfig {
    ChainConfig {
        iterations,
        burn_in,
        thinning,
        seed,
        log_every: 0,
        ..ChainConfig::default()
    }
}

#[test]
fn two_tip_chain_matches_enumerated_posterior() {
    let toy = Toy::new("(a:0.05,b:0.05);", ">a\nACGTACGTAA\n>b\nACGTACCTAA\n");
    let together = ClusterAssignment::single(2);
    let apart = ClusterAssignment::singletons(2);
    let (w1, w2) = (toy.weight(&together), toy.weight(&apart));
    let exact = w1 / (w1 + w2);
    let trace = run_chain(toy.inputs(), &toy.start(), &quick(100_000, 1_000, 1, 17))
        .unwrap()
        .trace;
    let observed =
        trace.assignments().filter(|c| **c == together).count() as f64 / trace.len() as f64;
    assert!((observed - exact).abs() < 0.02, "observed {observed}, exact {exact}");
}

#[test]
fn traces_are_reproducible_and_seed_dependent() {
    let toy = Toy::new(
        "((a:0.05,b:0.05):0.2,(c:0.05,d:0.05):0.2);",
        ">a\nACGTAC\n>b\nACGTAT\n>c\nTCGAAC\n>d\nTCGAAG\n",
    );
    let run = |seed| run_chain(toy.inputs(), &toy.start(), &quick(3_000, 500, 5, seed)).unwrap().trace;
    let key = |t: &Trace| {
        t.records
            .iter()
            .map(|r| (r.log_posterior.to_bits(), r.alpha.to_bits(), r.assignment.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(key(&run(4)), key(&run(4)));
    assert_ne!(key(&run(4)), key(&run(5)));
}

#[test]
fn trace_lengths_follow_burn_in_and_thinning() {
    let toy = Toy::new("(a:0.05,b:0.05);", ">a\nAC\n>b\nAT\n");
    for (iterations, burn_in, thinning, expected) in
        [(220_000, 70_000, 150, 1000), (11, 10, 1, 1), (55_000, 5_000, 50, 1000), (10, 3, 3, 3)]
    {
        let config = quick(iterations, burn_in, thinning, 1);
        assert_eq!(config.retained(), expected);
        let trace = run_chain(toy.inputs(), &toy.start(), &config).unwrap().trace;
        assert_eq!(trace.len() as u64, expected);
        assert!(trace.records.iter().all(|r| r.iteration > burn_in));
    }
}

#[test]
fn search_with_zero_budget_returns_the_input() {
    let toy = Toy::new(
        "((a:0.05,b:0.05):0.2,(c:0.05,d:0.05):0.2);",
        ">a\nACGTAC\n>b\nACGTAT\n>c\nTCGAAC\n>d\nTCGAAG\n",
    );
    let out = preliminary_topology_search(toy.inputs(), &toy.start(), 0, 50, 1).unwrap();
    assert_eq!(out.topology, toy.t);
    assert_eq!(out.evaluations, 0);
}

#[test]
fn search_recovers_a_perturbed_six_tip_tree() {
    // Equal edge lengths match the shared per-regime branch-length
    // distribution, so the data identify the generating topology.
    let model = RateMatrix::hiv_reference();
    let rates = DiscreteGamma::new(3, 0.7589).unwrap();
    let mut cfg = RunConfig::default();
    cfg.branch_lengths.mc_samples = 5_000;
    cfg.branch_lengths.grid_size = 5;
    let mut recovered = 0;
    for run in 0..10u64 {
        let mut r = rng::stream(31, run);
        let mut truth = random_topology(6, &mut r).unwrap();
        for v in 0..truth.n_nodes() {
            if v != truth.root() {
                truth.set_length(v, Some(0.1));
                truth.set_support(v, Some(1.0));
            }
        }
        let root: Vec<usize> = (0..2000).map(|_| r.random_range(0..4)).collect();
        let rows = evolve(&truth, &model, &rates, &root, &mut r).unwrap();
        let alignment = Alignment::new(truth.tip_labels(), rows).unwrap();
        let perturbed = truth.nni_neighbors().choose(&mut r).unwrap().clone();
        cfg.chain.seed = run + 1;
        let prepared = prepare(&alignment, &perturbed, &cfg).unwrap();
        let start = preliminary_topology_search(prepared.inputs(), &prepared.start, 0, 0, run).unwrap();
        let out = preliminary_topology_search(prepared.inputs(), &prepared.start, 200, 100, run).unwrap();
        assert!(out.state.log_posterior >= start.state.log_posterior);
        if out.topology.clade_sets() == truth.clade_sets() {
            recovered += 1;
        }
    }
    assert!(recovered >= 8, "recovered {recovered} of 10");
}
