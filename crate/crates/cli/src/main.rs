use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use phyloclust::config::{ConfigError, RunConfig};
use phyloclust::estimators::{
    assignment_by_label, linkage_estimate, map_estimate, CoclusteringMatrix, EstimateError,
};
use phyloclust::eval::adjusted_rand_index;
use phyloclust::mcmc::Trace;
use phyloclust::seqdata::{bootstrap_columns, parse_fasta, write_fasta, Alignment};
use phyloclust::simulate::generate_dataset;
use phyloclust::tree::ClusterAssignment;
use phyloclust::workflow::{infer, load_tree, match_alignment, prepare};
use phyloclust::Error;

#[derive(Parser)]
#[command(name = "phyloclust", version, about = "Bayesian phylogenetic clustering of sequence samples")]
struct Cli {
    /// Worker threads for parallel steps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets (FASTA, Newick, truth JSON per replicate).
    Simulate(SimulateArgs),
    /// Run the sampler on an alignment and a tree.
    Infer(InferArgs),
    /// Point estimate of the clusters from a trace.
    Estimate(EstimateArgs),
    /// Adjusted Rand index between an estimate and a reference partition.
    Eval(EvalArgs),
    /// Resample alignment columns with replacement.
    Bootstrap(BootstrapArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML configuration; its [simulation] and [model] sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of sequences (overrides the configuration).
    #[arg(long)]
    n: Option<usize>,
    /// Poisson mean of the cluster count (overrides the configuration).
    #[arg(long)]
    cluster_rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// FASTA whose first sequence is the root sequence.
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    alignment: PathBuf,
    /// Newick tree with branch lengths and, for the starting partition,
    /// clade supports.
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    outgroup: Option<String>,
    /// Neighbor evaluations of the NNI pre-search (0 disables it).
    #[arg(long)]
    nni_budget: Option<usize>,
    /// Wipe the likelihood cache every this many iterations.
    #[arg(long)]
    wipe_every: Option<u64>,
    /// Output trace CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Output run report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Write the effective configuration as TOML.
    #[arg(long)]
    echo_config: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("method").required(true).args(["map", "linkage"])))]
struct EstimateArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Run report written by `infer`, for the tip labels.
    #[arg(long)]
    report: PathBuf,
    /// Highest-posterior sample.
    #[arg(long)]
    map: bool,
    /// Co-clustering threshold in (0, 1].
    #[arg(long)]
    linkage: Option<f64>,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the co-clustering matrix as CSV.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON map from label to cluster, as written by `estimate`.
    #[arg(long)]
    estimate: PathBuf,
    /// JSON map from label to cluster, or a truth file from `simulate`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[arg(long)]
    alignment: PathBuf,
    #[arg(long, default_value_t = 100)]
    replicates: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Failure with its exit code: 2 usage, 3 validation, 4 runtime.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(ConfigError::Io { .. }) => CliError::Usage(msg),
            Error::Chain(_) | Error::Likelihood(_) | Error::Estimate(EstimateError::Io(_)) => {
                CliError::Runtime(msg)
            }
            _ => CliError::Validation(msg),
        }
    }
}

macro_rules! impl_from_lib {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
impl_from_lib!(
    ConfigError,
    EstimateError,
    phyloclust::seqdata::SeqError,
    phyloclust::simulate::SimError,
    phyloclust::mcmc::ChainError,
    phyloclust::eval::EvalError
);

type CliResult<T> = Result<T, CliError>;

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::from_path(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn read_alignment(path: &Path) -> CliResult<Alignment> {
    parse_fasta(&read_input(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    let mut params = cfg.simulation.clone();
    if let Some(n) = args.n {
        params.n_sequences = n;
    }
    if let Some(rate) = args.cluster_rate {
        params.cluster_rate = rate;
    }
    params.validate()?;
    let model = cfg.model.rate_matrix()?;
    let root = match &args.root {
        Some(p) => {
            let a = read_alignment(p)?;
            Some(
                a.rows()
                    .first()
                    .cloned()
                    .ok_or_else(|| CliError::Validation(format!("{}: no sequences", p.display())))?,
            )
        }
        None => None,
    };
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", args.out_dir.display())))?;
    let width = args.replicates.max(1).to_string().len().max(3);
    (0..args.replicates)
        .into_par_iter()
        .map(|r| -> CliResult<()> {
            let d = generate_dataset(&params, &model, root.as_deref(), args.seed, r)?;
            let stem = args.out_dir.join(format!("rep{:0width$}", r + 1));
            write_output(&stem.with_extension("fasta"), write_fasta(&d.alignment, 60))?;
            write_output(&stem.with_extension("nwk"), d.topology.to_newick() + "\n")?;
            write_output(
                &stem.with_extension("truth.json"),
                json_text(&json!({ "parameters": params, "record": d.record, "assignment": d.record.assignment })),
            )?;
            log::info!(
                "replicate {}: {} sequences, {} clusters",
                r + 1,
                d.alignment.n_sequences(),
                d.truth.n_clusters()
            );
            Ok(())
        })
        .collect()
}

fn infer_cmd(args: InferArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.chain.seed = s;
    }
    if let Some(v) = args.iterations {
        cfg.chain.iterations = v;
    }
    if let Some(v) = args.burn_in {
        cfg.chain.burn_in = v;
    }
    if let Some(v) = args.thin {
        cfg.chain.thinning = v;
    }
    if let Some(v) = args.outgroup {
        cfg.outgroup = Some(v);
    }
    if let Some(v) = args.nni_budget {
        cfg.search.nni_budget = v;
    }
    if let Some(v) = args.wipe_every {
        cfg.chain.wipe_every = Some(v);
    }
    cfg.validate()?;
    if let Some(p) = &args.echo_config {
        write_output(p, cfg.to_toml())?;
    }
    let alignment = read_alignment(&args.alignment)?;
    let tree = load_tree(&read_input(&args.tree)?, cfg.outgroup.as_deref())
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.tree.display())))?;
    let alignment = match_alignment(&alignment, &tree, cfg.outgroup.as_deref())?;
    let mut prepared = prepare(&alignment, &tree, &cfg)?;
    let out = infer(&mut prepared, &cfg)?;

    let mut csv = Vec::new();
    out.chain.trace.write_csv(&mut csv)?;
    write_output(&args.trace, csv)?;
    let search = out.search.as_ref().map(|s| {
        json!({
            "moves": s.moves,
            "evaluations": s.evaluations,
            "log_posterior": s.state.log_posterior,
            "topology": s.topology.to_newick(),
        })
    });
    let report = json!({
        "tip_labels": out.chain.trace.tip_labels,
        "starting_partition": {
            "assignment": assignment_by_label(&out.chain.trace.tip_labels, &prepared.starting.assignment),
            "distance_max": prepared.starting.distance_max,
            "dunn": prepared.starting.dunn,
        },
        "grid_centers": prepared.centers,
        "search": search,
        "run": out.chain.report,
        "config": cfg,
    });
    write_output(&args.report, json_text(&report))?;
    let r = &out.chain.report;
    log::info!(
        "done: {} retained samples, final log-posterior {:.4}, {} clusters, cache hit rate {:.3}",
        r.retained,
        r.final_log_posterior,
        r.final_clusters,
        r.cache.hit_rate()
    );
    Ok(())
}

fn tip_labels_from_report(path: &Path) -> CliResult<Vec<String>> {
    let v: serde_json::Value = serde_json::from_str(&read_input(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_value(v["tip_labels"].clone())
        .map_err(|e| CliError::Validation(format!("{}: tip_labels: {e}", path.display())))
}

fn estimate(args: EstimateArgs) -> CliResult<()> {
    if let Some(t) = args.linkage {
        if !(t > 0.0 && t <= 1.0) {
            return Err(EstimateError::Threshold(t).into());
        }
    }
    let labels = tip_labels_from_report(&args.report)?;
    let text = read_input(&args.trace)?;
    let trace = Trace::read_csv(text.as_bytes(), labels.clone())?;
    let (method, c) = match args.linkage {
        Some(t) => (format!("linkage-{t}"), linkage_estimate(&trace, t)?),
        None => ("map".to_string(), map_estimate(&trace)?),
    };
    if let Some(p) = &args.matrix {
        let mut buf = Vec::new();
        CoclusteringMatrix::from_trace(&trace)?.write_csv(&mut buf, &labels)?;
        write_output(p, buf)?;
    }
    let out = json!({
        "method": method,
        "clusters": c.n_clusters(),
        "assignment": assignment_by_label(&labels, &c),
    });
    match &args.out {
        Some(p) => write_output(p, json_text(&out)),
        None => {
            print!("{}", json_text(&out));
            Ok(())
        }
    }
}

/// Reads `{label: cluster}`, either bare or under an `assignment` key.
fn read_partition(path: &Path) -> CliResult<BTreeMap<String, usize>> {
    let v: serde_json::Value = serde_json::from_str(&read_input(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let map = if v.get("assignment").is_some() {
        v["assignment"].clone()
    } else {
        v
    };
    serde_json::from_value(map)
        .map_err(|e| CliError::Validation(format!("{}: expected a label-to-cluster map: {e}", path.display())))
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let estimate = read_partition(&args.estimate)?;
    let truth = read_partition(&args.truth)?;
    if estimate.len() != truth.len() || estimate.keys().any(|k| !truth.contains_key(k)) {
        return Err(CliError::Validation(
            "estimate and truth cover different labels".to_string(),
        ));
    }
    let a = ClusterAssignment::from_labels(estimate.values().copied());
    let b = ClusterAssignment::from_labels(estimate.keys().map(|k| truth[k]));
    let ari = adjusted_rand_index(&a, &b)?;
    let out = json!({
        "ari": ari,
        "n": a.len(),
        "estimate_clusters": a.n_clusters(),
        "truth_clusters": b.n_clusters(),
    });
    match &args.out {
        Some(p) => write_output(p, json_text(&out)),
        None => {
            print!("{}", json_text(&out));
            Ok(())
        }
    }
}

fn bootstrap(args: BootstrapArgs) -> CliResult<()> {
    let alignment = read_alignment(&args.alignment)?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", args.out_dir.display())))?;
    let width = args.replicates.max(1).to_string().len().max(3);
    (0..args.replicates)
        .into_par_iter()
        .map(|r| -> CliResult<()> {
            let a = bootstrap_columns(&alignment, args.seed, r)?;
            let path = args.out_dir.join(format!("boot{:0width$}.fasta", r + 1));
            write_output(&path, write_fasta(&a, 60))
        })
        .collect()
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Eval(a) => eval(a),
        Command::Bootstrap(a) => bootstrap(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
