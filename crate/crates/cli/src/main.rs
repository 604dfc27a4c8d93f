//! `netrdd`: regression discontinuity estimation under network interference.
//!
//! Subcommands: `estimate` (CSV in, effect estimates out), `simulate`
//! (Monte Carlo tables), `boundary` (print boundary pieces), `diagnose`
//! (ingestion and dependency-graph diagnostics, optional dataset export).

mod config;
mod error;
mod ingest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use netrdd::boundary::{build_boundary, describe};
use netrdd::estimators::estimate;
use netrdd::exposure::{ExposureMapping, ExposureValue};
use netrdd::graph::{DependencyGraph, GraphMode};
use netrdd::report;
use netrdd::simulate::{
    dependency_graph_for, tabled_effects, tabled_truths, run_monte_carlo, DgpConfig, Scenario,
};

use config::RunConfig;
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "netrdd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the configured effects from a CSV dataset.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study on a built-in scenario.
    Simulate(SimulateArgs),
    /// Print the effective-treatment boundary between two treatments.
    Boundary(BoundaryArgs),
    /// Ingest data, print diagnostics, optionally export the dataset.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct OverrideArgs {
    /// Kernel: triangular | uniform | epanechnikov
    #[arg(long)]
    kernel: Option<String>,
    /// Main bandwidth override (applies to every effect)
    #[arg(long)]
    h: Option<f64>,
    /// Pilot bandwidth override (applies to every effect)
    #[arg(long)]
    b: Option<f64>,
    /// Comma-separated variance modes: network,iid,cluster
    #[arg(long)]
    variance: Option<String>,
    /// Dependency graph: overlap | cluster_block | identity | k_hop:<k>
    #[arg(long)]
    graph_mode: Option<String>,
    /// Drop units with more than this many neighbors
    #[arg(long)]
    max_neighbors: Option<usize>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Unit-level CSV file
    #[arg(long)]
    data: PathBuf,
    /// Optional edge list: one `i j` id pair per line
    #[arg(long)]
    edges: Option<PathBuf>,
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output prefix; writes <prefix>.estimates.csv and .estimates.json
    #[arg(long, default_value = "netrdd_out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario: cluster | smallworld | varying
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 3000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Cluster size for the `cluster` scenario
    #[arg(long, default_value_t = 3)]
    group_size: usize,
    /// Comma-separated group sizes for the `varying` scenario
    #[arg(long, default_value = "3,4,5,6,8")]
    sizes: String,
    /// Rewiring probability for the `smallworld` scenario
    #[arg(long, default_value_t = 0.15)]
    rewire_p: f64,
    /// Node degree for the `smallworld` scenario
    #[arg(long, default_value_t = 4)]
    degree: usize,
    /// Use the bias-corrected estimators
    #[arg(long)]
    bc: bool,
    /// Output prefix; writes <prefix>.mc.csv and .mc.json
    #[arg(long, default_value = "netrdd_mc")]
    out: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct BoundaryArgs {
    /// Exposure mapping: one_treated | sum | fraction
    #[arg(long, default_value = "one_treated")]
    exposure: String,
    /// Neighborhood size |S_i|
    #[arg(long)]
    size: usize,
    /// Effective treatment "d,g", e.g. "0,1" or "0,1/2"
    #[arg(long)]
    from: String,
    /// Effective treatment "d,g"
    #[arg(long)]
    to: String,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    /// Export the ingested dataset under this prefix (round-trip audit)
    #[arg(long)]
    export: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate(args) => run_estimate(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Boundary(args) => run_boundary(args),
        Command::Diagnose(args) => run_diagnose(args),
    };
    if let Err(e) = outcome {
        let payload = serde_json::json!({ "code": e.code(), "message": e.to_string() });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}

/// Writes through a temp file in the same directory, then renames, so no
/// output is ever partially written.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, ov: &OverrideArgs) {
    if let Some(k) = &ov.kernel {
        cfg.kernel = k.clone();
    }
    if let Some(v) = &ov.variance {
        cfg.variance = v.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(g) = &ov.graph_mode {
        cfg.graph_mode = g.clone();
    }
    if let Some(m) = ov.max_neighbors {
        cfg.max_neighbors = Some(m);
    }
    if let Some(s) = ov.seed {
        cfg.seed = Some(s);
    }
    for spec in &mut cfg.effects {
        if ov.h.is_some() {
            spec.h = ov.h;
        }
        if ov.b.is_some() {
            spec.b = ov.b;
        }
    }
}

fn build_w(data: &netrdd::Dataset, mode: GraphMode) -> Result<DependencyGraph> {
    match mode {
        GraphMode::Overlap => Ok(DependencyGraph::overlap(&data.sets)),
        GraphMode::Identity => Ok(DependencyGraph::identity(data.n())),
        GraphMode::ClusterBlock => {
            let labels = data.clusters.as_ref().ok_or_else(|| {
                CliError::Config("cluster_block graph mode needs cluster labels".into())
            })?;
            Ok(DependencyGraph::cluster_block(labels))
        }
        GraphMode::KHop(_) => Err(CliError::Config(
            "k_hop graph mode requires an edge-list network; use the simulate command or overlap mode"
                .into(),
        )),
    }
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    apply_overrides(&mut cfg, &args.overrides);
    cfg.validate()?;
    let requests = cfg.requests()?;

    let ing = ingest::ingest(&args.data, args.edges.as_deref(), &cfg)?;
    print!("{}", ing.diagnostics);

    let mode = cfg.graph_mode()?;
    let w = match mode {
        GraphMode::KHop(k) => {
            let edges = ing.edges.clone().ok_or_else(|| {
                CliError::Config("k_hop graph mode requires an edge list".into())
            })?;
            let net = netrdd::graph::Network::from_edges(ing.dataset.n(), &edges)
                .map_err(CliError::Estimate)?;
            DependencyGraph::k_hop(&net, k).map_err(CliError::Estimate)?
        }
        other => build_w(&ing.dataset, other)?,
    };

    let mut estimates = Vec::with_capacity(requests.len());
    for req in &requests {
        let est = estimate(&ing.dataset, &w, req).map_err(|source| {
            CliError::EffectFailed { label: req.kind.label(), source }
        })?;
        for warning in &est.warnings {
            eprintln!("warning [{}]: {warning}", est.label);
        }
        estimates.push(est);
    }

    let csv_path = args.out.with_extension("estimates.csv");
    let json_path = args.out.with_extension("estimates.json");
    write_atomic(&csv_path, report::estimates_csv(&estimates).as_bytes())?;
    write_atomic(&json_path, report::estimates_json(&estimates).as_bytes())?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("bad group size `{t}`")))
        })
        .collect()
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let scenario = match args.scenario.as_str() {
        "cluster" | "cluster3" => Scenario::ClusterOneTreated { group_size: args.group_size },
        "smallworld" => Scenario::SmallWorld { rewire_p: args.rewire_p, degree: args.degree },
        "varying" => Scenario::VaryingGroups { sizes: parse_sizes(&args.sizes)? },
        other => {
            return Err(CliError::Config(format!(
                "unknown scenario `{other}` (expected cluster | smallworld | varying)"
            )))
        }
    };
    let seed = args.overrides.seed.unwrap_or(1);
    let cfg = DgpConfig::new(scenario, args.n, seed);

    let has_clusters = !matches!(cfg.scenario, Scenario::SmallWorld { .. });
    let mut effects = tabled_effects(args.bc, has_clusters);
    if let Some(k) = &args.overrides.kernel {
        let kernel =
            netrdd::Kernel::from_name(k).map_err(|e| CliError::Config(e.to_string()))?;
        for req in &mut effects {
            req.kernel = kernel;
        }
    }
    if let Some(v) = &args.overrides.variance {
        let modes: Vec<_> = v
            .split(',')
            .map(|s| {
                netrdd::estimators::VarianceMode::from_name(s.trim())
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect::<Result<_>>()?;
        if !has_clusters && modes.contains(&netrdd::estimators::VarianceMode::Cluster) {
            return Err(CliError::Config(
                "cluster variance mode needs a clustered scenario".into(),
            ));
        }
        for req in &mut effects {
            req.variance_modes = modes.clone();
        }
    }
    for req in &mut effects {
        if args.overrides.h.is_some() {
            req.h = args.overrides.h;
        }
        if args.overrides.b.is_some() {
            req.b = args.overrides.b;
        }
    }
    let graph_mode = match &args.overrides.graph_mode {
        Some(name) => config::parse_graph_mode(name)?,
        None => GraphMode::Overlap,
    };
    // dependency_graph_for validates mode availability per scenario
    let probe = netrdd::simulate::generate(&cfg).map_err(CliError::Estimate)?;
    dependency_graph_for(&probe, graph_mode).map_err(CliError::Estimate)?;

    let truths = tabled_truths(&cfg.outcome, &effects);
    let report_data = run_monte_carlo(&cfg, args.reps, &effects, graph_mode, &truths)
        .map_err(|e| CliError::Simulate(e.to_string()))?;

    let csv_path = args.out.with_extension("mc.csv");
    let json_path = args.out.with_extension("mc.json");
    write_atomic(&csv_path, report::mc_csv(&report_data).as_bytes())?;
    write_atomic(&json_path, report::mc_json(&report_data).as_bytes())?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

fn parse_pair(text: &str) -> Result<(bool, ExposureValue)> {
    let (d, g) = text
        .split_once(',')
        .ok_or_else(|| CliError::Config(format!("expected `d,g`, got `{text}`")))?;
    let d = match d.trim() {
        "0" => false,
        "1" => true,
        other => return Err(CliError::Config(format!("bad treatment value `{other}`"))),
    };
    let g = ExposureValue::parse(g).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((d, g))
}

fn run_boundary(args: BoundaryArgs) -> Result<()> {
    let map =
        ExposureMapping::from_name(&args.exposure).map_err(|e| CliError::Config(e.to_string()))?;
    let from = parse_pair(&args.from)?;
    let to = parse_pair(&args.to)?;
    let spec = build_boundary(&map, args.size, from, to)?;
    println!(
        "boundary between (d={}, g={}) and (d={}, g={}) at |S_i| = {}:",
        from.0 as u8, from.1, to.0 as u8, to.1, args.size
    );
    print!("{}", describe(&spec));
    Ok(())
}

fn run_diagnose(args: DiagnoseArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    apply_overrides(&mut cfg, &args.overrides);
    let ing = ingest::ingest(&args.data, args.edges.as_deref(), &cfg)?;
    print!("{}", ing.diagnostics);

    let w = build_w(&ing.dataset, cfg.graph_mode()?)?;
    let d = w.degree_diagnostics();
    println!("dependency graph ({}):", cfg.graph_mode);
    println!("  mean |N_i|: {:.4}", d.mean_degree);
    println!("  third moment of |N_i|: {:.4}", d.third_moment);
    println!("  mean 3-walks: {:.4}", d.mean_walks3);

    if let Some(prefix) = &args.export {
        for path in ingest::export(&ing, &cfg, prefix)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
