//! Data-generating processes and the Monte Carlo replication harness.
//!
//! Replications draw from per-replication ChaCha streams split off a master
//! seed, so results are bitwise identical regardless of worker count, and
//! accumulation happens through an ordered reduction.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate, EffectKind, EffectRequest, VarianceMode};
use crate::exposure::ExposureMapping;
use crate::graph::{
    interference_from_clusters, interference_from_network, DependencyGraph, GraphMode,
    InterferenceSets, Network,
};
use crate::numeric::{normal_cdf_centered, normal_quantile_centered};

/// Inverse-CDF draw from a truncated normal: Φ⁻¹(Φ(lo) + u·(Φ(hi)−Φ(lo))),
/// computed in centered form so that symmetric bounds give exactly 0 at
/// u = 1/2. Samples lie strictly inside [lo, hi].
pub fn truncated_normal(u: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo < hi, "invalid truncation bounds");
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let ca = normal_cdf_centered(a);
    let cb = normal_cdf_centered(b);
    let pc = ca + u * (cb - ca);
    mean + sd * normal_quantile_centered(pc)
}

// Standard normal draw from a uniform in [0, 1); the zero edge is nudged to
// the smallest positive probability so the quantile stays finite.
fn std_normal_from_uniform(u: f64) -> f64 {
    let u = if u > 0.0 { u } else { 0.5 * f64::EPSILON };
    normal_quantile_centered(u - 0.5)
}

/// Watts–Strogatz small-world network: a ring lattice with `degree`/2
/// neighbors per side, then every edge endpoint independently rewired with
/// probability `rewire_p` to a uniform non-duplicate, non-self target.
pub fn watts_strogatz(n: usize, degree: usize, rewire_p: f64, rng: &mut ChaCha8Rng) -> Network {
    assert!(degree.is_multiple_of(2), "degree must be even");
    assert!(n > degree, "need n > degree");
    let half = degree / 2;
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(n * half);
    let mut present = std::collections::HashSet::with_capacity(n * half);
    let key = |a: u32, b: u32| if a < b { (a, b) } else { (b, a) };
    for i in 0..n as u32 {
        for j in 1..=half as u32 {
            let e = (i, (i + j) % n as u32);
            edges.push(e);
            present.insert(key(e.0, e.1));
        }
    }
    #[allow(clippy::needless_range_loop)] // edges[idx] is mutated in place
    for idx in 0..edges.len() {
        for endpoint in 0..2 {
            if rng.random::<f64>() >= rewire_p {
                continue;
            }
            let (a, b) = edges[idx];
            let (keep, _old) = if endpoint == 0 { (b, a) } else { (a, b) };
            for _ in 0..100 {
                let t = rng.random_range(0..n as u32);
                if t == keep || present.contains(&key(keep, t)) {
                    continue;
                }
                present.remove(&key(edges[idx].0, edges[idx].1));
                edges[idx] = if endpoint == 0 { (t, keep) } else { (keep, t) };
                present.insert(key(keep, t));
                break;
            }
        }
    }
    Network::from_edges(n, &edges).expect("rewiring preserves a simple graph")
}

/// Simulation scenarios.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Units clustered in equal groups; interference within the cluster.
    ClusterOneTreated { group_size: usize },
    /// Small-world network; interference is the network neighborhood.
    SmallWorld { rewire_p: f64, degree: usize },
    /// Groups cycling through the listed sizes.
    VaryingGroups { sizes: Vec<usize> },
}

impl Scenario {
    pub fn label(&self) -> String {
        match self {
            Scenario::ClusterOneTreated { group_size } => format!("cluster{group_size}"),
            Scenario::SmallWorld { rewire_p, degree } => {
                format!("smallworld(p={rewire_p},deg={degree})")
            }
            Scenario::VaryingGroups { sizes } => format!("varying{sizes:?}"),
        }
    }
}

/// Coefficients of the simulated outcome equation
/// Y = a + d·D + g·G + x·X + x2t·D·X² + x2u·(1−D)·X² + xbar·mean(X_S) + ε,
/// ε = (D·et + (1−D)·eu)·(2·mean(u_S) + u).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeModel {
    pub intercept: f64,
    pub d_coef: f64,
    pub g_coef: f64,
    pub x_coef: f64,
    pub x2_treated: f64,
    pub x2_untreated: f64,
    pub xbar_coef: f64,
    pub err_treated: f64,
    pub err_untreated: f64,
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel {
            intercept: 0.5,
            d_coef: 1.5,
            g_coef: 1.0,
            x_coef: 0.5,
            x2_treated: 4.3,
            x2_untreated: -1.5,
            xbar_coef: 0.3,
            err_treated: 1.0,
            err_untreated: -1.4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DgpConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    pub exposure: ExposureMapping,
    pub outcome: OutcomeModel,
}

impl DgpConfig {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        DgpConfig {
            scenario,
            n,
            seed,
            exposure: ExposureMapping::OneTreated,
            outcome: OutcomeModel::default(),
        }
    }
}

/// One simulated dataset plus the pieces needed to rebuild or audit it.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub data: Dataset,
    /// Raw network when the scenario has one (for k-hop dependency graphs).
    pub network: Option<Network>,
    /// Latent error shocks, retained for debugging only.
    pub latent_u: Vec<f64>,
}

fn cluster_labels(scenario: &Scenario, n: usize) -> Result<Option<Vec<u32>>> {
    match scenario {
        Scenario::ClusterOneTreated { group_size } => {
            if *group_size < 2 {
                return Err(Error::InvalidConfig("group_size must be >= 2".into()));
            }
            if !n.is_multiple_of(*group_size) {
                return Err(Error::InvalidConfig(format!(
                    "n = {n} not divisible by group_size = {group_size}"
                )));
            }
            Ok(Some((0..n).map(|i| (i / group_size) as u32).collect()))
        }
        Scenario::VaryingGroups { sizes } => {
            if sizes.is_empty() || sizes.iter().any(|&s| s < 2) {
                return Err(Error::InvalidConfig("group sizes must all be >= 2".into()));
            }
            let mut labels = Vec::with_capacity(n);
            let mut group = 0u32;
            let mut cursor = 0usize;
            while labels.len() < n {
                let size = sizes[cursor % sizes.len()];
                if labels.len() + size > n {
                    return Err(Error::InvalidConfig(format!(
                        "n = {n} does not fit an integer number of groups cycling {sizes:?}"
                    )));
                }
                labels.extend(std::iter::repeat_n(group, size));
                group += 1;
                cursor += 1;
            }
            Ok(Some(labels))
        }
        Scenario::SmallWorld { .. } => Ok(None),
    }
}

/// Generates replication `rep` of the configured DGP. Stream `rep + 1` of the
/// master seed feeds the network, then the scores, then the error shocks.
pub fn generate_replication(cfg: &DgpConfig, rep: u64) -> Result<SimulatedDataset> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep + 1);

    let labels = cluster_labels(&cfg.scenario, n)?;
    let (sets, network): (InterferenceSets, Option<Network>) = match &cfg.scenario {
        Scenario::SmallWorld { rewire_p, degree } => {
            if !(0.0..=1.0).contains(rewire_p) {
                return Err(Error::InvalidConfig("rewire_p must lie in [0, 1]".into()));
            }
            let net = watts_strogatz(n, *degree, *rewire_p, &mut rng);
            (interference_from_network(&net), Some(net))
        }
        _ => (
            interference_from_clusters(labels.as_ref().expect("cluster scenario"), &[])?,
            None,
        ),
    };

    let scores: Vec<f64> = (0..n)
        .map(|_| truncated_normal(rng.random::<f64>(), 0.0, 1.0, -5.0, 5.0))
        .collect();
    let latent_u: Vec<f64> = (0..n).map(|_| std_normal_from_uniform(rng.random::<f64>())).collect();

    let effective =
        crate::exposure::assign_effective_treatments(&scores, 0.0, &sets, &cfg.exposure)?;
    let outcomes = outcomes_from_model(&cfg.outcome, &scores, &latent_u, &sets, &effective);

    let data = Dataset::new(scores, outcomes, 0.0, sets, cfg.exposure.clone(), labels)?;
    Ok(SimulatedDataset { data, network, latent_u })
}

/// Generates the first replication; identical (cfg, seed) gives a bitwise
/// identical dataset.
pub fn generate(cfg: &DgpConfig) -> Result<SimulatedDataset> {
    generate_replication(cfg, 0)
}

/// Evaluates the outcome equation; exposed so audits can confirm stored
/// outcomes reproduce exactly from (X, D, G, u).
pub fn outcomes_from_model(
    model: &OutcomeModel,
    scores: &[f64],
    latent_u: &[f64],
    sets: &InterferenceSets,
    effective: &[crate::exposure::EffectiveTreatment],
) -> Vec<f64> {
    let n = scores.len();
    (0..n)
        .map(|i| {
            let d = effective[i].d;
            let df = d as u8 as f64;
            let g = effective[i].g.map(|v| v.as_f64()).unwrap_or(0.0);
            let x = scores[i];
            let nbrs = sets.set(i);
            let (xbar, ubar) = if nbrs.is_empty() {
                (0.0, 0.0)
            } else {
                let m = nbrs.len() as f64;
                (
                    nbrs.iter().map(|&j| scores[j as usize]).sum::<f64>() / m,
                    nbrs.iter().map(|&j| latent_u[j as usize]).sum::<f64>() / m,
                )
            };
            let err_scale = if d { model.err_treated } else { model.err_untreated };
            let eps = err_scale * (2.0 * ubar + latent_u[i]);
            model.intercept
                + model.d_coef * df
                + model.g_coef * g
                + model.x_coef * x
                + model.x2_treated * df * x * x
                + model.x2_untreated * (1.0 - df) * x * x
                + model.xbar_coef * xbar
                + eps
        })
        .collect()
}

/// Analytic truth for an effect under the outcome model: quadratic terms
/// vanish at the boundary (the own score is pinned at the cutoff whenever the
/// own treatment differs, and cancels otherwise), leaving
/// Δd·d_coef + Δg·g_coef. The overall indirect truth depends on the neighbor
/// structure and is not provided.
pub fn true_effect(model: &OutcomeModel, kind: &EffectKind) -> Option<f64> {
    match kind {
        EffectKind::OverallDirect => Some(model.d_coef),
        EffectKind::BoundaryDirectSubset { .. } => Some(model.d_coef),
        EffectKind::Boundary { from, to } => {
            let dd = from.0 as i8 - to.0 as i8;
            let dg = from.1.as_f64() - to.1.as_f64();
            Some(dd as f64 * model.d_coef + dg * model.g_coef)
        }
        EffectKind::OverallIndirect => None,
    }
}

/// Builds the dependency graph for a simulated dataset.
pub fn dependency_graph_for(sim: &SimulatedDataset, mode: GraphMode) -> Result<DependencyGraph> {
    match mode {
        GraphMode::Overlap => Ok(DependencyGraph::overlap(&sim.data.sets)),
        GraphMode::Identity => Ok(DependencyGraph::identity(sim.data.n())),
        GraphMode::ClusterBlock => {
            let labels = sim
                .data
                .clusters
                .as_ref()
                .ok_or(Error::MissingClusterLabels("cluster_block graph mode"))?;
            Ok(DependencyGraph::cluster_block(labels))
        }
        GraphMode::KHop(k) => {
            let net = sim
                .network
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("k_hop graph mode needs a network".into()))?;
            DependencyGraph::k_hop(net, k)
        }
    }
}

/// One effect's Monte Carlo summary row; columns mirror the reference table
/// layout (bias, SD, mean SE and coverage per variance mode, mean effective
/// sample sizes, share of unique distances).
#[derive(Debug, Clone, Serialize)]
pub struct McRow {
    pub label: String,
    pub bias_corrected: bool,
    pub truth: Option<f64>,
    pub mean_point: f64,
    pub bias: Option<f64>,
    pub sd: f64,
    pub mean_se: BTreeMap<VarianceMode, f64>,
    pub coverage: BTreeMap<VarianceMode, Option<f64>>,
    pub mean_n_plus: f64,
    pub mean_n_minus: f64,
    pub mean_pct_unique: f64,
    pub reps_used: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<McRow>,
}

struct RepEffect {
    point: f64,
    se: BTreeMap<VarianceMode, f64>,
    n_plus: usize,
    n_minus: usize,
    pct_unique: f64,
}

/// Runs `reps` replications of the DGP, estimating every requested effect
/// with the supplied truths for bias and coverage. Per-effect failures are
/// tolerated up to 1% of replications and excluded from the summary.
pub fn run_monte_carlo(
    cfg: &DgpConfig,
    reps: usize,
    effects: &[EffectRequest],
    graph_mode: GraphMode,
    truths: &[Option<f64>],
) -> Result<McReport> {
    assert!(reps >= 1);
    assert_eq!(effects.len(), truths.len(), "one truth slot per effect");

    let per_rep: Vec<Vec<std::result::Result<RepEffect, String>>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let all_failed =
                |msg: String| (0..effects.len()).map(|_| Err(msg.clone())).collect::<Vec<_>>();
            let sim = match generate_replication(cfg, rep) {
                Ok(s) => s,
                Err(e) => return all_failed(format!("generate: {e}")),
            };
            let w = match dependency_graph_for(&sim, graph_mode) {
                Ok(w) => w,
                Err(e) => return all_failed(format!("dependency graph: {e}")),
            };
            effects
                .iter()
                .map(|req| {
                    estimate(&sim.data, &w, req)
                        .map(|est| {
                            let (point, se) = if req.bias_correct {
                                let robust = est.robust.as_ref().expect("bc row present");
                                (est.tau_bc.expect("bc estimate"), robust.se.clone())
                            } else {
                                (est.tau, est.conventional.se.clone())
                            };
                            RepEffect {
                                point,
                                se,
                                n_plus: est.n_plus,
                                n_minus: est.n_minus,
                                pct_unique: est.pct_unique_distance,
                            }
                        })
                        .map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let threshold = reps / 100;
    let mut rows = Vec::with_capacity(effects.len());
    for (k, req) in effects.iter().enumerate() {
        let mut points = Vec::with_capacity(reps);
        let mut se_sums: BTreeMap<VarianceMode, f64> = BTreeMap::new();
        let mut cover_counts: BTreeMap<VarianceMode, usize> = BTreeMap::new();
        let mut n_plus_sum = 0.0;
        let mut n_minus_sum = 0.0;
        let mut pct_sum = 0.0;
        let mut failures = 0usize;
        let mut example = String::new();
        for rep_result in &per_rep {
            match &rep_result[k] {
                Ok(r) => {
                    points.push(r.point);
                    n_plus_sum += r.n_plus as f64;
                    n_minus_sum += r.n_minus as f64;
                    pct_sum += r.pct_unique;
                    for (&mode, &se) in &r.se {
                        *se_sums.entry(mode).or_insert(0.0) += se;
                        if let Some(truth) = truths[k] {
                            if (r.point - truth).abs() <= 1.96 * se {
                                *cover_counts.entry(mode).or_insert(0) += 1;
                            } else {
                                cover_counts.entry(mode).or_insert(0);
                            }
                        }
                    }
                }
                Err(e) => {
                    failures += 1;
                    if example.is_empty() {
                        example = e.clone();
                    }
                }
            }
        }
        if failures > threshold {
            return Err(Error::TooManyFailures { failed: failures, reps, threshold, example });
        }
        let used = points.len();
        if used == 0 {
            return Err(Error::Simulation("no successful replications".into()));
        }
        let mean = points.iter().sum::<f64>() / used as f64;
        let sd = if used < 2 {
            0.0
        } else {
            (points.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (used as f64 - 1.0))
                .sqrt()
        };
        let mean_se: BTreeMap<VarianceMode, f64> =
            se_sums.iter().map(|(&m, &s)| (m, s / used as f64)).collect();
        let coverage: BTreeMap<VarianceMode, Option<f64>> = req
            .variance_modes
            .iter()
            .map(|&m| {
                let c = truths[k]
                    .map(|_| cover_counts.get(&m).copied().unwrap_or(0) as f64 / used as f64);
                (m, c)
            })
            .collect();
        rows.push(McRow {
            label: req.kind.label(),
            bias_corrected: req.bias_correct,
            truth: truths[k],
            mean_point: mean,
            bias: truths[k].map(|t| mean - t),
            sd,
            mean_se,
            coverage,
            mean_n_plus: n_plus_sum / used as f64,
            mean_n_minus: n_minus_sum / used as f64,
            mean_pct_unique: pct_sum / used as f64,
            reps_used: used,
            failures,
        });
    }
    Ok(McReport {
        scenario: cfg.scenario.label(),
        n: cfg.n,
        reps,
        seed: cfg.seed,
        rows,
    })
}

/// The three tabled effects of the reference designs, in table order:
/// overall direct, boundary direct (1,0 | 0,0), boundary indirect
/// (0,1 | 0,0) — all under the one-treated exposure mapping.
pub fn tabled_effects(bias_correct: bool, with_cluster_mode: bool) -> Vec<EffectRequest> {
    use crate::exposure::ExposureValue as Ev;
    let mut modes = vec![VarianceMode::Network, VarianceMode::Iid];
    if with_cluster_mode {
        modes.push(VarianceMode::Cluster);
    }
    let kinds = [
        EffectKind::OverallDirect,
        EffectKind::Boundary { from: (true, Ev::integer(0)), to: (false, Ev::integer(0)) },
        EffectKind::Boundary { from: (false, Ev::integer(1)), to: (false, Ev::integer(0)) },
    ];
    kinds
        .into_iter()
        .map(|kind| {
            let mut req = EffectRequest::new(kind);
            req.bias_correct = bias_correct;
            req.variance_modes = modes.clone();
            req
        })
        .collect()
}

/// Truths matching `tabled_effects` under the given outcome model.
pub fn tabled_truths(model: &OutcomeModel, effects: &[EffectRequest]) -> Vec<Option<f64>> {
    effects.iter().map(|req| true_effect(model, &req.kind)).collect()
}
