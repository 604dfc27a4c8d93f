//! The effect estimators: boundary effects via the distance transform,
//! overall direct via the individual score, overall indirect via the
//! nearest-neighbor-score transform, and the subset estimator for boundary
//! direct effects — each with optional bias correction and a menu of
//! variance flavors.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::bandwidth::{mse_optimal_h, pilot_bandwidth};
use crate::boundary::{build_boundary, effective_region_side, min_distance, EffectivePair, Side};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exposure::ExposureValue;
use crate::graph::DependencyGraph;
use crate::kernel_fit::{local_poly_fit, Kernel, LocalPolyFit};
use crate::numeric::normal_cdf;
use crate::variance::{
    bc_variance, bc_variance_cluster, bc_variance_hc0, cluster_robust_variance, hc0_variance,
    network_robust_variance,
};

/// Which effect to estimate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EffectKind {
    /// Boundary average effect contrasting effective treatments (d, g) and
    /// (d', g').
    Boundary { from: EffectivePair, to: EffectivePair },
    /// Univariate RDD on the individual score: the boundary overall direct
    /// effect.
    OverallDirect,
    /// Univariate RDD on the neighbor score closest to the cutoff: the
    /// overall indirect effect.
    OverallIndirect,
    /// Boundary direct effect for a fixed exposure, via subsetting to
    /// G_i = g; coincides with `Boundary { (1, g), (0, g) }`.
    BoundaryDirectSubset { g: ExposureValue },
}

impl EffectKind {
    pub fn label(&self) -> String {
        match self {
            EffectKind::Boundary { from, to } => format!(
                "tau({},{}|{},{})",
                from.0 as u8, from.1, to.0 as u8, to.1
            ),
            EffectKind::OverallDirect => "tau(1|0)".to_string(),
            EffectKind::OverallIndirect => "tau_indirect".to_string(),
            EffectKind::BoundaryDirectSubset { g } => format!("tau_direct_subset(g={g})"),
        }
    }
}

/// Variance flavors; names match the CLI (`network`, `iid`, `cluster`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    Network,
    Iid,
    Cluster,
}

impl VarianceMode {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "network" => Ok(VarianceMode::Network),
            "iid" => Ok(VarianceMode::Iid),
            "cluster" => Ok(VarianceMode::Cluster),
            other => Err(Error::InvalidConfig(format!(
                "unknown variance mode `{other}` (expected network | iid | cluster)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VarianceMode::Network => "network",
            VarianceMode::Iid => "iid",
            VarianceMode::Cluster => "cluster",
        }
    }
}

/// One estimation request.
#[derive(Debug, Clone)]
pub struct EffectRequest {
    pub kind: EffectKind,
    /// Polynomial order of the main fit (default 1; the pilot uses p + 1).
    pub p: usize,
    pub kernel: Kernel,
    /// Main bandwidth; MSE-optimal when absent.
    pub h: Option<f64>,
    /// Pilot bandwidth; rule-of-thumb at order p + 1 when absent.
    pub b: Option<f64>,
    pub bias_correct: bool,
    pub variance_modes: Vec<VarianceMode>,
    /// Whether isolated units (empty interference sets) may enter the
    /// overall direct fit. They are always excluded elsewhere.
    pub include_isolated: bool,
}

impl EffectRequest {
    pub fn new(kind: EffectKind) -> Self {
        EffectRequest {
            kind,
            p: 1,
            kernel: Kernel::Triangular,
            h: None,
            b: None,
            bias_correct: false,
            variance_modes: vec![VarianceMode::Network],
            include_isolated: false,
        }
    }
}

/// Point estimate with per-mode inference.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceRow {
    /// Center of the interval (τ̂, or τ̂_bc for the robust row).
    pub point: f64,
    pub se: BTreeMap<VarianceMode, f64>,
    pub ci95: BTreeMap<VarianceMode, (f64, f64)>,
    pub pvalue: BTreeMap<VarianceMode, f64>,
}

/// Full estimation output for one effect.
#[derive(Debug, Clone, Serialize)]
pub struct EffectEstimate {
    pub label: String,
    pub tau: f64,
    pub tau_bc: Option<f64>,
    /// Conventional inference: τ̂ with the main-fit sandwich.
    pub conventional: InferenceRow,
    /// Robust inference: τ̂_bc with the bias-correction-aware sandwich.
    pub robust: Option<InferenceRow>,
    pub h_used: f64,
    pub b_used: Option<f64>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub s_bar: usize,
    /// Fraction of used units whose distance value is shared with no other
    /// used unit.
    pub pct_unique_distance: f64,
    pub warnings: Vec<String>,
}

/// Distance transform: per-unit running variable and side for the requested
/// effect. Neither-side entries of `xt` are never read.
struct Transform {
    xt: Vec<f64>,
    sides: Vec<Side>,
    s_bar: usize,
    warnings: Vec<String>,
}

fn boundary_transform(data: &Dataset, from: EffectivePair, to: EffectivePair) -> Result<Transform> {
    if from == to {
        return Err(Error::IdenticalTreatments);
    }
    let n = data.n();
    // one boundary per neighborhood size present in the data
    let mut specs = HashMap::new();
    for i in 0..n {
        let s = data.sets.size(i);
        if s == 0 || specs.contains_key(&s) {
            continue;
        }
        match build_boundary(&data.mapping, s, from, to) {
            Ok(spec) => {
                specs.insert(s, Some(spec));
            }
            Err(Error::UnattainableExposure { .. }) => {
                // no unit of this size can realize both treatments
                specs.insert(s, None);
            }
            Err(e) => return Err(e),
        }
    }
    let s_bar = specs
        .values()
        .flatten()
        .map(|spec| spec.min_codim)
        .min()
        .ok_or_else(|| Error::UnattainableContrast {
            from: format!("{},{}", from.0 as u8, from.1),
            to: format!("{},{}", to.0 as u8, to.1),
        })?;
    let mut warnings = Vec::new();
    let heterogeneous = specs
        .values()
        .flatten()
        .any(|spec| spec.min_codim != s_bar);
    if heterogeneous {
        warnings.push(format!(
            "heterogeneous boundary codimension across neighborhood sizes; \
             estimation restricted to the lowest-codimension stratum (s_bar = {s_bar}), \
             where the pooled limit concentrates"
        ));
    }

    let mut xt = vec![f64::NAN; n];
    let mut sides = vec![Side::Neither; n];
    for i in 0..n {
        let s = data.sets.size(i);
        let Some(Some(spec)) = specs.get(&s) else { continue };
        if spec.min_codim != s_bar {
            continue;
        }
        let side = effective_region_side(&data.effective[i], from, to);
        if side == Side::Neither {
            continue;
        }
        let nbrs = data.neighbor_scores(i);
        xt[i] = min_distance(data.scores[i], &nbrs, spec, data.cutoff)?;
        sides[i] = side;
    }
    Ok(Transform { xt, sides, s_bar, warnings })
}

fn overall_direct_transform(data: &Dataset, include_isolated: bool) -> Transform {
    let n = data.n();
    let mut xt = vec![f64::NAN; n];
    let mut sides = vec![Side::Neither; n];
    let mut skipped = 0usize;
    for i in 0..n {
        if data.sets.is_isolated(i) && !include_isolated {
            skipped += 1;
            continue;
        }
        xt[i] = (data.scores[i] - data.cutoff).abs();
        sides[i] = if data.effective[i].d { Side::Plus } else { Side::Minus };
    }
    let mut warnings = Vec::new();
    if skipped > 0 {
        warnings.push(format!(
            "{skipped} isolated units excluded; pass include_isolated to keep them"
        ));
    }
    Transform { xt, sides, s_bar: 1, warnings }
}

fn overall_indirect_transform(data: &Dataset) -> Result<Transform> {
    let n = data.n();
    let mut xt = vec![f64::NAN; n];
    let mut sides = vec![Side::Neither; n];
    let mut skipped = 0usize;
    for i in 0..n {
        let nbrs = data.sets.set(i);
        if nbrs.is_empty() {
            skipped += 1;
            continue;
        }
        // neighbor score closest to the cutoff
        let mut best = f64::INFINITY;
        let mut x_min = f64::NAN;
        for &j in nbrs {
            let x = data.scores[j as usize];
            let gap = (x - data.cutoff).abs();
            if gap < best {
                best = gap;
                x_min = x;
            }
        }
        xt[i] = best;
        sides[i] = if x_min >= data.cutoff { Side::Plus } else { Side::Minus };
    }
    if skipped == n {
        return Err(Error::EmptyNeighborhood { unit: 0 });
    }
    let mut warnings = Vec::new();
    if skipped > 0 {
        warnings.push(format!(
            "{skipped} units with empty interference sets excluded from the indirect fit"
        ));
    }
    Ok(Transform { xt, sides, s_bar: 1, warnings })
}

fn subset_direct_transform(data: &Dataset, g: ExposureValue) -> Transform {
    let n = data.n();
    let mut xt = vec![f64::NAN; n];
    let mut sides = vec![Side::Neither; n];
    for i in 0..n {
        if data.effective[i].g != Some(g) {
            continue;
        }
        xt[i] = (data.scores[i] - data.cutoff).abs();
        sides[i] = if data.effective[i].d { Side::Plus } else { Side::Minus };
    }
    Transform { xt, sides, s_bar: 1, warnings: Vec::new() }
}

fn transform_for(data: &Dataset, req: &EffectRequest) -> Result<Transform> {
    match &req.kind {
        EffectKind::Boundary { from, to } => boundary_transform(data, *from, *to),
        EffectKind::OverallDirect => Ok(overall_direct_transform(data, req.include_isolated)),
        EffectKind::OverallIndirect => overall_indirect_transform(data),
        EffectKind::BoundaryDirectSubset { g } => Ok(subset_direct_transform(data, *g)),
    }
}

fn check_sides(sides: &[Side]) -> Result<()> {
    if !sides.contains(&Side::Plus) {
        return Err(Error::EmptySide { side: "plus" });
    }
    if !sides.contains(&Side::Minus) {
        return Err(Error::EmptySide { side: "minus" });
    }
    Ok(())
}

fn pct_unique(xt: &[f64], fp: &LocalPolyFit, fm: &LocalPolyFit) -> f64 {
    let mut counts: HashMap<u64, usize> = HashMap::new();
    let used_total = fp.used.len() + fm.used.len();
    if used_total == 0 {
        return 1.0;
    }
    for &i in fp.used.iter().chain(&fm.used) {
        *counts.entry(xt[i].to_bits()).or_insert(0) += 1;
    }
    let singles = fp
        .used
        .iter()
        .chain(&fm.used)
        .filter(|&&i| counts[&xt[i].to_bits()] == 1)
        .count();
    singles as f64 / used_total as f64
}

struct VarianceInputs<'a> {
    fp: &'a LocalPolyFit,
    fm: &'a LocalPolyFit,
    pilots: Option<(&'a LocalPolyFit, &'a LocalPolyFit, f64, f64)>,
    w: &'a DependencyGraph,
    clusters: Option<&'a [u32]>,
}

fn se_for_mode(inputs: &VarianceInputs, mode: VarianceMode, robust: bool) -> Result<f64> {
    let v = match (robust, mode) {
        (false, VarianceMode::Network) => network_robust_variance(inputs.fp, inputs.fm, inputs.w)?,
        (false, VarianceMode::Iid) => hc0_variance(inputs.fp, inputs.fm)?,
        (false, VarianceMode::Cluster) => {
            let labels = inputs
                .clusters
                .ok_or(Error::MissingClusterLabels("cluster variance mode"))?;
            cluster_robust_variance(inputs.fp, inputs.fm, labels)?
        }
        (true, mode) => {
            let (pp, pm, h, b) = inputs.pilots.expect("robust row requires pilot fits");
            match mode {
                VarianceMode::Network => bc_variance(inputs.fp, inputs.fm, pp, pm, inputs.w, h, b)?,
                VarianceMode::Iid => bc_variance_hc0(inputs.fp, inputs.fm, pp, pm, h, b)?,
                VarianceMode::Cluster => {
                    let labels = inputs
                        .clusters
                        .ok_or(Error::MissingClusterLabels("cluster variance mode"))?;
                    bc_variance_cluster(inputs.fp, inputs.fm, pp, pm, labels, h, b)?
                }
            }
        }
    };
    Ok(v.sqrt())
}

fn inference_row(point: f64, inputs: &VarianceInputs, modes: &[VarianceMode], robust: bool) -> Result<InferenceRow> {
    let mut se = BTreeMap::new();
    let mut ci95 = BTreeMap::new();
    let mut pvalue = BTreeMap::new();
    for &mode in modes {
        let s = se_for_mode(inputs, mode, robust)?;
        se.insert(mode, s);
        ci95.insert(mode, (point - 1.96 * s, point + 1.96 * s));
        pvalue.insert(mode, 2.0 * (1.0 - normal_cdf((point / s).abs())));
    }
    Ok(InferenceRow { point, se, ci95, pvalue })
}

/// Estimates one effect: builds the distance transform, selects bandwidths
/// when not supplied, fits both sides, and attaches the requested variance
/// flavors (plus bias correction when asked).
pub fn estimate(data: &Dataset, w: &DependencyGraph, req: &EffectRequest) -> Result<EffectEstimate> {
    if req.p < 1 {
        return Err(Error::InvalidConfig("polynomial order p must be >= 1".into()));
    }
    if let Some(h) = req.h {
        if h <= 0.0 || h.is_nan() {
            return Err(Error::NonPositiveBandwidth(h));
        }
    }
    let y = &data.outcomes;
    let t = transform_for(data, req)?;
    check_sides(&t.sides)?;
    let mut warnings = t.warnings;

    // bandwidths
    let h = match req.h {
        Some(h) => h,
        None => {
            let choice = mse_optimal_h(y, &t.xt, &t.sides, w, req.p, req.kernel, t.s_bar)?;
            warnings.extend(choice.flags.iter().map(|f| format!("bandwidth: {f}")));
            choice.h
        }
    };
    let need_pilot = req.bias_correct;
    let b = match (req.b, need_pilot) {
        (Some(b), _) => Some(b),
        // the pilot may never undershoot the main bandwidth: the correction
        // scales curvature noise by (h/b)^{p+1}
        (None, true) => Some(pilot_bandwidth(&t.xt, &t.sides, req.p + 1, t.s_bar)?.max(h)),
        (None, false) => None,
    };
    if let Some(b) = b {
        if b <= 0.0 || b.is_nan() {
            return Err(Error::NonPositiveBandwidth(b));
        }
        if b < h {
            warnings.push(format!("pilot bandwidth b = {b} below main bandwidth h = {h}"));
        }
    }

    let include_plus: Vec<bool> = t.sides.iter().map(|s| *s == Side::Plus).collect();
    let include_minus: Vec<bool> = t.sides.iter().map(|s| *s == Side::Minus).collect();
    let fp = local_poly_fit(y, &t.xt, &include_plus, h, req.p, req.kernel)?;
    let fm = local_poly_fit(y, &t.xt, &include_minus, h, req.p, req.kernel)?;
    let tau = fp.intercept() - fm.intercept();

    // bias correction via order-(p+1) pilots at bandwidth b
    let mut pilot_fits = None;
    let mut tau_bc = None;
    if req.bias_correct {
        let b = b.expect("pilot bandwidth resolved above");
        let pp = local_poly_fit(y, &t.xt, &include_plus, b, req.p + 1, req.kernel)?;
        let pm = local_poly_fit(y, &t.xt, &include_minus, b, req.p + 1, req.kernel)?;
        let (t_bc, _) = bias_correct(&fp, &fm, &pp, &pm, h, b);
        tau_bc = Some(t_bc);
        pilot_fits = Some((pp, pm));
    }

    let clusters = data.clusters.as_deref();
    let inputs = VarianceInputs {
        fp: &fp,
        fm: &fm,
        pilots: pilot_fits.as_ref().map(|(pp, pm)| (pp, pm, h, b.unwrap())),
        w,
        clusters,
    };
    let conventional = inference_row(tau, &inputs, &req.variance_modes, false)?;
    let robust = match tau_bc {
        Some(t_bc) => Some(inference_row(t_bc, &inputs, &req.variance_modes, true)?),
        None => None,
    };

    Ok(EffectEstimate {
        label: req.kind.label(),
        tau,
        tau_bc,
        conventional,
        robust,
        h_used: h,
        b_used: b,
        n_plus: fp.n_eff,
        n_minus: fm.n_eff,
        s_bar: t.s_bar,
        pct_unique_distance: pct_unique(&t.xt, &fp, &fm),
        warnings,
    })
}

/// Bias correction: with m̂± the order-(p+1) pilot estimate of
/// μ^{(p+1)}(0)/(p+1)! per side and ρ̂± = e₁ᵀΓ̂±⁻¹θ̂±_{p,p+1} from the main
/// fits, the estimated leading bias is h^{p+1}·(m̂⁺ρ̂₊ − m̂⁻ρ̂₋) and
/// τ̂_bc = τ̂ − that. Returns (τ̂_bc, B̂·h).
pub fn bias_correct(
    fit_plus: &LocalPolyFit,
    fit_minus: &LocalPolyFit,
    pilot_plus: &LocalPolyFit,
    pilot_minus: &LocalPolyFit,
    h: f64,
    b: f64,
) -> (f64, f64) {
    let p = fit_plus.p;
    debug_assert_eq!(pilot_plus.p, p + 1);
    let m_plus = pilot_plus.beta_scaled[p + 1] / b.powi((p + 1) as i32);
    let m_minus = pilot_minus.beta_scaled[p + 1] / b.powi((p + 1) as i32);
    let rho_plus = fit_plus.gamma_inv_col(0).dot(&fit_plus.theta(p + 1));
    let rho_minus = fit_minus.gamma_inv_col(0).dot(&fit_minus.theta(p + 1));
    let bias = h.powi((p + 1) as i32) * (m_plus * rho_plus - m_minus * rho_minus);
    let tau = fit_plus.intercept() - fit_minus.intercept();
    (tau - bias, bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{interference_from_clusters, DependencyGraph};
    use approx::assert_relative_eq;

    fn ev(k: i64) -> ExposureValue {
        ExposureValue::integer(k)
    }

    // Deterministic clustered dataset: groups of 3, scores from a hash mix,
    // outcomes with a known structure.
    fn toy_dataset(n: usize, quadratic: bool) -> (Dataset, DependencyGraph) {
        let labels: Vec<u32> = (0..n as u32).map(|i| i / 3).collect();
        let sets = interference_from_clusters(&labels, &[]).unwrap();
        let mut state = 0x853c49e6748fea9bu64;
        let mut unif = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let scores: Vec<f64> = (0..n).map(|_| 2.0 * unif() - 1.0).collect();
        let mapping = crate::exposure::ExposureMapping::OneTreated;
        let ets =
            crate::exposure::assign_effective_treatments(&scores, 0.0, &sets, &mapping).unwrap();
        let outcomes: Vec<f64> = (0..n)
            .map(|i| {
                let d = ets[i].d as u8 as f64;
                let g = ets[i].g.map(|v| v.as_f64()).unwrap_or(0.0);
                let x = scores[i];
                let curve = if quadratic { 2.0 * x * x } else { 0.0 };
                0.5 + 1.5 * d + g + 0.5 * x + curve + 0.1 * unif()
            })
            .collect();
        let data =
            Dataset::new(scores, outcomes, 0.0, sets, mapping, Some(labels.clone())).unwrap();
        let w = DependencyGraph::overlap(&data.sets);
        (data, w)
    }

    #[test]
    fn subset_estimator_matches_boundary_estimator_bitwise() {
        let (data, w) = toy_dataset(300, true);
        for g in [0, 1] {
            for bc in [false, true] {
                let mut r1 = EffectRequest::new(EffectKind::Boundary {
                    from: (true, ev(g)),
                    to: (false, ev(g)),
                });
                r1.bias_correct = bc;
                r1.variance_modes = vec![VarianceMode::Network, VarianceMode::Iid, VarianceMode::Cluster];
                let mut r2 =
                    EffectRequest::new(EffectKind::BoundaryDirectSubset { g: ev(g) });
                r2.bias_correct = bc;
                r2.variance_modes = r1.variance_modes.clone();
                let e1 = estimate(&data, &w, &r1).unwrap();
                let e2 = estimate(&data, &w, &r2).unwrap();
                assert_eq!(e1.tau.to_bits(), e2.tau.to_bits(), "g = {g}, bc = {bc}");
                assert_eq!(e1.n_plus, e2.n_plus);
                assert_eq!(e1.n_minus, e2.n_minus);
                assert_eq!(e1.h_used.to_bits(), e2.h_used.to_bits());
                if bc {
                    assert_eq!(
                        e1.tau_bc.unwrap().to_bits(),
                        e2.tau_bc.unwrap().to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn shift_equivariance() {
        let (data, w) = toy_dataset(240, true);
        let req = EffectRequest::new(EffectKind::OverallDirect);
        let base = estimate(&data, &w, &req).unwrap();

        let shifted = Dataset::new(
            data.scores.clone(),
            data.outcomes.iter().map(|y| y + 11.25).collect(),
            0.0,
            data.sets.clone(),
            data.mapping.clone(),
            data.clusters.clone(),
        )
        .unwrap();
        let moved = estimate(&shifted, &w, &req).unwrap();
        assert_relative_eq!(base.tau, moved.tau, epsilon = 1e-9);
        assert_relative_eq!(
            base.conventional.se[&VarianceMode::Network],
            moved.conventional.se[&VarianceMode::Network],
            max_relative = 1e-9
        );
    }

    #[test]
    fn reorder_invariance() {
        let (data, _) = toy_dataset(150, true);
        let n = data.n();
        // reverse the unit order, remapping interference sets and clusters
        let perm: Vec<usize> = (0..n).rev().collect();
        let mut inv = vec![0usize; n];
        for (new_idx, &old) in perm.iter().enumerate() {
            inv[old] = new_idx;
        }
        let sets = crate::graph::InterferenceSets::new(
            perm.iter()
                .map(|&old| {
                    let mut s: Vec<u32> =
                        data.sets.set(old).iter().map(|&j| inv[j as usize] as u32).collect();
                    s.sort_unstable();
                    s
                })
                .collect(),
        )
        .unwrap();
        let permuted = Dataset::new(
            perm.iter().map(|&i| data.scores[i]).collect(),
            perm.iter().map(|&i| data.outcomes[i]).collect(),
            0.0,
            sets,
            data.mapping.clone(),
            data.clusters.as_ref().map(|c| perm.iter().map(|&i| c[i]).collect()),
        )
        .unwrap();

        let req = EffectRequest::new(EffectKind::Boundary {
            from: (false, ev(1)),
            to: (false, ev(0)),
        });
        let w1 = DependencyGraph::overlap(&data.sets);
        let w2 = DependencyGraph::overlap(&permuted.sets);
        let e1 = estimate(&data, &w1, &req).unwrap();
        let e2 = estimate(&permuted, &w2, &req).unwrap();
        assert_relative_eq!(e1.tau, e2.tau, epsilon = 1e-10);
        assert_relative_eq!(e1.h_used, e2.h_used, epsilon = 1e-10);
        assert_relative_eq!(
            e1.conventional.se[&VarianceMode::Network],
            e2.conventional.se[&VarianceMode::Network],
            max_relative = 1e-9
        );
        assert_eq!(e1.n_plus, e2.n_plus);
    }

    #[test]
    fn s_bar_reported_from_boundary() {
        let (data, w) = toy_dataset(120, false);
        let req = EffectRequest::new(EffectKind::Boundary {
            from: (false, ev(1)),
            to: (false, ev(0)),
        });
        let e = estimate(&data, &w, &req).unwrap();
        assert_eq!(e.s_bar, 1);
        let req = EffectRequest::new(EffectKind::OverallDirect);
        assert_eq!(estimate(&data, &w, &req).unwrap().s_bar, 1);
    }

    #[test]
    fn unique_distances_detected() {
        let (data, w) = toy_dataset(300, false);
        // own-score distances are continuous draws: all unique
        let e = estimate(&data, &w, &EffectRequest::new(EffectKind::OverallDirect)).unwrap();
        assert_eq!(e.pct_unique_distance, 1.0);
        // indirect boundary in clusters shares distances by construction
        let req = EffectRequest::new(EffectKind::Boundary {
            from: (false, ev(1)),
            to: (false, ev(0)),
        });
        let e = estimate(&data, &w, &req).unwrap();
        assert!(e.pct_unique_distance < 1.0);
    }

    #[test]
    fn disjoint_sets_give_unique_distances() {
        // pairs (clusters of 2): each unit's distance is its partner's score
        // gap; all score draws distinct, sets pairwise disjoint
        let n = 80;
        let labels: Vec<u32> = (0..n as u32).map(|i| i / 2).collect();
        let sets = interference_from_clusters(&labels, &[]).unwrap();
        let mut state = 0xd1342543de82ef95u64;
        let mut unif = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let scores: Vec<f64> = (0..n).map(|_| 2.0 * unif() - 1.0).collect();
        let outcomes: Vec<f64> = scores.iter().map(|x| 1.0 + x + unif()).collect();
        let data = Dataset::new(
            scores,
            outcomes,
            0.0,
            sets,
            crate::exposure::ExposureMapping::OneTreated,
            Some(labels),
        )
        .unwrap();
        let w = DependencyGraph::overlap(&data.sets);
        let mut req = EffectRequest::new(EffectKind::Boundary {
            from: (false, ev(1)),
            to: (false, ev(0)),
        });
        req.h = Some(0.8);
        let e = estimate(&data, &w, &req).unwrap();
        assert_eq!(e.pct_unique_distance, 1.0);
    }

    #[test]
    fn bias_correct_is_identity_for_linear_outcomes() {
        let n = 200;
        let xt: Vec<f64> = (0..n).map(|i| 0.005 + 0.005 * i as f64).collect();
        let plus: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let minus: Vec<bool> = plus.iter().map(|p| !p).collect();
        let y: Vec<f64> = xt
            .iter()
            .zip(&plus)
            .map(|(x, p)| if *p { 2.0 + 3.0 * x } else { 1.0 - 0.5 * x })
            .collect();
        let (h, b) = (0.5, 0.8);
        let fp = local_poly_fit(&y, &xt, &plus, h, 1, Kernel::Triangular).unwrap();
        let fm = local_poly_fit(&y, &xt, &minus, h, 1, Kernel::Triangular).unwrap();
        let pp = local_poly_fit(&y, &xt, &plus, b, 2, Kernel::Triangular).unwrap();
        let pm = local_poly_fit(&y, &xt, &minus, b, 2, Kernel::Triangular).unwrap();
        let (tau_bc, bias) = bias_correct(&fp, &fm, &pp, &pm, h, b);
        let tau = fp.intercept() - fm.intercept();
        assert!(bias.abs() < 1e-8, "bias {bias}");
        assert_relative_eq!(tau_bc, tau, epsilon = 1e-8);
    }

    #[test]
    fn bias_correct_removes_quadratic_bias_exactly() {
        // Pure quadratic outcomes, no noise: the local-linear intercept is
        // biased by exactly h²·q·e₁ᵀΓ̂⁻¹θ̂ per side (sample version), and the
        // quadratic pilot recovers q exactly, so τ̂_bc equals the truth.
        let n = 400;
        let xt: Vec<f64> = (0..n).map(|i| 0.002 + 0.0025 * i as f64).collect();
        let plus: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let minus: Vec<bool> = plus.iter().map(|p| !p).collect();
        let (a_plus, q_plus) = (2.0, 4.3);
        let (a_minus, q_minus) = (1.0, -1.5);
        let y: Vec<f64> = xt
            .iter()
            .zip(&plus)
            .map(|(x, p)| {
                if *p { a_plus + 0.5 * x + q_plus * x * x } else { a_minus - 0.3 * x + q_minus * x * x }
            })
            .collect();
        let (h, b) = (0.4, 0.7);
        let fp = local_poly_fit(&y, &xt, &plus, h, 1, Kernel::Triangular).unwrap();
        let fm = local_poly_fit(&y, &xt, &minus, h, 1, Kernel::Triangular).unwrap();
        let pp = local_poly_fit(&y, &xt, &plus, b, 2, Kernel::Triangular).unwrap();
        let pm = local_poly_fit(&y, &xt, &minus, b, 2, Kernel::Triangular).unwrap();

        // analytic sample bias of the uncorrected estimator
        let rho_plus = fp.gamma_inv_col(0).dot(&fp.theta(2));
        let rho_minus = fm.gamma_inv_col(0).dot(&fm.theta(2));
        let expected_bias = h * h * (q_plus * rho_plus - q_minus * rho_minus);
        let tau = fp.intercept() - fm.intercept();
        let truth = a_plus - a_minus;
        assert_relative_eq!(tau - truth, expected_bias, max_relative = 1e-6);

        let (tau_bc, _) = bias_correct(&fp, &fm, &pp, &pm, h, b);
        assert_relative_eq!(tau_bc, truth, max_relative = 1e-8);
    }

    #[test]
    fn heterogeneous_codimension_routes_to_lowest_stratum() {
        // FractionTreated, contrast (0,1) vs (0,0): the boundary pins every
        // neighbor at the cutoff, so min codim = |S_i|. With group sizes
        // {3, 5} the codimensions are {2, 4}; only the size-3 stratum is used
        // and the report carries the caveat.
        let sizes = [3usize, 5];
        let mut labels = Vec::new();
        let mut group = 0u32;
        for _ in 0..30 {
            for &s in &sizes {
                labels.extend(std::iter::repeat(group).take(s));
                group += 1;
            }
        }
        let n = labels.len();
        let sets = interference_from_clusters(&labels, &[]).unwrap();
        let mut state = 0xc3a5_c85c_97cb_3127u64;
        let mut unif = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let scores: Vec<f64> = (0..n).map(|_| 2.0 * unif() - 1.0).collect();
        let outcomes: Vec<f64> = scores.iter().map(|x| 1.0 + x + 0.2 * unif()).collect();
        let data = Dataset::new(
            scores,
            outcomes,
            0.0,
            sets,
            crate::exposure::ExposureMapping::FractionTreated,
            Some(labels),
        )
        .unwrap();
        let mut req = EffectRequest::new(EffectKind::Boundary {
            from: (false, ev(1)),
            to: (false, ev(0)),
        });
        req.h = Some(2.5);
        let t = transform_for(&data, &req).unwrap();
        assert_eq!(t.s_bar, 2);
        assert_eq!(t.warnings.len(), 1);
        // every participating unit belongs to a size-3 group
        for i in 0..data.n() {
            if t.sides[i] != Side::Neither {
                assert_eq!(data.sets.size(i), 2);
            }
        }
    }

    #[test]
    fn empty_side_is_reported() {
        let (data, w) = toy_dataset(90, false);
        // a boundary whose "from" side cannot occur: (1, g) with g = 7
        let req = EffectRequest::new(EffectKind::Boundary {
            from: (true, ev(7)),
            to: (false, ev(0)),
        });
        assert!(matches!(
            estimate(&data, &w, &req),
            Err(Error::UnattainableContrast { .. })
        ));
    }

    #[test]
    fn quadratic_main_fit_with_cubic_pilot() {
        // p = 2 end to end: the pilot runs at order 3 and the report keeps
        // the same shape
        let (data, w) = toy_dataset(600, true);
        let mut req = EffectRequest::new(EffectKind::OverallDirect);
        req.p = 2;
        req.bias_correct = true;
        req.h = Some(0.8);
        req.b = Some(1.0);
        req.variance_modes = vec![VarianceMode::Network, VarianceMode::Iid];
        let est = estimate(&data, &w, &req).unwrap();
        assert!(est.tau.is_finite());
        assert!(est.tau_bc.unwrap().is_finite());
        assert!(est.robust.unwrap().se[&VarianceMode::Network] > 0.0);
        // order-0 polynomial is rejected
        let mut bad = EffectRequest::new(EffectKind::OverallDirect);
        bad.p = 0;
        assert!(matches!(estimate(&data, &w, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn isolated_units_excluded_by_default() {
        // 2 isolated units + clusters
        let labels = vec![0u32, 0, 0, 1, 1, 1, 2, 3];
        let sets = interference_from_clusters(&labels, &[]).unwrap();
        let scores = vec![0.5, -0.3, 0.8, -0.7, 0.2, -0.1, 0.9, -0.9];
        let outcomes = vec![1.0, 0.5, 1.2, 0.3, 0.9, 0.4, 2.0, -1.0];
        let data = Dataset::new(
            scores,
            outcomes,
            0.0,
            sets,
            crate::exposure::ExposureMapping::OneTreated,
            Some(labels),
        )
        .unwrap();
        let t = overall_direct_transform(&data, false);
        assert_eq!(t.sides[6], Side::Neither);
        assert_eq!(t.sides[7], Side::Neither);
        assert_eq!(t.warnings.len(), 1);
        let t = overall_direct_transform(&data, true);
        assert_eq!(t.sides[6], Side::Plus);
        assert_eq!(t.sides[7], Side::Minus);
    }

    #[test]
    fn indirect_transform_uses_nearest_neighbor_score() {
        let labels = vec![0u32, 0, 0];
        let sets = interference_from_clusters(&labels, &[]).unwrap();
        let data = Dataset::new(
            vec![1.0, -0.2, 3.1],
            vec![0.0, 0.0, 0.0],
            0.0,
            sets,
            crate::exposure::ExposureMapping::OneTreated,
            Some(labels),
        )
        .unwrap();
        let t = overall_indirect_transform(&data).unwrap();
        // unit 0's neighbors have scores (−0.2, 3.1): X^min = −0.2
        assert_relative_eq!(t.xt[0], 0.2, epsilon = 1e-15);
        assert_eq!(t.sides[0], Side::Minus);
        // unit 1's neighbors: (1.0, 3.1) → X^min = 1.0, Plus
        assert_relative_eq!(t.xt[1], 1.0, epsilon = 1e-15);
        assert_eq!(t.sides[1], Side::Plus);
    }
}
