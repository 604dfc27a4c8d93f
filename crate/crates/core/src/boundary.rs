//! Effective-treatment boundaries between two effective treatments, built as
//! unions of sign-patterned linear pieces, plus the minimum-distance
//! transform that turns the multiscore point (X_i, X_S_i) into the
//! one-dimensional running variable of the estimator.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::exposure::{
    enumerate_configs, EffectiveTreatment, ExposureMapping, ExposureValue,
};

/// Per-coordinate constraint of one boundary piece, over ({i} ∪ S_i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constraint {
    FixedAtCutoff,
    AtLeastCutoff,
    AtMostCutoff,
}

/// One linear piece of the boundary: a sign pattern with its codimension
/// (the number of coordinates pinned at the cutoff).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryPiece {
    /// Constraint per coordinate; index 0 is the unit's own score, then the
    /// neighbors in interference-set order.
    pub pattern: Vec<Constraint>,
    pub codim: usize,
}

/// The boundary between effective treatments (d, g) and (d', g') at a fixed
/// neighborhood size: a deduplicated union of pieces. Dominated pieces are
/// retained (they never affect the minimum) so the construction is auditable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySpec {
    pub pieces: Vec<BoundaryPiece>,
    /// s̄: the minimal codimension across pieces; governs the effective
    /// convergence rate n·h^s̄.
    pub min_codim: usize,
    /// Number of coordinates (|S_i| + 1).
    pub arity: usize,
}

/// An effective treatment (d, g) used to select one side of a boundary.
pub type EffectivePair = (bool, ExposureValue);

/// Which side of the boundary a unit's realized effective treatment puts it
/// on. `Neither` units are excluded from the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
    Neither,
}

/// Constructs the boundary between (d, g) and (d', g') for neighborhood size
/// s by pairing every configuration compatible with each side: coordinates
/// where the two configurations disagree are pinned at the cutoff, and
/// agreeing coordinates keep their common side.
pub fn build_boundary(
    map: &ExposureMapping,
    s: usize,
    from: EffectivePair,
    to: EffectivePair,
) -> Result<BoundarySpec> {
    if from == to {
        return Err(Error::IdenticalTreatments);
    }
    let from_cfgs = enumerate_configs(map, s, from.0, from.1)?;
    if from_cfgs.is_empty() {
        return Err(Error::UnattainableExposure { value: from.1.to_string(), size: s });
    }
    let to_cfgs = enumerate_configs(map, s, to.0, to.1)?;
    if to_cfgs.is_empty() {
        return Err(Error::UnattainableExposure { value: to.1.to_string(), size: s });
    }

    let mut seen: BTreeSet<Vec<Constraint>> = BTreeSet::new();
    for (d1, v1) in &from_cfgs {
        for (d2, v2) in &to_cfgs {
            let mut pattern = Vec::with_capacity(s + 1);
            pattern.push(constraint_for(*d1, *d2));
            for z in 0..s {
                pattern.push(constraint_for(v1[z], v2[z]));
            }
            seen.insert(pattern);
        }
    }
    let pieces: Vec<BoundaryPiece> = seen
        .into_iter()
        .map(|pattern| {
            let codim =
                pattern.iter().filter(|c| **c == Constraint::FixedAtCutoff).count();
            BoundaryPiece { pattern, codim }
        })
        .collect();
    let min_codim = pieces.iter().map(|p| p.codim).min().expect("nonempty boundary");
    debug_assert!(min_codim >= 1);
    Ok(BoundarySpec { pieces, min_codim, arity: s + 1 })
}

fn constraint_for(a: bool, b: bool) -> Constraint {
    match (a, b) {
        (true, true) => Constraint::AtLeastCutoff,
        (false, false) => Constraint::AtMostCutoff,
        _ => Constraint::FixedAtCutoff,
    }
}

/// Minimum Euclidean distance from the multiscore point (x_self, x_neighbors)
/// to the boundary, in the score's native units. Free coordinates project
/// onto half-lines anchored at the cutoff, so each piece contributes
/// sqrt(Σ_fixed (x_z−c)² + Σ_≥ max(0, c−x_z)² + Σ_≤ max(0, x_z−c)²).
pub fn min_distance(
    x_self: f64,
    x_neighbors: &[f64],
    spec: &BoundarySpec,
    cutoff: f64,
) -> Result<f64> {
    min_distance_impl(x_self, x_neighbors, spec, cutoff, None)
}

/// `min_distance` with a per-coordinate rescaling hook: deviation z is
/// multiplied by `scale[z]` before entering the norm (index 0 is the own
/// score). Unit scales reproduce `min_distance`.
pub fn min_distance_scaled(
    x_self: f64,
    x_neighbors: &[f64],
    spec: &BoundarySpec,
    cutoff: f64,
    scale: &[f64],
) -> Result<f64> {
    if scale.len() != spec.arity {
        return Err(Error::DimensionMismatch { expected: spec.arity, got: scale.len() });
    }
    min_distance_impl(x_self, x_neighbors, spec, cutoff, Some(scale))
}

fn min_distance_impl(
    x_self: f64,
    x_neighbors: &[f64],
    spec: &BoundarySpec,
    cutoff: f64,
    scale: Option<&[f64]>,
) -> Result<f64> {
    if x_neighbors.len() + 1 != spec.arity {
        return Err(Error::DimensionMismatch {
            expected: spec.arity,
            got: x_neighbors.len() + 1,
        });
    }
    let mut best = f64::INFINITY;
    for piece in &spec.pieces {
        let mut sumsq = 0.0;
        let mut nonzero = 0usize;
        let mut single = 0.0;
        for (z, c) in piece.pattern.iter().enumerate() {
            let x = if z == 0 { x_self } else { x_neighbors[z - 1] };
            let mut dev = match c {
                Constraint::FixedAtCutoff => x - cutoff,
                Constraint::AtLeastCutoff => {
                    if x < cutoff { cutoff - x } else { 0.0 }
                }
                Constraint::AtMostCutoff => {
                    if x > cutoff { x - cutoff } else { 0.0 }
                }
            };
            if let Some(s) = scale {
                dev *= s[z];
            }
            if dev != 0.0 {
                nonzero += 1;
                single = dev;
                sumsq += dev * dev;
            }
        }
        // With a single active coordinate, |dev| avoids the sqrt round trip:
        // boundary direct effects then reduce bitwise to |x_self − c|.
        let dist = match nonzero {
            0 => 0.0,
            1 => single.abs(),
            _ => sumsq.sqrt(),
        };
        if dist < best {
            best = dist;
        }
    }
    Ok(best)
}

/// Which side of the (from | to) contrast a realized effective treatment
/// falls on. Units with undefined exposure are never on either side.
pub fn effective_region_side(
    et: &EffectiveTreatment,
    from: EffectivePair,
    to: EffectivePair,
) -> Side {
    match et.g {
        Some(g) if (et.d, g) == from => Side::Plus,
        Some(g) if (et.d, g) == to => Side::Minus,
        _ => Side::Neither,
    }
}

/// Human-readable rendering of the pieces, e.g.
/// `x_i <= c, x_j1 = c, x_j2 = c  (codim 2)`.
pub fn describe(spec: &BoundarySpec) -> String {
    let mut out = String::new();
    for piece in &spec.pieces {
        let mut parts = Vec::with_capacity(piece.pattern.len());
        for (z, c) in piece.pattern.iter().enumerate() {
            let name = if z == 0 { "x_i".to_string() } else { format!("x_j{z}") };
            let rel = match c {
                Constraint::FixedAtCutoff => "=",
                Constraint::AtLeastCutoff => ">=",
                Constraint::AtMostCutoff => "<=",
            };
            parts.push(format!("{name} {rel} c"));
        }
        out.push_str(&parts.join(", "));
        out.push_str(&format!("  (codim {})\n", piece.codim));
    }
    out.push_str(&format!("min codim: {}\n", spec.min_codim));
    out
}
