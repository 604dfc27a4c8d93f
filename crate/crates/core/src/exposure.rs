//! Exposure mappings from neighbor treatment vectors to discrete exposure
//! values, effective-treatment assignment, and enumeration of the treatment
//! configurations compatible with a given exposure value.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::InterferenceSets;

/// Exact rational exposure value. Keeping exposures as reduced fractions means
/// grouping by exposure (e.g. under `FractionTreated`) never suffers
/// floating-point mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExposureValue {
    num: i64,
    den: i64,
}

impl ExposureValue {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
        ExposureValue { num: sign * num / g, den: sign * den / g }
    }

    pub fn integer(k: i64) -> Self {
        ExposureValue { num: k, den: 1 }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn numer(&self) -> i64 {
        self.num
    }

    pub fn denom(&self) -> i64 {
        self.den
    }

    /// Parses "1", "-2", "3/4", or exact decimal strings like "0.75".
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidConfig(format!("cannot parse exposure value `{s}`"));
        if let Some((a, b)) = s.split_once('/') {
            let num: i64 = a.trim().parse().map_err(|_| bad())?;
            let den: i64 = b.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            return Ok(ExposureValue::new(num, den));
        }
        if let Some((int, frac)) = s.split_once('.') {
            let neg = int.starts_with('-');
            let int_part: i64 = if int.is_empty() || int == "-" {
                0
            } else {
                int.parse().map_err(|_| bad())?
            };
            if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let scale = 10i64.pow(frac.len() as u32);
            let frac_part: i64 = frac.parse().map_err(|_| bad())?;
            let signed_frac = if neg { -frac_part } else { frac_part };
            return Ok(ExposureValue::new(int_part * scale + signed_frac, scale));
        }
        let k: i64 = s.parse().map_err(|_| bad())?;
        Ok(ExposureValue::integer(k))
    }
}

impl fmt::Display for ExposureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl PartialOrd for ExposureValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExposureValue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Maximum number of neighbor-treatment configurations a single enumeration
/// may touch (2^20). The built-in mappings group configurations by treated
/// count, so their effective limit is usually far higher.
pub const ENUMERATION_CAP: usize = 1 << 20;

type CustomFn = Arc<dyn Fn(&[bool]) -> ExposureValue + Send + Sync>;

/// Exposure mapping g(·): collapses the neighbors' treatment vector into a
/// discrete exposure value. The three built-ins are permutation symmetric;
/// custom mappings are pure functions of the binary vector, so their range is
/// finite for every neighborhood size by construction.
#[derive(Clone)]
pub enum ExposureMapping {
    /// 1 if any neighbor is treated, else 0.
    OneTreated,
    /// Number of treated neighbors.
    SumTreated,
    /// Fraction of treated neighbors.
    FractionTreated,
    Custom(CustomFn),
}

impl fmt::Debug for ExposureMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExposureMapping::OneTreated => write!(f, "OneTreated"),
            ExposureMapping::SumTreated => write!(f, "SumTreated"),
            ExposureMapping::FractionTreated => write!(f, "FractionTreated"),
            ExposureMapping::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ExposureMapping {
    /// Mapping by config name: "one_treated" | "sum" | "fraction".
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "one_treated" => Ok(ExposureMapping::OneTreated),
            "sum" => Ok(ExposureMapping::SumTreated),
            "fraction" => Ok(ExposureMapping::FractionTreated),
            other => Err(Error::InvalidConfig(format!(
                "unknown exposure mapping `{other}` (expected one_treated | sum | fraction)"
            ))),
        }
    }

    fn is_builtin(&self) -> bool {
        !matches!(self, ExposureMapping::Custom(_))
    }

    /// Exposure value for a treated count k out of s neighbors (built-ins).
    fn value_for_count(&self, k: usize, s: usize) -> ExposureValue {
        match self {
            ExposureMapping::OneTreated => ExposureValue::integer((k > 0) as i64),
            ExposureMapping::SumTreated => ExposureValue::integer(k as i64),
            ExposureMapping::FractionTreated => ExposureValue::new(k as i64, s as i64),
            ExposureMapping::Custom(_) => unreachable!("count shortcut is builtin-only"),
        }
    }
}

/// Effective treatment (D_i, G_i). `g` is `None` for units with an empty
/// interference set, whose neighborhood exposure is left undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectiveTreatment {
    pub d: bool,
    pub g: Option<ExposureValue>,
}

/// G = g(d_S). Errors when the unit has no neighbors.
pub fn apply_exposure(map: &ExposureMapping, d_s: &[bool]) -> Result<ExposureValue> {
    if d_s.is_empty() {
        return Err(Error::EmptyNeighborhood { unit: usize::MAX });
    }
    match map {
        ExposureMapping::Custom(f) => Ok(f(d_s)),
        builtin => {
            let k = d_s.iter().filter(|&&t| t).count();
            Ok(builtin.value_for_count(k, d_s.len()))
        }
    }
}

/// Per-unit effective treatment under the sharp rule D_i = 1(X_i ≥ c) and
/// G_i = g(D_S_i). Units with empty interference sets get `g = None`.
pub fn assign_effective_treatments(
    scores: &[f64],
    cutoff: f64,
    sets: &InterferenceSets,
    map: &ExposureMapping,
) -> Result<Vec<EffectiveTreatment>> {
    if scores.len() != sets.n() {
        return Err(Error::InvalidConfig(format!(
            "{} scores but {} interference sets",
            scores.len(),
            sets.n()
        )));
    }
    let treated: Vec<bool> = scores.iter().map(|&x| x >= cutoff).collect();
    let mut out = Vec::with_capacity(scores.len());
    for i in 0..scores.len() {
        let s = sets.set(i);
        let g = if s.is_empty() {
            None
        } else {
            let d_s: Vec<bool> = s.iter().map(|&j| treated[j as usize]).collect();
            Some(apply_exposure(map, &d_s)?)
        };
        out.push(EffectiveTreatment { d: treated[i], g });
    }
    Ok(out)
}

/// One (own treatment, neighbor treatment vector) configuration.
pub type TreatmentConfig = (bool, Vec<bool>);

/// All configurations (d, d_S) with |S| = s whose exposure equals g. Empty
/// when g is unattainable at size s.
pub fn enumerate_configs(
    map: &ExposureMapping,
    s: usize,
    d: bool,
    g: ExposureValue,
) -> Result<Vec<TreatmentConfig>> {
    if s == 0 {
        return Err(Error::EmptyNeighborhood { unit: usize::MAX });
    }
    if map.is_builtin() {
        let counts: Vec<usize> =
            (0..=s).filter(|&k| map.value_for_count(k, s) == g).collect();
        let total = counts
            .iter()
            .fold(0usize, |acc, &k| acc.saturating_add(binomial(s, k)));
        if total > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { size: s, cap: ENUMERATION_CAP });
        }
        let mut out = Vec::with_capacity(total);
        for &k in &counts {
            push_count_configs(s, k, d, &mut out);
        }
        Ok(out)
    } else {
        if s > ENUMERATION_CAP.trailing_zeros() as usize {
            return Err(Error::EnumerationCap { size: s, cap: ENUMERATION_CAP });
        }
        let mut out = Vec::new();
        for bits in 0u64..(1u64 << s) {
            let v: Vec<bool> = (0..s).map(|z| bits >> z & 1 == 1).collect();
            if apply_exposure(map, &v)? == g {
                out.push((d, v));
            }
        }
        Ok(out)
    }
}

/// Whether exposure g is attainable with s neighbors.
pub fn attainable(map: &ExposureMapping, s: usize, g: ExposureValue) -> Result<bool> {
    if map.is_builtin() {
        Ok((0..=s).any(|k| map.value_for_count(k, s) == g))
    } else {
        Ok(!enumerate_configs(map, s, false, g)?.is_empty())
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

// All s-length binary vectors with exactly k ones, lexicographic.
fn push_count_configs(s: usize, k: usize, d: bool, out: &mut Vec<TreatmentConfig>) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut v = vec![false; s];
        for &i in &idx {
            v[i] = true;
        }
        out.push((d, v));
        if k == 0 {
            return;
        }
        // next combination
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < s - (k - pos) {
                idx[pos] += 1;
                for later in pos + 1..k {
                    idx[later] = idx[later - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return;
            }
        }
    }
}
