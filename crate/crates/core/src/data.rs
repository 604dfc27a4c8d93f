//! The per-unit dataset consumed by the estimators: scores, outcomes,
//! interference structure, and the derived effective treatments.

use crate::error::{Error, Result};
use crate::exposure::{assign_effective_treatments, EffectiveTreatment, ExposureMapping};
use crate::graph::InterferenceSets;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub scores: Vec<f64>,
    pub outcomes: Vec<f64>,
    pub cutoff: f64,
    pub sets: InterferenceSets,
    pub mapping: ExposureMapping,
    /// Derived (D_i, G_i); `g` is `None` for isolated units.
    pub effective: Vec<EffectiveTreatment>,
    /// Compact cluster ids, when the interference structure came from
    /// clusters; enables the cluster-robust variance comparator.
    pub clusters: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(
        scores: Vec<f64>,
        outcomes: Vec<f64>,
        cutoff: f64,
        sets: InterferenceSets,
        mapping: ExposureMapping,
        clusters: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = scores.len();
        if outcomes.len() != n || sets.n() != n {
            return Err(Error::InvalidConfig(format!(
                "inconsistent lengths: {} scores, {} outcomes, {} interference sets",
                n,
                outcomes.len(),
                sets.n()
            )));
        }
        if let Some(c) = &clusters {
            if c.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "{} cluster labels for {n} units",
                    c.len()
                )));
            }
        }
        for (i, v) in scores.iter().chain(outcomes.iter()).enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "non-finite value at position {i}"
                )));
            }
        }
        let effective = assign_effective_treatments(&scores, cutoff, &sets, &mapping)?;
        Ok(Dataset { scores, outcomes, cutoff, sets, mapping, effective, clusters })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// Scores of unit i's neighbors, in interference-set order.
    pub fn neighbor_scores(&self, i: usize) -> Vec<f64> {
        self.sets.set(i).iter().map(|&j| self.scores[j as usize]).collect()
    }
}
