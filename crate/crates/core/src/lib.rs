//! Regression discontinuity estimation under network interference.
//!
//! The estimators here target causal effects at effective-treatment
//! boundaries: exposure mappings collapse neighbors' treatments into a
//! discrete exposure, the boundary between two effective treatments is a
//! union of cutoff-aligned linear pieces, and outcomes are fit by local
//! polynomial regression on the minimum distance to that boundary, with
//! dependency-graph-robust sandwich variances, plug-in bandwidths, and
//! optional bias correction. A Monte Carlo harness reproduces the reference
//! simulation designs.

pub mod bandwidth;
pub mod boundary;
pub mod data;
pub mod error;
pub mod estimators;
pub mod exposure;
pub mod graph;
pub mod kernel_fit;
pub mod numeric;
pub mod report;
pub mod simulate;
pub mod variance;

pub use bandwidth::BandwidthChoice;
pub use boundary::{BoundaryPiece, BoundarySpec, Constraint, Side};
pub use data::Dataset;
pub use error::{Error, Result};
pub use estimators::{EffectEstimate, EffectKind, EffectRequest, VarianceMode};
pub use exposure::{EffectiveTreatment, ExposureMapping, ExposureValue};
pub use graph::{DependencyGraph, GraphMode, InterferenceSets, Network};
pub use kernel_fit::{Kernel, LocalPolyFit};
pub use simulate::{DgpConfig, McReport, Scenario, SimulatedDataset};
