use thiserror::Error;

/// Errors surfaced by the estimation library. Each variant carries enough
/// context to be reported verbatim by callers (the CLI maps them to stable
/// machine-readable codes).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unit {unit} has an empty interference set; exposure is undefined")]
    EmptyNeighborhood { unit: usize },

    #[error("exposure value {value} is not attainable for neighborhood size {size}")]
    UnattainableExposure { value: String, size: usize },

    #[error("effective treatments must differ to define a boundary")]
    IdenticalTreatments,

    #[error("no neighborhood size in the data attains both ({from}) and ({to})")]
    UnattainableContrast { from: String, to: String },

    #[error("neighborhood size {size} exceeds the enumeration cap ({cap} configurations)")]
    EnumerationCap { size: usize, cap: usize },

    #[error("point has {got} coordinates but the boundary expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error(
        "degenerate local fit: {n_eff} effective observations (need at least {min_needed}) \
         within bandwidth {h}"
    )]
    InsufficientSupport { n_eff: usize, min_needed: usize, h: f64 },

    #[error("singular weighted design: Gram condition number {cond:.3e} with {n_eff} observations")]
    SingularFit { cond: f64, n_eff: usize },

    #[error("no {side} observations available for the requested effect")]
    EmptySide { side: &'static str },

    #[error("variance estimate is non-positive ({value:.6e}); dependency graph may be misspecified")]
    NonPositiveVariance { value: f64 },

    #[error("cluster labels are required for {0}")]
    MissingClusterLabels(&'static str),

    #[error("distance sample on the {side} side has no spread; cannot form a pilot bandwidth")]
    DegenerateDistances { side: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("{failed} of {reps} replications failed (threshold {threshold}): {example}")]
    TooManyFailures { failed: usize, reps: usize, threshold: usize, example: String },
}

pub type Result<T> = std::result::Result<T, Error>;
