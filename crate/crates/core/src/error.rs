use thiserror::Error;

/// Errors surfaced by the laboratory's operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("region outside truncated domain")]
    RegionOutsideDomain,
    #[error("sphere outside truncated domain")]
    SphereOutsideDomain,
    #[error("fields live on different spaces")]
    SpaceMismatch,
    #[error("interior only")]
    BoundaryHessian,
    #[error("not compactly supported")]
    NotCompactlySupported,
    #[error("w not uniformly positive")]
    NotUniformlyPositive,
    #[error("critical point: decomposition undefined")]
    CriticalPoint,
    #[error("no regular points at level")]
    EmptyLevelSample,
    #[error("stability equivalence unavailable")]
    StabilityEquivalenceUnavailable,
    #[error("invalid capacitor pair")]
    InvalidCapacitorPair,
    #[error("non-nested exhaustion at index {0}")]
    NonNestedExhaustion(usize),
    #[error("insufficient range")]
    InsufficientRange,
    #[error("cutoff radius must exceed 1")]
    InvalidCutoffRadius,
    #[error("insufficient samples: need {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("fewer than 3 profile nodes")]
    ProfileTooShort,
    #[error("degenerate linearization")]
    DegenerateLinearization,
    #[error("linear solver stagnated: residual {residual:.3e} after {iterations} iterations")]
    LinearSolveStagnation { residual: f64, iterations: usize },
    #[error("eigen iteration stagnated; residual history: {history:?}")]
    EigenStagnation { history: Vec<f64> },
    #[error("newton did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("flow trajectory from seed {seed} left the regular region")]
    FlowLeftRegular { seed: usize },
    #[error("flow trajectory from seed {seed} exited the truncated domain")]
    FlowLeftDomain { seed: usize },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("field file error: {0}")]
    FieldFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
