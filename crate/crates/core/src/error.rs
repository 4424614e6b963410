use thiserror::Error;

/// Errors raised by the holonomy toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("rank deficient: numerical rank {rank} < {requested} requested vectors")]
    RankDeficient { rank: usize, requested: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid tolerance {name} = {value}: must lie in (0, 1e-3)")]
    InvalidTolerance { name: &'static str, value: f64 },

    #[error("basis columns are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("svd did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("subspace already fills the ambient space; complement is empty")]
    FullSpace,

    #[error("state is orthogonal to the target subspace (probability {probability:e})")]
    OrthogonalOutcome { probability: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("index {index} out of range 1..={max}")]
    BadIndex { index: usize, max: usize },

    #[error("loop is degenerate: states {index} and {next} are orthogonal")]
    DegenerateLoop { index: usize, next: usize },

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("amplitude {index} has zero magnitude")]
    ZeroAmplitude { index: usize },

    #[error("measurement graph has no absorbing return to start")]
    NonAbsorbing,

    #[error("branch probabilities depend on the state at node {node}")]
    StateDependent { node: usize },

    #[error("invalid measurement graph: {0}")]
    InvalidGraph(String),

    #[error("state has weight {weight:e} outside the start subspace")]
    UnsupportedState { weight: f64 },

    #[error("trace did not complete; no holonomy to extract")]
    IncompleteTrace,

    #[error("graph carries no target holonomy")]
    MissingTarget,
}

pub type Result<T> = std::result::Result<T, Error>;
