use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} of {matrix} sums to {sum}, expected 1")]
    NonStochasticRow {
        matrix: &'static str,
        row: usize,
        sum: f64,
    },
    #[error("entry {value} of {matrix} lies outside [0, 1]")]
    EntryOutOfRange { matrix: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("pim flag is set but the rows of {matrix} differ")]
    PimFlagMismatch { matrix: &'static str },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("operation requires parent-independent mutation")]
    UnsupportedMutationModel,
    #[error("singular Pade approximant: {0}")]
    SingularPade(String),
    #[error("{what} = {requested} exceeds the cap {cap}")]
    SizeLimit {
        what: &'static str,
        requested: usize,
        cap: usize,
    },
    #[error("rejection sampler exceeded {cap} redraws")]
    RejectionCap { cap: usize },
    #[error("state space reached {states} states, cap is {cap}; try a smaller sample")]
    StateCap { states: usize, cap: usize },
    #[error("linear solver did not converge: residual {residual:e} after {iterations} iterations")]
    SolverDivergence { residual: f64, iterations: usize },
    #[error("relative error undefined for an exact value of zero")]
    ZeroExact,
    #[error("ensemble has {got} trajectories, at least {need} required")]
    InsufficientEnsemble { got: usize, need: usize },
    #[error("alpha = binom(c,2)/rho = {alpha} must be below 1")]
    AlphaOverflow { alpha: f64 },
    #[error("sample must contain at least one lineage")]
    EmptySample,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse grouping of errors, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Validation,
    Numerical,
    Capacity,
    ModelValidity,
    Io,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        use Error::*;
        match self {
            NonStochasticRow { .. }
            | EntryOutOfRange { .. }
            | NegativeRate { .. }
            | NonPositiveRate { .. }
            | PimFlagMismatch { .. }
            | InvalidShape(_)
            | UnsupportedMutationModel
            | EmptySample
            | InvalidArgument(_) => ErrorFamily::Validation,
            SingularPade(_) | SolverDivergence { .. } | ZeroExact => ErrorFamily::Numerical,
            SizeLimit { .. } | RejectionCap { .. } | StateCap { .. } => ErrorFamily::Capacity,
            InsufficientEnsemble { .. } | AlphaOverflow { .. } => ErrorFamily::ModelValidity,
            Io(_) | Json(_) => ErrorFamily::Io,
        }
    }

    /// Short variant name, stable across releases.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            NonStochasticRow { .. } => "NonStochasticRow",
            EntryOutOfRange { .. } => "EntryOutOfRange",
            NegativeRate { .. } => "NegativeRate",
            NonPositiveRate { .. } => "NonPositiveRate",
            PimFlagMismatch { .. } => "PimFlagMismatch",
            InvalidShape(_) => "InvalidShape",
            UnsupportedMutationModel => "UnsupportedMutationModel",
            SingularPade(_) => "SingularPade",
            SizeLimit { .. } => "SizeLimit",
            RejectionCap { .. } => "RejectionCap",
            StateCap { .. } => "StateCap",
            SolverDivergence { .. } => "SolverDivergence",
            ZeroExact => "ZeroExact",
            InsufficientEnsemble { .. } => "InsufficientEnsemble",
            AlphaOverflow { .. } => "AlphaOverflow",
            EmptySample => "EmptySample",
            InvalidArgument(_) => "InvalidArgument",
            Io(_) => "Io",
            Json(_) => "Json",
        }
    }
}
