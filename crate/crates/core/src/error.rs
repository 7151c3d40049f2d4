use thiserror::Error;

/// Invalid values or malformed signal / autocorrelation files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("signal length must be positive")]
    EmptySignal,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("entry index {index} out of range for length {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("entry indices must be strictly increasing (at {0})")]
    UnsortedEntries(usize),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("not an autocorrelation: {0}")]
    InvalidLags(&'static str),
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Failures of the ADMM solver and its linear algebra.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("residuals diverged after {iters} iterations")]
    Diverged { iters: usize },
}

/// Failures of the spectral factorization oracle.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("polynomial has zero leading coefficient or no coefficients")]
    DegeneratePolynomial,
    #[error("root finder did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("roots could not be grouped into conjugate/reciprocal structure")]
    RootPairingFailed,
}

/// Declared recovery failures. A recovery routine either returns a signal
/// whose autocorrelation matches the input or one of these.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("fewer than three distinct positive lags")]
    TooSmall,
    #[error("no candidate for the second extreme distance")]
    NoCandidate,
    #[error("survivor set does not reproduce the lag set")]
    SupportInconsistent,
    #[error("good-pair graph has no odd cycle")]
    NoOddCycle,
    #[error("good-pair graph is disconnected")]
    Disconnected,
    #[error("odd-cycle weight ratio is not positive ({0:e})")]
    NegativeSquare(f64),
    #[error("reconstructed autocorrelation differs by {0:e}")]
    VerificationFailed(f64),
    #[error("support diagonal has no clear top-k separation")]
    AmbiguousSupport,
    #[error("lifted solution is not rank one (eigenvalue ratio {0:e})")]
    NotRankOne(f64),
    #[error("support program is infeasible: {0}")]
    InfeasibleSpec(String),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
}

impl RecoveryError {
    /// Every kind, in the order used for report columns.
    pub const KINDS: [&'static str; 11] = [
        "too_small",
        "no_candidate",
        "support_inconsistent",
        "no_odd_cycle",
        "disconnected",
        "negative_square",
        "verification_failed",
        "ambiguous_support",
        "not_rank_one",
        "infeasible_spec",
        "solver",
    ];

    /// Machine-readable kind, one of [`RecoveryError::KINDS`].
    pub fn kind(&self) -> &'static str {
        match self {
            RecoveryError::TooSmall => "too_small",
            RecoveryError::NoCandidate => "no_candidate",
            RecoveryError::SupportInconsistent => "support_inconsistent",
            RecoveryError::NoOddCycle => "no_odd_cycle",
            RecoveryError::Disconnected => "disconnected",
            RecoveryError::NegativeSquare(_) => "negative_square",
            RecoveryError::VerificationFailed(_) => "verification_failed",
            RecoveryError::AmbiguousSupport => "ambiguous_support",
            RecoveryError::NotRankOne(_) => "not_rank_one",
            RecoveryError::InfeasibleSpec(_) => "infeasible_spec",
            RecoveryError::Solver(_) => "solver",
        }
    }
}
