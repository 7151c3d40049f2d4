//! Recovery of sparse real 1-D signals from their autocorrelation, or
//! equivalently from the magnitudes of their Fourier transform.
//!
//! Two recovery pipelines are provided:
//!
//! * [`combinatorial::algorithm1`] reconstructs the support from the set of
//!   nonzero autocorrelation lags and reads the values off a graph of
//!   uniquely realized distances.
//! * [`sdp_recovery::algorithm2`] solves a semidefinite relaxation for the
//!   support and an L1-minimizing lifted program for the values, using the
//!   ADMM solver in [`admm`].
//!
//! [`oracle`] enumerates every spectral factorization of small instances and
//! serves as ground truth; [`experiment`] runs seeded success-rate sweeps.

pub mod admm;
pub mod combinatorial;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod sdp_recovery;
pub mod signal;

pub use error::{FormatError, OracleError, RecoveryError, SolverError};
pub use signal::{
    autocorrelation, equivalent, fourier_magnitudes, random_sparse_signal, support_set, Autocorrelation,
    Signal, SparseModelParams, SupportSet, ValueDist,
};
