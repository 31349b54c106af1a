//! Error type shared by all apportionment operations.

use thiserror::Error;

/// Errors produced by construction, estimation, prediction, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent input (dimension mismatches, bad flags,
    /// labels that do not resolve, profiles that are not observed where an
    /// operation requires them to be, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A matrix that must have full column rank does not, at the configured
    /// tolerance.
    #[error("rank-deficient {what}: smallest singular value {sigma_min:.3e} at tolerance {tol:.3e}")]
    RankDeficient {
        /// Which matrix failed the check.
        what: String,
        /// Its smallest singular value.
        sigma_min: f64,
        /// The tolerance it was compared against.
        tol: f64,
    },

    /// A covariance operator required to be positive definite is singular.
    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    /// The population calibration degenerated (no anisotropic residual
    /// structure, or a shrinkage weight of zero).
    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),
}

impl Error {
    /// Whether this error is a numerical failure (rank or singularity) as
    /// opposed to an input-validation failure. The CLI maps numerical
    /// failures to exit code 3 and validation failures to exit code 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::SingularCovariance(_)
                | Error::DegenerateCalibration(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
