use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or call argument is out of range. `field` is a dotted
    /// path such as `pulse.energy`.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("grid under-resolves the problem: {0}")]
    UnderResolved(String),

    #[error("time window too small: {0}")]
    WindowTooSmall(String),

    #[error("envelope is identically zero")]
    ZeroEnvelope,

    #[error("propagation failed for trajectory {trajectory} at z = {distance_m} m: {reason}")]
    Propagation {
        trajectory: usize,
        distance_m: f64,
        reason: String,
    },

    #[error("need at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),

    #[error("mean Stokes vector vanishes; the dark plane is undefined")]
    NoDarkPlane,

    #[error("mean field vanishes; no local-oscillator mode")]
    VanishingMeanField,

    #[error("no snapshot recorded at z = {0} m")]
    MissingSnapshot(f64),

    #[error("step size did not converge after {halvings} halvings (last change {last_change_db:.3} dB)")]
    NoConvergence { halvings: usize, last_change_db: f64 },

    #[error("incomplete dataset: {0}")]
    Incomplete(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than by a failed computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::UnderResolved(_)
                | Error::WindowTooSmall(_)
                | Error::Parse(_)
                | Error::TooFewTrajectories(_)
        )
    }
}
