use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Real-time conversion requested while the saturation parameter is zero.
    #[error("saturation is zero: the time scale t0 is infinite")]
    ZeroSaturation,

    #[error("distribution mass {mass:.3e} lies above the cache top energy {eps0_max:.6e}")]
    CacheTooShort { mass: f64, eps0_max: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("density matrix lost positivity at t = {t:.6e} s: {detail}")]
    Positivity { t: f64, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
