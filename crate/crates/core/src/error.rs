use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown sample preset `{0}` (expected R or NPs)")]
    UnknownPreset(String),
    #[error("unknown parameter key `{0}`")]
    UnknownParameter(String),
    #[error("invalid parameter value for `{key}`: {value}")]
    BadParameterValue { key: String, value: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("calibration file: {0}")]
    Calibration(String),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("explicit heat step dt = {dt:.3e} s exceeds stability bound {bound:.3e} s")]
    Unstable { dt: f64, bound: f64 },
    #[error("series solve: no bracketing interval for v_applied = {v_applied} V")]
    NoBracket { v_applied: f64 },
    #[error("at sweep voltage {voltage:.4} V: {source}")]
    AtVoltage {
        voltage: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown pulse train descriptor `{0}`")]
    UnknownTrain(String),
    #[error("compliance current {0:.3e} A outside [1 uA, 1 mA]")]
    ComplianceRange(f64),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
