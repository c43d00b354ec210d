use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("R = {r} au is outside the curve domain [{lo}, {hi}]")]
    OutOfDomain { r: f64, lo: f64, hi: f64 },

    #[error("requested {requested} bound levels but the grid supports only {found}")]
    TooFewBoundStates { requested: usize, found: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("register value {n} does not fit in {n_v} vibrational levels")]
    RegisterOutOfRange { n: u64, n_v: usize },

    #[error("missing rovibrational level v={v}, N={n}")]
    MissingLevel { v: usize, n: u32 },

    #[error("missing final state for M={0}")]
    MissingMRun(i32),

    #[error("Franck-Condon factor {value:.3e} in band v={band} is below the renormalization threshold")]
    SmallFranckCondon { band: usize, value: f64 },

    #[error("decode ambiguity in band v={band}: ratio {ratio:.4} within guard of threshold {threshold:.4}")]
    DecodeAmbiguous { band: usize, ratio: f64, threshold: f64 },

    #[error("band v={band} carries no phase contrast; cannot decode")]
    NoContrast { band: usize },

    #[error("numerical failure at step {step}, channel {channel}: max amplitude {max_amplitude:e}")]
    Numerical {
        step: usize,
        channel: String,
        max_amplitude: f64,
    },

    #[error("carrier calibration failed: {0}")]
    Calibration(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
