use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("gate is not unitary (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("conjugated operator is not a signed Pauli string")]
    NotClifford,

    #[error("site {site} out of range for {n_qubits} qubits")]
    SiteOutOfRange { site: usize, n_qubits: usize },

    #[error("{n_qubits} qubits exceeds the limit of {limit} for this operation")]
    TooManyQubits { n_qubits: usize, limit: usize },

    #[error("Pauli sampler lost normalization at site {site} (relative deviation {deviation:.3e}); canonical form broken")]
    BrokenCanonicalForm { site: usize, deviation: f64 },

    #[error("SVD of a {rows}x{cols} matrix failed")]
    SvdFailed { rows: usize, cols: usize },

    #[error("mean squared Pauli expectation {mean:.3e} too small for a stable magic estimate")]
    EstimatorBlowUp { mean: f64 },

    #[error("need at least {needed} window samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no transition in scanned range")]
    NoTransition,

    #[error("degenerate F ratio: {0}")]
    DegenerateRatio(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
