use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution `{label}`: {reason}")]
    InvalidDistribution { label: String, reason: String },

    #[error("distribution `{0}` has no density (discrete family)")]
    UnsupportedDensity(String),

    #[error("bank generator produced no distributions")]
    EmptyBank,

    #[error("duplicate label `{0}` in bank")]
    DuplicateLabel(String),

    #[error("bet-weighted estimate is undefined: total stake is zero")]
    UndefinedEstimate,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("weights do not sum to one (sum = {0})")]
    NotNormalized(f64),

    #[error("quadrature failed to converge (estimated error {error:e})")]
    Quadrature { error: f64 },

    #[error("degenerate target: |X - mu| normalizer {0:e} is below 1e-12")]
    DegenerateTarget(f64),

    #[error("rejection sampler exceeded {0} attempts; envelope is likely too small")]
    RejectionCapExceeded(usize),

    #[error("importance weight undefined: proposal density is zero at x = {0}")]
    ZeroProposalDensity(f64),

    #[error("expert `{id}` failed: {reason}")]
    ExpertFailed { id: String, reason: String },

    #[error("every expert in the bank has failed")]
    AllExpertsFailed,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing Monte Carlo pair for task `{task}`, seed {seed}, T = {rounds}")]
    MissingPair { task: String, seed: u64, rounds: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than by a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Json { .. }
                | Error::InvalidDistribution { .. }
                | Error::EmptyBank
                | Error::DuplicateLabel(_)
                | Error::InvalidParameter(_)
        )
    }
}
