use thiserror::Error;

/// Errors raised by the filtering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampler returned a non-finite point at draw {index}")]
    RejectedSample { index: usize },

    #[error("test function is not finite at particle {index}")]
    Evaluation { index: usize },

    #[error("all likelihoods vanish on the particle cloud (prior and data do not overlap)")]
    LikelihoodCollapse,

    #[error("ODE integration diverged at time {time} s")]
    Divergence { time: f64 },

    #[error("Markov chain started at a point with zero target density")]
    InvalidState,

    #[error("weighted sample has zero variance")]
    DegenerateSample,

    #[error("{what} is {value}, above the tolerance {tolerance}")]
    ToleranceExceeded { what: String, value: f64, tolerance: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::LikelihoodCollapse
                | Error::Divergence { .. }
                | Error::InvalidState
                | Error::DegenerateSample
                | Error::RejectedSample { .. }
                | Error::Evaluation { .. }
                | Error::ToleranceExceeded { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
