use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("action index {index} out of range for {n} actions")]
    ActionOutOfRange { index: usize, n: usize },

    #[error("state index {index} out of range for {n} states")]
    StateOutOfRange { index: usize, n: usize },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("episode already terminated")]
    EpisodeTerminated,

    #[error("digamma is undefined for non-positive input {0}")]
    DigammaDomain(f64),

    #[error("oracle training failed: {0}")]
    OracleTraining(String),

    #[error("at least {needed} trials are required, got {got}")]
    TooFewTrials { needed: usize, got: usize },

    #[error("trial {trial} of arm {arm} failed: {source}")]
    Trial {
        arm: String,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
