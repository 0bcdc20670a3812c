use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A shape, enum value, or option was inconsistent with the rest of the setup.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a state that does not permit it.
    #[error("state error: {0}")]
    State(String),

    /// A batch or record carried data that does not belong where it was used.
    #[error("data error: {0}")]
    Data(String),

    /// A loss or gradient became non-finite; the current update session is aborted.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// Every CEM candidate was invalid; the episode is aborted and logged.
    #[error("planner failure: {0}")]
    PlannerFailure(String),

    /// A checkpoint could not be read back (corruption, checksum, version).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
