use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, range, finiteness).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An input exceeds a hard enumeration or size limit.
    #[error("size limit exceeded: {what} is {got}, limit {limit}")]
    SizeLimit {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    /// Malformed binary or text input.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A generator could not produce a valid instance.
    #[error("generation failed: {0}")]
    Generation(String),

    /// Invalid or mismatched configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite or exploding loss.
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Divergence { iteration: u64, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
