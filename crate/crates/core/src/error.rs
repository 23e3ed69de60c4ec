use thiserror::Error;

use crate::optimizers::RunTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain (bad index, empty batch,
    /// lambda outside (0, 1), non-finite point, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    /// The iterate left the finite region. Carries everything recorded up
    /// to the failing epoch.
    #[error("run diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        trace: Box<RunTrace>,
    },
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
