use alloc::string::String;

/// Errors raised by the core engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input data violates an invariant of the domain model.
    #[error("validation error: {0}")]
    Validation(String),
    /// A function was evaluated outside its domain, e.g. a scorer with D < 2.
    #[error("domain error: {0}")]
    Domain(String),
    /// The active-learning protocol was broken (relabeling, missing predictions).
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The experiment configuration cannot be run.
    #[error("configuration error: {0}")]
    Config(String),
    /// The detector adapter failed to produce predictions.
    #[error("detector adapter failed: {0}")]
    Adapter(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
