use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A numeric argument is outside its admissible range.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A patient record violates the follow-up window or event constraints.
    #[error("invalid patient record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },

    #[error("data inconsistent with model support")]
    DataInconsistent,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("no published value for {0}")]
    MissingReference(String),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
