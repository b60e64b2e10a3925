use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyData,
    #[error("training data contains a single class ({0}); at least two are required")]
    SingleClass(usize),
    #[error("label {label} of instance `{id}` is outside the class range 0..{classes}")]
    LabelOutOfRange { id: String, label: usize, classes: usize },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("method `{0}` needs analytic gradients, which this model does not expose")]
    UnsupportedMethod(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("instance `{0}` has no tokens")]
    EmptyInstance(String),
}

pub type Result<T> = core::result::Result<T, Error>;
