use thiserror::Error;

/// Errors raised anywhere in the compile / encode / enumerate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("instance has {got} values but the model has {expected} features")]
    InstanceShape { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model field `{field}`: {message}")]
    ModelParse { field: String, message: String },

    #[error("line {line}: {message}")]
    Dimacs { line: usize, message: String },

    /// The hard part of the correction problem is unsatisfiable: the classifier
    /// is constant in the direction the explanation would need to reach.
    #[error("no counterfactual exists: the classifier never predicts the opposite class")]
    NoCounterfactualExists,

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
