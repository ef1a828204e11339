use thiserror::Error;

/// Errors raised by the solvers and their supporting kernels.
#[derive(Debug, Error)]
pub enum JglError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite{context}")]
    NotPositiveDefinite { context: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("infeasible synthetic specification: {0}")]
    Infeasible(String),

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {path}: {message}")]
    Parse { path: String, message: String },
}

impl JglError {
    pub(crate) fn not_pd(context: impl Into<String>) -> Self {
        let context = context.into();
        let context = if context.is_empty() {
            context
        } else {
            format!(" ({context})")
        };
        JglError::NotPositiveDefinite { context }
    }
}

pub type Result<T> = std::result::Result<T, JglError>;
