//! Error type shared across the engine.
//!
//! Errors split into two broad categories that the CLI maps to distinct exit
//! codes: data/schema problems (malformed input, vocabulary mismatches,
//! invalid configuration) and numeric failures (non-finite values produced
//! during optimization or inference).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failures the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed JSON or JSONL input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Structurally valid input with invalid content.
    #[error("schema error: {message}")]
    Schema { message: String },

    /// A graph violated a structural invariant.
    #[error("invalid graph `{graph_id}`: {message}")]
    Graph { graph_id: String, message: String },

    /// A label was not found in the active class set.
    #[error("unknown class label `{label}`")]
    UnknownClass { label: String },

    /// An operation was called with arguments outside its contract.
    #[error("invalid argument: {message}")]
    InvalidArgument { message: String },

    /// Matrix operands with incompatible shapes.
    #[error("shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// A checkpoint file was rejected.
    #[error("checkpoint error: {message}")]
    Checkpoint { message: String },

    /// Stored and active vocabularies (or class sets) disagree.
    #[error("vocabulary mismatch ({which}): checkpoint has {expected}, runtime has {got}")]
    VocabMismatch {
        which: &'static str,
        expected: String,
        got: String,
    },

    /// A NaN or infinity surfaced in a numeric quantity.
    #[error("numeric failure in {context}: non-finite value")]
    Numeric { context: String },
}

impl Error {
    fn schema(message: impl Into<String>) -> Self {
        Error::Schema {
            message: message.into(),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            message: message.into(),
        }
    }

    fn numeric(context: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
        }
    }

    /// Wraps an I/O error with its path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } => 3,
            _ => 2,
        }
    }
}

/// Builds a [`Error::Schema`].
pub fn schema_error(message: impl Into<String>) -> Error {
    Error::schema(message)
}

/// Builds a [`Error::InvalidArgument`].
pub fn invalid_argument(message: impl Into<String>) -> Error {
    Error::invalid(message)
}

/// Builds a [`Error::Numeric`].
pub fn numeric_error(context: impl Into<String>) -> Error {
    Error::numeric(context)
}
