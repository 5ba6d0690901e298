use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The network document does not match the schema.
    #[error("network document: {0}")]
    Parse(String),

    /// A value violates a model invariant (orphan reference, non-positive rating, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// Estimation settings outside the acceptable options.
    #[error("configuration: {0}")]
    Config(String),

    /// An operation was called outside its precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("singular admittance matrix: {0}")]
    Singular(String),

    #[error("empty flexibility area: no feasible cell")]
    EmptyFlexibilityArea,

    #[error("base case power flow did not converge (max mismatch {mismatch:e} p.u.)")]
    BaseCaseDiverged { mismatch: f64 },

    #[error(
        "exhaustive search needs {count} power flows which exceeds the tractability cap of {cap}"
    )]
    Intractable { count: u128, cap: u128 },

    #[error(
        "tensor for {component} needs an estimated {needed} bytes, above the {budget} byte budget; \
         use tcp-merge with a lower max_fsps or coarser dp/dq"
    )]
    MemoryBudget {
        component: String,
        needed: u128,
        budget: u128,
    },

    #[error("stored tensors at {path} do not match the current run ({reason}); rerun tcp-save")]
    FingerprintMismatch { path: PathBuf, reason: String },

    #[error("stored tensor bundle is corrupt: {0}")]
    Bundle(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the CLI: 2 for rejected inputs, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Validation(_) | Error::Config(_) => 2,
            _ => 3,
        }
    }
}
