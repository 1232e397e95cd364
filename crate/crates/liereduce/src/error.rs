//! Crate-wide error type. Variants map onto the process exit classes:
//! parse/usage problems, failed mathematical checks, and internal faults.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("unbound variable `{0}` during evaluation")]
    Unbound(String),

    #[error("domain error during evaluation: {0}")]
    Domain(String),

    #[error("sampling exhausted after {attempts} attempts while {context}")]
    ExhaustedSampling { attempts: usize, context: String },

    #[error("singular linear system: the pivot in column {column} vanishes identically")]
    SingularPivot { column: usize },

    #[error("linear solve verification failed at row {row}: residual {residual} is not zero")]
    SolveVerification { row: usize, residual: String },

    #[error("linear system shape mismatch: {0}")]
    Shape(String),

    #[error("mismatched variable universes: {0}")]
    MismatchedUniverse(String),

    #[error("derivative order {order} exceeds what the variable universe names (max {max})")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("generators are linearly dependent: {0}")]
    DependentBasis(String),

    #[error("generators do not close under the bracket: {0}")]
    NotClosed(String),

    #[error("algebra is not solvable: derived series stabilizes at dimension {dim} from level {level} on")]
    NotSolvable { level: usize, dim: usize },

    #[error("structure constants invalid: {0}")]
    Structure(String),

    #[error("chart rejected: {0}")]
    Chart(String),

    #[error("reduction failed: {0}")]
    Reduction(String),

    #[error("inheritance hypothesis violated: {0}")]
    Inheritance(String),

    #[error("session file invalid: {0}")]
    Session(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class: 2 for parse and usage errors, 3 for internal
    /// faults, 1 for everything that means a mathematical check could not
    /// pass or could not be completed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Io(_) => 2,
            Error::Internal(_) => 3,
            _ => 1,
        }
    }
}
