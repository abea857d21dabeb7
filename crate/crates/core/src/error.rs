use thiserror::Error;

/// Errors raised by the estimation, inference and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("insufficient data: {n} observations cannot support {params} parameters plus a variance estimate")]
    InsufficientData { n: usize, params: usize },

    #[error(
        "design matrix is singular (smallest singular value of the Gram matrix {smallest:.3e})"
    )]
    SingularDesign { smallest: f64 },

    #[error("cohort has {0} subjects, at least 2 are required")]
    InsufficientCohort(usize),

    #[error("inconsistent model order: expected {expected}, found {found}")]
    InconsistentOrder { expected: usize, found: usize },

    #[error("test {test} is not defined for order {order}")]
    IncompatibleTest { test: String, order: usize },

    #[error("Jacobian is undefined at a degenerate point: {0}")]
    DegeneratePoint(String),

    #[error("covariance matrix is singular or ill-conditioned (condition number {0:.3e})")]
    SingularCovariance(f64),

    #[error("bootstrap aborted: {failed} of {requested} replicates failed; last failure: {last}")]
    Bootstrap {
        failed: usize,
        requested: usize,
        last: String,
    },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
