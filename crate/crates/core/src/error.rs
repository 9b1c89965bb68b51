use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("singular matrix: zero pivot in column {column}")]
    SingularMatrix { column: usize },

    #[error("singular KKT system at barrier parameter t = {t:.3e} (newton iteration {iteration}, min slack {min_slack:.3e})")]
    SingularSystem {
        t: f64,
        iteration: usize,
        min_slack: f64,
    },

    #[error("iterate left the strict interior: slack {slack:.3e} at constraint row {row}")]
    InteriorViolation { row: usize, slack: f64 },

    #[error("line search failed: step fell below {min_step:.1e} with residual {residual:.3e}")]
    LineSearchFailure { min_step: f64, residual: f64 },

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("linear program is infeasible (phase-one objective {phase_one_objective:.3e})")]
    Infeasible { phase_one_objective: f64 },

    #[error("simplex pivot limit of {0} exceeded")]
    PivotLimit(usize),

    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
