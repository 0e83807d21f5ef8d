use thiserror::Error;

/// Errors raised by problem construction, the solvers and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("agent {0} is out of range")]
    AgentOutOfRange(usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("hessian is not positive definite (agent {agent:?}, smallest eigenvalue {rho:e})")]
    NotPositiveDefinite { agent: Option<usize>, rho: f64 },
    #[error("invalid local cost: {0}")]
    InvalidCost(String),
    #[error("missing coupling block for edge ({owner}, {neighbor})")]
    MissingCoupling { owner: usize, neighbor: usize },
    #[error("coupling block ({owner}, {neighbor}) is declared for a non-edge")]
    CouplingOffGraph { owner: usize, neighbor: usize },
    #[error("missing lipschitz constant for edge ({0}, {1})")]
    MissingTheta(usize, usize),
    #[error("asynchrony bound Q must be at least 1")]
    InvalidQ,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("agent {0} never completes an update within the horizon")]
    AgentNeverUpdates(usize),
    #[error("mailbox of agent {agent} has no entry for neighbor {neighbor}")]
    MissingMailboxEntry { agent: usize, neighbor: usize },
    #[error("problem is not supported by this solver: {0}")]
    Unsupported(String),
    #[error("singular KKT system: {0}")]
    SingularSystem(String),
    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NotConverged { iterations: u64, residual: f64 },
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported instance format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn check_dim(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}
