use thiserror::Error;

use crate::solver::SolverStatus;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("fields `{0}` and `{1}` are mutually exclusive")]
    Conflict(&'static str, &'static str),
    #[error("`{field}` has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{field} out of {bound}")]
    OutOfRange { field: String, bound: &'static str },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no feasible time split for pair {pair}: lower bound {lower} exceeds upper bound {upper}")]
    TauInfeasible { pair: usize, lower: f64, upper: f64 },
    #[error("expansion point is infeasible for the subproblem (violation {violation:e})")]
    InfeasibleExpansion { violation: f64 },
    #[error("no feasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("beta {beta:e} is below the convexity bound {bound:e} for pair {pair}")]
    BetaBelowBound { pair: usize, beta: f64, bound: f64 },
    #[error("solver failed with status {status:?} at outer iteration {outer}, inner iteration {inner}")]
    Solver {
        status: SolverStatus,
        outer: usize,
        inner: usize,
    },
    #[error("grid oracle supports at most 2 pairs, got {0}")]
    OracleTooLarge(usize),
    #[error("grid oracle found no feasible grid point")]
    OracleEmpty,
    #[error("channel file: {0}")]
    ChannelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
