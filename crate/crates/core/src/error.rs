use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite input: {0}")]
    NumericInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("not an equilibrium: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotAnEquilibrium { residual: f64, tol: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),
    #[error("simulation diverged at t = {time:.4} s (state norm {norm:.3e})")]
    SimulationDiverged { time: f64, norm: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate channel: {0} is identically zero")]
    DegenerateChannel(String),
    #[error("data not informative: rank {rank} < {required} (cond {cond:.3e})")]
    NotInformative { rank: usize, required: usize, cond: f64 },
    #[error("problem too large: constraint size {size} exceeds limit {limit}")]
    ProblemTooLarge { size: usize, limit: usize },
    #[error("rejected: data condition number {cond:.3e} exceeds {limit:.1e}")]
    RejectedIllConditioned { cond: f64, limit: f64 },
    #[error("solver error: {0}")]
    Solver(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),
    #[error("incomplete input: {0}")]
    IncompleteInput(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
