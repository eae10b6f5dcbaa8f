use thiserror::Error;

#[derive(Debug, Error)]
pub enum EssrError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("branch {row} has zero reactance")]
    ZeroReactance { row: usize },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("unknown line id {0}")]
    UnknownLine(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{what} count {count} exceeds the cap of {cap}")]
    CapExceeded { what: &'static str, count: usize, cap: usize },
    #[error("horizon has {0} periods; at least 2 are required")]
    HorizonTooShort(usize),
    #[error("big-M for line {line} is not finite")]
    NonFiniteBigM { line: usize },
    #[error("variable {0} has no finite bound")]
    NonFiniteBound(String),
    #[error("McCormick chain needs at least one binary")]
    EmptyChain,
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    SolverInput(#[from] essr_solver::SolverError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EssrError>;
