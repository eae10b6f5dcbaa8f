use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("integer column {0} has an infinite bound")]
    UnboundedInteger(usize),
    #[error("MPS parse error at line {line}: {msg}")]
    Mps { line: usize, msg: String },
}
