use thiserror::Error;

/// Errors surfaced by the laboratory.
///
/// `Condition` carries the name of the first violated, labelled inequality
/// (`H0`, `inferno`, `sipi`, ...) together with both sides, so batch runs can
/// report exactly what failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("condition `{name}` fails: lhs = {lhs:.6e}, rhs = {rhs:.6e}")]
    Condition { name: String, lhs: f64, rhs: f64 },

    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    pub fn condition(name: &str, lhs: f64, rhs: f64) -> Self {
        Error::Condition {
            name: name.to_string(),
            lhs,
            rhs,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
