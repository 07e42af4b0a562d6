use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point is infeasible: row {row} exceeds its bound by {violation:.3e}")]
    Infeasible { row: usize, violation: f64 },

    #[error("{active} active constraints exceed the enumeration limit of {limit}")]
    TooManyActive { active: usize, limit: usize },

    #[error("not a graph point: {0}")]
    NotGraphPoint(String),

    #[error("vector is not in the normal cone at the given point")]
    NotInNormalCone,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{source_name}: row {row}, field '{field}': {message}")]
    Parse {
        source_name: String,
        row: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}
