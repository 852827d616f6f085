use thiserror::Error;

/// Errors raised while evaluating a discrepancy measure on a region.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscrepancyError {
    #[error("discrepancy needs nonempty y and z samples (got {n_y} and {n_z})")]
    Empty { n_y: usize, n_z: usize },
    #[error("measure {measure} needs paired samples of equal size (got {n_y} and {n_z})")]
    Pairing {
        measure: String,
        n_y: usize,
        n_z: usize,
    },
    #[error("measure {measure}: {detail}")]
    Domain { measure: String, detail: String },
    #[error("ratio measure has a nonpositive denominator mean ({0})")]
    ZeroDenominator(f64),
    #[error("measure {0} has no zeroing offset")]
    Unsupported(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error at row {row}, column {column}: {detail}")]
    Cell {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Discrepancy(#[from] DiscrepancyError),
    #[error("model error: {0}")]
    Model(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
