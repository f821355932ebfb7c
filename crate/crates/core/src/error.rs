use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient data in epoch starting at {epoch_start}: {valid_count} of {min_points} required points")]
    InsufficientData {
        epoch_start: i64,
        valid_count: usize,
        min_points: usize,
    },

    #[error("silhouette undefined for a single cluster")]
    SilhouetteUndefined,

    #[error("no intersection of the two densities between the means {low} and {high}")]
    NoBoundaryRoot { low: f64, high: f64 },

    #[error("insufficient regime separation: {0}")]
    InsufficientSeparation(String),

    #[error("label keys differ between the two labelings")]
    KeyMismatch,

    #[error("malformed csv in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
