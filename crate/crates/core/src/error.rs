use thiserror::Error;

use crate::geometry::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed stratum: {0}")]
    MalformedStratum(String),

    #[error("malformed domain: {0}")]
    MalformedDomain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("partition failed validation: {0}")]
    InvalidPartition(Box<ValidationReport>),

    #[error("partition is not equivolume (stratum {index} has relative volume {relative})")]
    NotEquivolume { index: usize, relative: f64 },

    #[error("{requested} strata exceed the configured cap of {cap}")]
    TooManyStrata { requested: u128, cap: usize },

    #[error("pair position ({i}, {j}) is out of range for m = {m}")]
    PositionOutOfRange { m: usize, i: usize, j: usize },

    #[error("pair positions {first} and {second} share a grid cell")]
    OverlappingPositions { first: usize, second: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("coordinate {value} of point {point} lies outside [0, 1]")]
    CoordinateOutOfRange { point: usize, value: f64 },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by a partition or stratum that is not
    /// well-formed, as opposed to bad runtime parameters.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedStratum(_)
                | Error::MalformedDomain(_)
                | Error::InvalidPartition(_)
                | Error::NotEquivolume { .. }
                | Error::PositionOutOfRange { .. }
                | Error::OverlappingPositions { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}
