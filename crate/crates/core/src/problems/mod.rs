//! Instance generators for the two benchmark applications.

pub mod gep;
pub mod lotsizing;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("at least one production source is required")]
    NoSources,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
