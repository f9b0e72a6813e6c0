//! Shared domain types and their invariants.
//!
//! Pixel coordinates are pixel centers at integer `(x, y)`, origin at the
//! top-left corner, `x` growing rightward and `y` growing downward. This is
//! the single convention used throughout the crate.
//!
//! All types here are immutable value objects after construction and safe to
//! share across threads; the solver mutates state only by constructing new
//! values.

mod config;
mod flow;
mod homography;
mod image;
mod labels;
mod occlusion;
mod segmentation;

pub use config::{finite_energy_bound, validate_config, EnergyConfig, ValidationReport};
pub use flow::{dense_flow, FlowField, MotionField};
pub use homography::Homography;
pub use image::GrayImage;
pub use labels::{LabelProbMap, SemanticClassTable};
pub use occlusion::{BoundaryLabel, OcclusionState};
pub use segmentation::SuperpixelSegmentation;

use thiserror::Error;

/// Errors raised while constructing or validating domain values.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("matrix is singular or nearly singular")]
    SingularMatrix,
    #[error("superpixel ids are not contiguous: {0}")]
    NonContiguousIds(String),
}
