//! Block coordinate descent solver: particle-based min-sum message passing
//! over the per-superpixel homographies, exact per-edge occlusion
//! enumeration, and the closed-form temporal label update.
//!
//! Determinism: identical inputs and seed produce identical outputs
//! regardless of thread count. Random decisions draw from per-superpixel
//! streams derived by hashing the seed with the superpixel id and iteration
//! indices, parallel evaluations are reduced in fixed order, and every
//! tie-break follows a documented fixed order (candidate index, then
//! relation declaration order).

mod rng;
mod solver;
mod state;

pub use solver::{compute_label_update, JointEstimate, Solver};
pub use state::{MessageStore, Particle, ParticleSet, SolverState};

use thiserror::Error;

use crate::energy::{EnergyBreakdown, EnergyModel};
use crate::geometry::FundamentalMatrix;
use crate::model::{
    EnergyConfig, FlowField, GrayImage, LabelProbMap, ModelError, SemanticClassTable,
    SuperpixelSegmentation,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("lambda_imp = {lambda_imp} does not dominate the feasible energy bound {bound:.3}")]
    ImpossiblePenaltyTooSmall { lambda_imp: f64, bound: f64 },
}

/// Runs the full joint estimation and returns the dense flow, the refined
/// label map, the occlusion state, and the per-outer-iteration energy trace.
#[allow(clippy::too_many_arguments)]
pub fn run_joint_estimation(
    frame_t: &GrayImage,
    frame_t1: &GrayImage,
    seg: &SuperpixelSegmentation,
    labels_prev: &LabelProbMap,
    labels_evidence: &LabelProbMap,
    fundamental: Option<&FundamentalMatrix>,
    init_flow: Option<&FlowField>,
    table: &SemanticClassTable,
    cfg: &EnergyConfig,
    progress: Option<&mut dyn FnMut(usize, &EnergyBreakdown)>,
) -> Result<JointEstimate, SolverError> {
    let model = EnergyModel::new(
        frame_t,
        frame_t1,
        seg,
        labels_prev,
        labels_evidence,
        fundamental,
        table,
        cfg,
    )
    .map_err(SolverError::Model)?;
    let mut solver = Solver::new(model, init_flow)?;
    solver.run(progress)
}
