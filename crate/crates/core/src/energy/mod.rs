//! Every term of the objective and the weighted total.
//!
//! The objective couples five terms over the per-superpixel homographies
//! `H`, the next-frame label map, the per-pixel occlusion mask, and the
//! per-edge boundary relations:
//!
//! * a census data term, charging visible pixels their truncated ternary
//!   matching cost and occluded pixels a constant penalty;
//! * a label consistency term, tying the next label map to a blend of the
//!   bottom-up evidence and the flow-propagated previous labels;
//! * an epipolar penalty on the motion of (mostly static) content, truncated
//!   per superpixel;
//! * an occlusion-aware connectivity term between adjacent superpixels;
//! * a prior over the boundary relations.
//!
//! Term evaluations are pure; per-superpixel and per-edge contributions are
//! computed in parallel but always reduced in a fixed order (superpixel id,
//! then edge index) so totals are bit-stable across thread counts.

mod census;
mod objective;

pub use census::{rho_d, signature_distance, ternary_signature, TernarySignature};
pub use objective::{
    occluded_set, representative_label, EnergyBreakdown, EnergyModel,
};
