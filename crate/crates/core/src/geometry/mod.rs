//! Homography and epipolar algebra: warping, fundamental matrix estimation,
//! and the homography constructors used as proposal back-ends by the solver.
//!
//! All operations here are pure functions on immutable inputs and safe to
//! call concurrently.

mod fit;
mod fundamental;
mod lk;

pub use fit::{homography_from_3pts_and_f, homography_from_4pts, homography_least_squares};
pub use fundamental::{
    epipolar_residual, epipole, estimate_fundamental, sym_epipolar_distance, Correspondence,
    FundamentalMatrix,
};
pub use lk::lk_refine;

use nalgebra::{Matrix3, Point2};
use thiserror::Error;

use crate::model::Homography;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate projection: homogeneous scale at or below 1e-12")]
    DegenerateProjection,
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientMatches { needed: usize, got: usize },
    #[error("no consensus: every sample was degenerate or below the inlier floor")]
    NoConsensus,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("correspondence violates the epipolar gate: residual {residual} > {gate}")]
    EpipolarGateViolated { residual: f64, gate: f64 },
}

/// Applies a homography to a point, failing on degenerate projections.
pub fn apply_homography(h: &Homography, p: Point2<f64>) -> Result<Point2<f64>, GeometryError> {
    h.map(p).ok_or(GeometryError::DegenerateProjection)
}

/// Similarity transform sending the centroid of `pts` to the origin and
/// their mean distance from it to sqrt(2). Returns the transform and the
/// normalized points.
pub(crate) fn hartley_normalization(pts: &[Point2<f64>]) -> (Matrix3<f64>, Vec<Point2<f64>>) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let normalized = pts
        .iter()
        .map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    (t, normalized)
}

/// Signed doubled area of the triangle `(a, b, c)`.
pub(crate) fn triangle_area2(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_homography_examples() {
        let id = Homography::identity();
        let p = apply_homography(&id, Point2::new(7.0, 3.0)).unwrap();
        assert!((p.x - 7.0).abs() < 1e-12 && (p.y - 3.0).abs() < 1e-12);

        let t = Homography::translation(2.0, 3.0).unwrap();
        let p = apply_homography(&t, Point2::new(1.0, 1.0)).unwrap();
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 4.0).abs() < 1e-12);

        // Oracle: explicit homogeneous division with bottom row (0.001, 0, 1).
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.001, 0.0, 1.0);
        let h = Homography::new(m).unwrap();
        let p = apply_homography(&h, Point2::new(100.0, 0.0)).unwrap();
        assert!((p.x - 100.0 / 1.1).abs() < 1e-9);
        assert!(p.y.abs() < 1e-12);
    }

    #[test]
    fn hartley_normalization_centers_and_scales() {
        let pts = vec![
            Point2::new(10.0, 20.0),
            Point2::new(30.0, 20.0),
            Point2::new(10.0, 60.0),
            Point2::new(30.0, 60.0),
        ];
        let (_, n) = hartley_normalization(&pts);
        let cx: f64 = n.iter().map(|p| p.x).sum::<f64>() / 4.0;
        let cy: f64 = n.iter().map(|p| p.y).sum::<f64>() / 4.0;
        assert!(cx.abs() < 1e-12 && cy.abs() < 1e-12);
        let mean: f64 = n.iter().map(|p| (p.x * p.x + p.y * p.y).sqrt()).sum::<f64>() / 4.0;
        assert!((mean - std::f64::consts::SQRT_2).abs() < 1e-12);
    }
}
