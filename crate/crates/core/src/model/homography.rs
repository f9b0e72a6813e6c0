use nalgebra::{Matrix3, Point2, Vector3};

use super::ModelError;

/// Threshold below which a homogeneous scale is treated as degenerate.
pub const DEGENERATE_W: f64 = 1e-12;

/// An invertible 3x3 projective transform, stored with unit Frobenius norm
/// and the sign fixed so that the bottom-right entry is non-negative.
///
/// Storing unit-Frobenius matrices (rather than pinning the bottom-right
/// entry to 1) keeps affinities with a tiny bottom-right entry representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Normalizes `m` and checks invertibility.
    pub fn new(m: Matrix3<f64>) -> Result<Self, ModelError> {
        let m = normalize(m)?;
        if m.determinant().abs() <= 1e-12 {
            return Err(ModelError::SingularMatrix);
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is invertible")
    }

    /// Pure translation by `(dx, dy)`.
    pub fn translation(dx: f64, dy: f64) -> Result<Self, ModelError> {
        Self::new(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Maps a point, returning `None` when the homogeneous scale `w` falls at
    /// or below [`DEGENERATE_W`] (the point lies at or beyond the horizon).
    #[inline]
    pub fn map(&self, p: Point2<f64>) -> Option<Point2<f64>> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        if v.z <= DEGENERATE_W {
            None
        } else {
            Some(Point2::new(v.x / v.z, v.y / v.z))
        }
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Homography) -> Result<Self, ModelError> {
        Self::new(self.m * other.m)
    }

    pub fn inverse(&self) -> Result<Self, ModelError> {
        let inv = self.m.try_inverse().ok_or(ModelError::SingularMatrix)?;
        Self::new(inv)
    }
}

/// Scales to unit Frobenius norm and fixes the sign. Already-normalized
/// inputs are returned bit-identically, which makes normalization idempotent.
fn normalize(m: Matrix3<f64>) -> Result<Matrix3<f64>, ModelError> {
    let n = m.norm();
    if !n.is_finite() || n < 1e-300 {
        return Err(ModelError::SingularMatrix);
    }
    let mut out = if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        m
    } else {
        m / n
    };
    let pivot = if out[(2, 2)] != 0.0 {
        out[(2, 2)]
    } else {
        // Sign convention falls back to the entry of largest magnitude.
        let mut best = 0.0f64;
        for v in out.iter() {
            if v.abs() > best.abs() {
                best = *v;
            }
        }
        best
    };
    if pivot < 0.0 {
        out = -out;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_maps_points_unchanged() {
        let h = Homography::identity();
        let p = h.map(Point2::new(7.0, 3.0)).unwrap();
        assert_relative_eq!(p.x, 7.0, max_relative = 1e-12);
        assert_relative_eq!(p.y, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn translation_shifts() {
        let h = Homography::translation(2.0, 3.0).unwrap();
        let p = h.map(Point2::new(1.0, 1.0)).unwrap();
        assert_relative_eq!(p.x, 3.0, max_relative = 1e-12);
        assert_relative_eq!(p.y, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Homography::new(m).is_err());
    }

    #[test]
    fn degenerate_projection_is_none() {
        // Bottom row sends (100, 0) to w = 1 - 0.01*100 = 0.
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.01, 0.0, 1.0);
        let h = Homography::new(m).unwrap();
        assert!(h.map(Point2::new(100.0, 0.0)).is_none());
        assert!(h.map(Point2::new(0.0, 0.0)).is_some());
    }

    #[test]
    fn normalization_idempotent() {
        let m = Matrix3::new(3.0, 0.1, -2.0, 0.0, 2.5, 1.0, 1e-4, 0.0, 0.9);
        let h1 = Homography::new(m).unwrap();
        let h2 = Homography::new(*h1.matrix()).unwrap();
        assert_eq!(h1.matrix(), h2.matrix());
    }

    proptest! {
        #[test]
        fn scale_invariant_normalization(c in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64]) {
            let m = Matrix3::new(1.0, 0.2, -3.0, -0.1, 1.1, 2.0, 1e-3, -2e-3, 1.0);
            let a = Homography::new(m).unwrap();
            let b = Homography::new(m * c).unwrap();
            for (x, y) in a.matrix().iter().zip(b.matrix().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
