use nalgebra::{DMatrix, Matrix3, Point2, Vector3};

use super::fundamental::{epipolar_residual, epipole, skew, Correspondence, FundamentalMatrix};
use super::{hartley_normalization, triangle_area2, GeometryError};
use crate::model::Homography;

/// Direct linear transform on Hartley-normalized points. `src` and `dst`
/// must have equal length >= 4.
fn dlt(src: &[Point2<f64>], dst: &[Point2<f64>]) -> Result<Matrix3<f64>, GeometryError> {
    let (ts, sn) = hartley_normalization(src);
    let (td, dn) = hartley_normalization(dst);
    let n = src.len();
    let mut a = DMatrix::zeros(2 * n, 9);
    for i in 0..n {
        let (x, y) = (sn[i].x, sn[i].y);
        let (u, v) = (dn[i].x, dn[i].y);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = y;
        a[(r, 2)] = 1.0;
        a[(r, 6)] = -u * x;
        a[(r, 7)] = -u * y;
        a[(r, 8)] = -u;
        a[(r + 1, 3)] = x;
        a[(r + 1, 4)] = y;
        a[(r + 1, 5)] = 1.0;
        a[(r + 1, 6)] = -v * x;
        a[(r + 1, 7)] = -v * y;
        a[(r + 1, 8)] = -v;
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("svd with v_t");
    let sv = &svd.singular_values;
    let max_sv = sv.iter().cloned().fold(0.0f64, f64::max);
    let mut sorted: Vec<f64> = sv.iter().cloned().collect();
    sorted.sort_by(f64::total_cmp);
    if n == 4 && sorted.len() >= 2 && sorted[1] < 1e-9 * max_sv.max(1e-300) {
        return Err(GeometryError::DegenerateConfiguration(
            "homography system has a multi-dimensional nullspace".into(),
        ));
    }
    let h = vt.row(vt.nrows() - 1);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| GeometryError::DegenerateConfiguration("normalization singular".into()))?;
    Ok(td_inv * hn * ts)
}

/// Homography from four point pairs via the normalized direct linear
/// transform. Fails when any three source points are collinear (checked with
/// a 1e-9 area tolerance) or the system is otherwise degenerate.
pub fn homography_from_4pts(
    src: &[Point2<f64>; 4],
    dst: &[Point2<f64>; 4],
) -> Result<Homography, GeometryError> {
    let scale: f64 = src
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs()])
        .fold(1.0, f64::max);
    for i in 0..4 {
        for j in i + 1..4 {
            for k in j + 1..4 {
                if triangle_area2(src[i], src[j], src[k]).abs() <= 1e-9 * scale * scale {
                    return Err(GeometryError::DegenerateConfiguration(format!(
                        "source points {i}, {j}, {k} are collinear"
                    )));
                }
            }
        }
    }
    let m = dlt(src, dst)?;
    Homography::new(m).map_err(|_| {
        GeometryError::DegenerateConfiguration("fitted homography is singular".into())
    })
}

/// Least-squares homography over four or more point pairs (normalized DLT).
/// Used to fit an initial motion to a dense flow field.
pub fn homography_least_squares(
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
) -> Result<Homography, GeometryError> {
    if src.len() < 4 || src.len() != dst.len() {
        return Err(GeometryError::InsufficientMatches {
            needed: 4,
            got: src.len().min(dst.len()),
        });
    }
    let m = dlt(src, dst)?;
    Homography::new(m).map_err(|_| {
        GeometryError::DegenerateConfiguration("fitted homography is singular".into())
    })
}

/// Plane-induced homography compatible with `f`, pinned by three
/// correspondences: `H = [e']x F + e' v^T`, with `v` solved linearly so that
/// `H p_i ~ q_i`.
///
/// Every homography of this family satisfies the compatibility identity
/// `H^T F + F^T H = 0`; the correspondences only select the plane. Matches
/// must satisfy the epipolar constraint within `residual_gate` and must not
/// be collinear.
pub fn homography_from_3pts_and_f(
    f: &FundamentalMatrix,
    matches: &[Correspondence; 3],
    residual_gate: f64,
) -> Result<Homography, GeometryError> {
    for m in matches {
        let r = epipolar_residual(f, m.p, m.q);
        if !(r <= residual_gate) {
            return Err(GeometryError::EpipolarGateViolated {
                residual: r,
                gate: residual_gate,
            });
        }
    }
    let scale: f64 = matches
        .iter()
        .flat_map(|m| [m.p.x.abs(), m.p.y.abs()])
        .fold(1.0, f64::max);
    if triangle_area2(matches[0].p, matches[1].p, matches[2].p).abs() <= 1e-9 * scale * scale {
        return Err(GeometryError::DegenerateConfiguration(
            "the three source points are collinear".into(),
        ));
    }

    let e = epipole(f);
    let a = skew(e) * f.matrix();
    let mut rhs = Vector3::zeros();
    let mut sys = Matrix3::zeros();
    for (i, m) in matches.iter().enumerate() {
        let p = Vector3::new(m.p.x, m.p.y, 1.0);
        let q = Vector3::new(m.q.x, m.q.y, 1.0);
        let c = q.cross(&e);
        let cc = c.dot(&c);
        if cc < 1e-18 {
            return Err(GeometryError::DegenerateConfiguration(
                "a target point coincides with the epipole".into(),
            ));
        }
        let b = q.cross(&(a * p));
        let t = -b.dot(&c) / cc;
        sys.set_row(i, &p.transpose());
        rhs[i] = t;
    }
    let v = sys.lu().solve(&rhs).ok_or_else(|| {
        GeometryError::DegenerateConfiguration("plane system is singular".into())
    })?;
    let h = a + e * v.transpose();
    Homography::new(h).map_err(|_| {
        GeometryError::DegenerateConfiguration("plane-induced homography is singular".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> [Point2<f64>; 4] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn identity_and_translation_from_squares() {
        let src = unit_square();
        let h = homography_from_4pts(&src, &src).unwrap();
        for p in src {
            let q = h.map(p).unwrap();
            assert!((q - p).norm() < 1e-10);
        }
        let dst = src.map(|p| Point2::new(p.x + 3.0, p.y - 2.0));
        let h = homography_from_4pts(&src, &dst).unwrap();
        for (p, d) in src.iter().zip(dst.iter()) {
            let q = h.map(*p).unwrap();
            assert!((q - d).norm() < 1e-10);
        }
    }

    #[test]
    fn random_quads_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let src: [Point2<f64>; 4] = std::array::from_fn(|i| {
                let (bx, by) = [(0.0, 0.0), (20.0, 0.0), (20.0, 20.0), (0.0, 20.0)][i];
                Point2::new(
                    bx + rng.random_range(-4.0..4.0),
                    by + rng.random_range(-4.0..4.0),
                )
            });
            let dst: [Point2<f64>; 4] = std::array::from_fn(|i| {
                Point2::new(
                    src[i].x + rng.random_range(-6.0..6.0),
                    src[i].y + rng.random_range(-6.0..6.0),
                )
            });
            let Ok(h) = homography_from_4pts(&src, &dst) else {
                continue;
            };
            for (p, d) in src.iter().zip(dst.iter()) {
                let q = h.map(*p).unwrap();
                assert!((q - d).norm() < 1e-8, "reprojection error {}", (q - d).norm());
            }
        }
    }

    #[test]
    fn collinear_sources_rejected() {
        let src = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 5.0),
        ];
        assert!(matches!(
            homography_from_4pts(&src, &unit_square()),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
    }

    /// Two-view scene with a known plane: P1 = [I | 0], P2 = [R | t],
    /// plane z = depth with normal n = (0, 0, 1). The induced homography is
    /// `R + t n^T / depth` and the fundamental matrix is `[t]x R`.
    fn plane_scene(
        angle: f64,
        t: Vector3<f64>,
        depth: f64,
    ) -> (FundamentalMatrix, Matrix3<f64>) {
        let r = Matrix3::new(
            angle.cos(),
            -angle.sin(),
            0.0,
            angle.sin(),
            angle.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let f = FundamentalMatrix::new(skew(t) * r).unwrap();
        let h = r + t * Vector3::new(0.0, 0.0, 1.0).transpose() / depth;
        (f, h)
    }

    fn project_plane(h: &Matrix3<f64>, p: Point2<f64>) -> Point2<f64> {
        let v = h * Vector3::new(p.x, p.y, 1.0);
        Point2::new(v.x / v.z, v.y / v.z)
    }

    #[test]
    fn recovers_plane_homography() {
        let (f, h_gt) = plane_scene(0.05, Vector3::new(0.4, -0.1, 0.02), 5.0);
        let pts = [
            Point2::new(0.3, 0.2),
            Point2::new(-0.5, 0.6),
            Point2::new(0.1, -0.7),
        ];
        let matches: [Correspondence; 3] =
            pts.map(|p| Correspondence::new(p, project_plane(&h_gt, p)));
        let h = homography_from_3pts_and_f(&f, &matches, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let gt = project_plane(&h_gt, p);
            let got = h.map(p).unwrap();
            assert!((got - gt).norm() < 1e-6, "held-out error {}", (got - gt).norm());
        }
    }

    #[test]
    fn construction_is_compatible_with_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let (f, h_gt) = plane_scene(
                rng.random_range(-0.2..0.2),
                Vector3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(0.2..1.0),
                ),
                rng.random_range(2.0..8.0),
            );
            let pts = [
                Point2::new(rng.random_range(-1.0..0.0), rng.random_range(-1.0..0.0)),
                Point2::new(rng.random_range(0.2..1.0), rng.random_range(-1.0..0.0)),
                Point2::new(rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0)),
            ];
            let matches: [Correspondence; 3] =
                pts.map(|p| Correspondence::new(p, project_plane(&h_gt, p)));
            let Ok(h) = homography_from_3pts_and_f(&f, &matches, 1e-8) else {
                continue;
            };
            let sym = h.matrix().transpose() * f.matrix()
                + f.matrix().transpose() * h.matrix();
            let rel = sym.norm() / (2.0 * h.matrix().norm());
            assert!(rel < 1e-8, "compatibility residual {rel}");
            // Every mapped point satisfies the epipolar constraint.
            for _ in 0..10 {
                let p = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if let Some(q) = h.map(p) {
                    let bound = 1e-8
                        * Vector3::new(p.x, p.y, 1.0).norm()
                        * Vector3::new(q.x, q.y, 1.0).norm();
                    assert!(epipolar_residual(&f, p, q) < bound.max(1e-10));
                }
            }
        }
    }

    #[test]
    fn pure_translation_fronto_parallel_gives_translation() {
        // Camera translating by t with the plane fronto-parallel at depth d:
        // the induced homography is the image translation (tx/d, ty/d).
        let t = Vector3::new(1.2, -0.6, 0.0);
        let depth = 4.0;
        let (f, h_gt) = plane_scene(0.0, t, depth);
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.3),
            Point2::new(-0.4, 0.9),
        ];
        let matches: [Correspondence; 3] =
            pts.map(|p| Correspondence::new(p, project_plane(&h_gt, p)));
        let h = homography_from_3pts_and_f(&f, &matches, 1e-9).unwrap();
        let expected = Homography::translation(t.x / depth, t.y / depth).unwrap();
        for i in 0..20 {
            let p = Point2::new(i as f64 * 0.1 - 1.0, (i % 5) as f64 * 0.3);
            let a = h.map(p).unwrap();
            let b = expected.map(p).unwrap();
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn gate_violation_is_reported() {
        let (f, h_gt) = plane_scene(0.05, Vector3::new(0.4, -0.1, 0.02), 5.0);
        let p = Point2::new(0.3, 0.2);
        let mut q = project_plane(&h_gt, p);
        q.y += 5.0;
        let matches = [
            Correspondence::new(p, q),
            Correspondence::new(Point2::new(-0.5, 0.6), project_plane(&h_gt, Point2::new(-0.5, 0.6))),
            Correspondence::new(Point2::new(0.1, -0.7), project_plane(&h_gt, Point2::new(0.1, -0.7))),
        ];
        assert!(matches!(
            homography_from_3pts_and_f(&f, &matches, 1e-9),
            Err(GeometryError::EpipolarGateViolated { .. })
        ));
    }

    #[test]
    fn least_squares_fits_exact_correspondences() {
        let h_gt = Homography::new(Matrix3::new(
            1.05, 0.02, 2.0, -0.03, 0.98, -1.0, 1e-4, -5e-5, 1.0,
        ))
        .unwrap();
        let src: Vec<Point2<f64>> = (0..30)
            .map(|i| Point2::new((i % 6) as f64 * 3.0, (i / 6) as f64 * 3.0))
            .collect();
        let dst: Vec<Point2<f64>> = src.iter().map(|p| h_gt.map(*p).unwrap()).collect();
        let h = homography_least_squares(&src, &dst).unwrap();
        for (p, d) in src.iter().zip(dst.iter()) {
            assert!((h.map(*p).unwrap() - d).norm() < 1e-8);
        }
    }
}
