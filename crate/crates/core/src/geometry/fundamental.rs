use nalgebra::{DMatrix, Matrix3, Point2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{hartley_normalization, GeometryError};

/// A rank-2 fundamental matrix with unit Frobenius norm. The smallest
/// singular value is exactly zeroed on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    m: Matrix3<f64>,
}

impl FundamentalMatrix {
    /// Enforces rank 2 (zeroing the smallest singular value), normalizes to
    /// unit Frobenius norm, and fixes the sign so the entry of largest
    /// magnitude is positive.
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) || m.norm() < 1e-300 {
            return Err(GeometryError::DegenerateConfiguration(
                "fundamental matrix candidate is zero or non-finite".into(),
            ));
        }
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd with u");
        let vt = svd.v_t.expect("svd with v_t");
        let mut sv = svd.singular_values;
        // nalgebra returns singular values in descending order; guard anyway.
        let min_idx = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
        sv[min_idx] = 0.0;
        let mut rebuilt = Matrix3::zeros();
        for k in 0..3 {
            rebuilt += sv[k] * u.column(k) * vt.row(k);
        }
        let n = rebuilt.norm();
        if n < 1e-300 {
            return Err(GeometryError::DegenerateConfiguration(
                "rank-2 projection collapsed to zero".into(),
            ));
        }
        let mut out = rebuilt / n;
        let mut pivot = 0.0f64;
        for v in out.iter() {
            if v.abs() > pivot.abs() {
                pivot = *v;
            }
        }
        if pivot < 0.0 {
            out = -out;
        }
        Ok(Self { m: out })
    }

    /// Skew-symmetric cross-product matrix of `e`, normalized. This is the
    /// fundamental matrix of a purely translating camera with epipole `e`.
    pub fn from_cross(e: Vector3<f64>) -> Result<Self, GeometryError> {
        Self::new(skew(e))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }
}

pub(crate) fn skew(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A point match between the two frames: `p` in the first image, `q` in the
/// second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p: Point2<f64>,
    pub q: Point2<f64>,
}

impl Correspondence {
    pub fn new(p: Point2<f64>, q: Point2<f64>) -> Self {
        Self { p, q }
    }
}

#[inline]
fn lift(p: Point2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// Absolute value of the algebraic epipolar product `q^T F p`.
pub fn epipolar_residual(f: &FundamentalMatrix, p: Point2<f64>, q: Point2<f64>) -> f64 {
    (lift(q).dot(&(f.matrix() * lift(p)))).abs()
}

/// Symmetric epipolar line distance in pixels: the larger of the distances
/// from `q` to the line `F p` and from `p` to the line `F^T q`.
pub fn sym_epipolar_distance(f: &Matrix3<f64>, p: Point2<f64>, q: Point2<f64>) -> f64 {
    let fp = f * lift(p);
    let ftq = f.transpose() * lift(q);
    let r = lift(q).dot(&fp).abs();
    let n1 = fp.x.hypot(fp.y);
    let n2 = ftq.x.hypot(ftq.y);
    let d1 = if n1 > 1e-300 { r / n1 } else { f64::INFINITY };
    let d2 = if n2 > 1e-300 { r / n2 } else { f64::INFINITY };
    d1.max(d2)
}

/// Left null vector of `F` (the second-image epipole), unit norm, with the
/// component of largest magnitude made positive.
pub fn epipole(f: &FundamentalMatrix) -> Vector3<f64> {
    let svd = f.matrix().svd(true, false);
    let u = svd.u.expect("svd with u");
    let sv = svd.singular_values;
    let min_idx = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
    let mut e = Vector3::new(u[(0, min_idx)], u[(1, min_idx)], u[(2, min_idx)]);
    let mut pivot = 0.0f64;
    for v in e.iter() {
        if v.abs() > pivot.abs() {
            pivot = *v;
        }
    }
    if pivot < 0.0 {
        e = -e;
    }
    e
}

/// Unnormalized eight-point solve on already Hartley-normalized points.
/// Returns `None` when the design matrix has a nullspace of dimension
/// greater than one (degenerate sample).
fn eight_point_linear(ps: &[Point2<f64>], qs: &[Point2<f64>]) -> Option<Matrix3<f64>> {
    let n = ps.len();
    let mut a = DMatrix::zeros(n, 9);
    for (row, (p, q)) in ps.iter().zip(qs.iter()).enumerate() {
        a[(row, 0)] = q.x * p.x;
        a[(row, 1)] = q.x * p.y;
        a[(row, 2)] = q.x;
        a[(row, 3)] = q.y * p.x;
        a[(row, 4)] = q.y * p.y;
        a[(row, 5)] = q.y;
        a[(row, 6)] = p.x;
        a[(row, 7)] = p.y;
        a[(row, 8)] = 1.0;
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("svd with v_t");
    let sv = &svd.singular_values;
    if n >= 9 {
        // Overdetermined: fine as long as the matrix is not identically rank
        // deficient; the least-squares null vector is still well defined.
    } else {
        // Exactly eight rows: a second vanishing singular value means the
        // sample does not pin the solution down.
        let max_sv = sv.iter().cloned().fold(0.0f64, f64::max);
        let second_smallest = {
            let mut vals: Vec<f64> = sv.iter().cloned().collect();
            vals.sort_by(f64::total_cmp);
            vals[0]
        };
        if second_smallest < 1e-10 * max_sv.max(1e-300) {
            return None;
        }
    }
    let null_row = vt.nrows() - 1;
    let f = vt.row(null_row);
    Some(Matrix3::new(
        f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8],
    ))
}

/// Normalized eight-point fit on an arbitrary subset of matches.
fn fit_normalized(matches: &[Correspondence], idx: &[usize]) -> Option<Matrix3<f64>> {
    let ps: Vec<Point2<f64>> = idx.iter().map(|&i| matches[i].p).collect();
    let qs: Vec<Point2<f64>> = idx.iter().map(|&i| matches[i].q).collect();
    let (tp, psn) = hartley_normalization(&ps);
    let (tq, qsn) = hartley_normalization(&qs);
    let fn_ = eight_point_linear(&psn, &qsn)?;
    Some(tq.transpose() * fn_ * tp)
}

/// Estimates the fundamental matrix with the normalized eight-point
/// algorithm inside a RANSAC loop.
///
/// The inlier criterion is the symmetric epipolar line distance against
/// `inlier_thresh` pixels. The winning model is re-fit on all of its inliers
/// and the returned mask is recomputed against that final matrix. The whole
/// procedure is deterministic for a fixed seed.
pub fn estimate_fundamental(
    matches: &[Correspondence],
    iters: usize,
    inlier_thresh: f64,
    seed: u64,
) -> Result<(FundamentalMatrix, Vec<bool>), GeometryError> {
    if matches.len() < 8 {
        return Err(GeometryError::InsufficientMatches {
            needed: 8,
            got: matches.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = matches.len();

    let mut best: Option<(usize, f64, Matrix3<f64>)> = None;
    for _ in 0..iters.max(1) {
        let sample = rand::seq::index::sample(&mut rng, n, 8).into_vec();
        let Some(f) = fit_normalized(matches, &sample) else {
            continue;
        };
        let mut count = 0usize;
        let mut score = 0.0f64;
        for m in matches {
            let d = sym_epipolar_distance(&f, m.p, m.q);
            if d <= inlier_thresh {
                count += 1;
                score += d;
            }
        }
        let better = match &best {
            None => count >= 8,
            Some((bc, bs, _)) => count > *bc || (count == *bc && score < *bs),
        };
        if better {
            best = Some((count, score, f));
        }
        if count == n {
            break;
        }
    }

    let (_, _, f0) = best.ok_or(GeometryError::NoConsensus)?;
    let inliers: Vec<usize> = (0..n)
        .filter(|&i| sym_epipolar_distance(&f0, matches[i].p, matches[i].q) <= inlier_thresh)
        .collect();
    if inliers.len() < 8 {
        return Err(GeometryError::NoConsensus);
    }
    let refit = fit_normalized(matches, &inliers).ok_or(GeometryError::NoConsensus)?;
    let f = FundamentalMatrix::new(refit)?;
    let mask: Vec<bool> = matches
        .iter()
        .map(|m| sym_epipolar_distance(f.matrix(), m.p, m.q) <= inlier_thresh)
        .collect();
    if mask.iter().filter(|&&b| b).count() < 8 {
        return Err(GeometryError::NoConsensus);
    }
    Ok((f, mask))
}
