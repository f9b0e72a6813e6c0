//! Straight-line re-implementation of every energy term, used as the
//! independent oracle by the property suites.
//!
//! Nothing below the raw domain types is shared with the production
//! evaluator: projection, bilinear sampling, census signatures, and the
//! occlusion collision sets are all recomputed here with plain nested loops
//! on `f64` arrays.

use std::collections::HashSet;

use crate::energy::EnergyBreakdown;
use crate::geometry::FundamentalMatrix;
use crate::model::{
    BoundaryLabel, EnergyConfig, GrayImage, LabelProbMap, MotionField, OcclusionState,
    SemanticClassTable, SuperpixelSegmentation,
};

struct Grid<'a> {
    w: usize,
    h: usize,
    v: &'a [f64],
}

impl<'a> Grid<'a> {
    fn of(img: &'a GrayImage) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            v: img.data(),
        }
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.w - 1) as f64);
        let yc = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = if x0 + 1 < self.w { x0 + 1 } else { x0 };
        let y1 = if y0 + 1 < self.h { y0 + 1 } else { y0 };
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = self.v[y0 * self.w + x0] * (1.0 - fx) + self.v[y0 * self.w + x1] * fx;
        let bot = self.v[y1 * self.w + x0] * (1.0 - fx) + self.v[y1 * self.w + x1] * fx;
        top * (1.0 - fy) + bot * fy
    }
}

type Mat = [[f64; 3]; 3];

fn mat_of(h: &crate::model::Homography) -> Mat {
    let m = h.matrix();
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn project(m: &Mat, x: f64, y: f64) -> Option<(f64, f64)> {
    let w = m[2][0] * x + m[2][1] * y + m[2][2];
    if w <= 1e-12 {
        return None;
    }
    Some((
        (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
        (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
    ))
}

fn census_states(img: &Grid, cx: f64, cy: f64, radius: usize, eps: f64) -> Vec<u8> {
    let mut states = Vec::with_capacity((2 * radius + 1) * (2 * radius + 1) - 1);
    let center = img.bilinear(cx, cy);
    for dy in -(radius as i64)..=radius as i64 {
        for dx in -(radius as i64)..=radius as i64 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let v = img.bilinear(cx + dx as f64, cy + dy as f64);
            let d = v - center;
            states.push(if d < -eps {
                0
            } else if d > eps {
                2
            } else {
                1
            });
        }
    }
    states
}

fn round_pair(x: f64, y: f64) -> Option<(i64, i64)> {
    if x.abs() > 1e12 || y.abs() > 1e12 {
        return None;
    }
    Some((x.round() as i64, y.round() as i64))
}

/// Evaluates every term of the objective with plain nested loops and no
/// caching, mirroring the documented term semantics: out-of-image or
/// degenerate data targets cost the truncation value, out-of-image label
/// targets cost nothing, a degenerate epipolar projection truncates at the
/// ceiling, and degenerate smoothness projections charge the impossibility
/// penalty.
#[allow(clippy::too_many_arguments)]
pub fn oracle_energy(
    frame_t: &GrayImage,
    frame_t1: &GrayImage,
    seg: &SuperpixelSegmentation,
    labels_prev: &LabelProbMap,
    labels_evidence: &LabelProbMap,
    fundamental: Option<&FundamentalMatrix>,
    table: &SemanticClassTable,
    cfg: &EnergyConfig,
    mf: &MotionField,
    occ: &OcclusionState,
    labels_next: &LabelProbMap,
) -> EnergyBreakdown {
    let g_t = Grid::of(frame_t);
    let g_t1 = Grid::of(frame_t1);
    let (w, h) = (seg.width(), seg.height());
    let mats: Vec<Mat> = mf.homographies().iter().map(mat_of).collect();
    let classes = labels_prev.classes();

    // Representative class per superpixel: argmax of summed probabilities,
    // ties toward the smaller id.
    let rep: Vec<u32> = (0..seg.count())
        .map(|s| {
            let mut sums = vec![0.0f64; classes];
            for &px in seg.members(s as u32) {
                for (c, acc) in sums.iter_mut().enumerate() {
                    *acc += labels_prev.probs()[px as usize * classes + c];
                }
            }
            let mut best = 0;
            for c in 1..classes {
                if sums[c] > sums[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect();

    // Data term.
    let mut e_d = 0.0;
    for s in 0..seg.count() {
        let m = &mats[s];
        let mut acc = 0.0;
        for &px in seg.members(s as u32) {
            let px = px as usize;
            if occ.mask()[px] {
                acc += cfg.lambda_o;
                continue;
            }
            let (x, y) = (px % w, px / w);
            let cost = match project(m, x as f64, y as f64) {
                Some((qx, qy))
                    if qx >= 0.0
                        && qy >= 0.0
                        && qx <= (w - 1) as f64
                        && qy <= (h - 1) as f64 =>
                {
                    let a = census_states(&g_t, x as f64, y as f64, cfg.census_radius, cfg.census_eps);
                    let b = census_states(&g_t1, qx, qy, cfg.census_radius, cfg.census_eps);
                    let differing = a
                        .iter()
                        .zip(b.iter())
                        .filter(|(sa, sb)| sa != sb)
                        .count();
                    (differing as f64).min(cfg.tau_d)
                }
                _ => cfg.tau_d,
            };
            acc += cost;
        }
        e_d += acc / seg.members(s as u32).len() as f64;
    }

    // Label term.
    let mut e_l = 0.0;
    if cfg.lambda_l != 0.0 {
        for s in 0..seg.count() {
            let m = &mats[s];
            let mut acc = 0.0;
            for &px in seg.members(s as u32) {
                let px = px as usize;
                if occ.mask()[px] {
                    continue;
                }
                let (x, y) = (px % w, px / w);
                let Some((qx, qy)) = project(m, x as f64, y as f64) else {
                    continue;
                };
                let Some((rx, ry)) = round_pair(qx, qy) else {
                    continue;
                };
                if rx < 0 || ry < 0 || rx >= w as i64 || ry >= h as i64 {
                    continue;
                }
                let tgt = ry as usize * w + rx as usize;
                let mut sq = 0.0;
                for c in 0..classes {
                    let next = labels_next.probs()[tgt * classes + c];
                    let ev = labels_evidence.probs()[tgt * classes + c];
                    let prev = labels_prev.probs()[px * classes + c];
                    let d = next - (cfg.alpha * ev + (1.0 - cfg.alpha) * prev);
                    sq += d * d;
                }
                acc += 0.5 * sq;
            }
            e_l += acc / seg.members(s as u32).len() as f64;
        }
    }

    // Epipolar term.
    let mut e_p = 0.0;
    if cfg.lambda_p != 0.0 {
        let fm = fundamental.expect("epipolar term enabled without F");
        let f = fm.matrix();
        let f: Mat = [
            [f[(0, 0)], f[(0, 1)], f[(0, 2)]],
            [f[(1, 0)], f[(1, 1)], f[(1, 2)]],
            [f[(2, 0)], f[(2, 1)], f[(2, 2)]],
        ];
        for s in 0..seg.count() {
            let ceiling = if table.is_static(rep[s]) {
                cfg.lambda_non_st + cfg.beta
            } else {
                cfg.lambda_non_st
            };
            let m = &mats[s];
            let mut acc = 0.0;
            for &px in seg.members(s as u32) {
                let (x, y) = ((px as usize % w) as f64, (px as usize / w) as f64);
                match project(m, x, y) {
                    Some((qx, qy)) => {
                        let lx = f[0][0] * x + f[0][1] * y + f[0][2];
                        let ly = f[1][0] * x + f[1][1] * y + f[1][2];
                        let lz = f[2][0] * x + f[2][1] * y + f[2][2];
                        acc += (qx * lx + qy * ly + lz).abs();
                    }
                    None => {
                        acc = f64::INFINITY;
                        break;
                    }
                }
            }
            let mean = acc / seg.members(s as u32).len() as f64;
            e_p += mean.min(ceiling);
        }
    }

    // Connectivity term.
    let omega = |front: u32, back: u32| -> Vec<u32> {
        let fm = &mats[mf_index(front)];
        let bm = &mats[mf_index(back)];
        let mut targets = HashSet::new();
        for &px in seg.members(front) {
            let (x, y) = ((px as usize % w) as f64, (px as usize / w) as f64);
            if let Some((qx, qy)) = project(fm, x, y) {
                if let Some(t) = round_pair(qx, qy) {
                    targets.insert(t);
                }
            }
        }
        let mut out = Vec::new();
        for &px in seg.members(back) {
            let (x, y) = ((px as usize % w) as f64, (px as usize / w) as f64);
            if let Some((qx, qy)) = project(bm, x, y) {
                if let Some(t) = round_pair(qx, qy) {
                    if targets.contains(&t) {
                        out.push(px);
                    }
                }
            }
        }
        out
    };

    let mut e_c = 0.0;
    for (e, &(i, j)) in seg.adjacency().iter().enumerate() {
        let mi = &mats[i as usize];
        let mj = &mats[j as usize];
        let l1 = |px: u32| -> f64 {
            let (x, y) = ((px as usize % w) as f64, (px as usize / w) as f64);
            match (project(mi, x, y), project(mj, x, y)) {
                (Some((ax, ay)), Some((bx, by))) => (ax - bx).abs() + (ay - by).abs(),
                _ => cfg.lambda_imp,
            }
        };
        let occupied = |members: &[u32]| -> usize {
            members.iter().filter(|&&px| occ.mask()[px as usize]).count()
        };
        e_c += match occ.edge_label(e) {
            BoundaryLabel::CoPlanar => {
                let mut sum = 0.0;
                let mut n = 0usize;
                for &px in seg.members(i).iter().chain(seg.members(j).iter()) {
                    sum += l1(px);
                    n += 1;
                }
                sum / n as f64
                    + (occupied(seg.members(i)) + occupied(seg.members(j))) as f64
                        * cfg.lambda_imp
            }
            BoundaryLabel::Hinge => {
                let set = seg.boundary_set(e);
                let sum: f64 = set.iter().map(|&px| l1(px)).sum();
                sum / set.len() as f64
                    + (occupied(seg.members(i)) + occupied(seg.members(j))) as f64
                        * cfg.lambda_imp
            }
            BoundaryLabel::LeftOcc | BoundaryLabel::RightOcc => {
                let (front, back) = if occ.edge_label(e) == BoundaryLabel::LeftOcc {
                    (i, j)
                } else {
                    (j, i)
                };
                let om: HashSet<u32> = omega(front, back).into_iter().collect();
                let mut violations = 0usize;
                for &px in seg.members(front) {
                    if occ.mask()[px as usize] {
                        violations += 1;
                    }
                }
                for &px in seg.members(back) {
                    let in_omega = om.contains(&px);
                    let masked = occ.mask()[px as usize];
                    if in_omega != masked {
                        violations += 1;
                    }
                }
                violations as f64 * cfg.lambda_imp
            }
        };
    }

    // Boundary prior.
    let mut e_b = 0.0;
    for (e, &(i, j)) in seg.adjacency().iter().enumerate() {
        e_b += match occ.edge_label(e) {
            BoundaryLabel::CoPlanar => {
                if rep[i as usize] != rep[j as usize] {
                    cfg.lambda_co
                } else {
                    0.0
                }
            }
            BoundaryLabel::Hinge => cfg.lambda_h,
            BoundaryLabel::LeftOcc | BoundaryLabel::RightOcc => cfg.lambda_occ,
        };
    }

    EnergyBreakdown::from_terms(cfg, e_d, e_l, e_p, e_c, e_b)
}

#[inline]
fn mf_index(s: u32) -> usize {
    s as usize
}
