use std::collections::HashSet;

use nalgebra::Point2;
use rayon::prelude::*;

use super::census::{signature_distance, ternary_signature, TernarySignature};
use crate::geometry::FundamentalMatrix;
use crate::model::{
    BoundaryLabel, EnergyConfig, GrayImage, Homography, LabelProbMap, ModelError, MotionField,
    OcclusionState, SemanticClassTable, SuperpixelSegmentation,
};

/// Per-term values of the objective and their weighted total.
///
/// The stored terms are unweighted; the total applies the configured term
/// weights. A disabled term (weight zero) reads as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub e_d: f64,
    pub e_l: f64,
    pub e_p: f64,
    pub e_c: f64,
    pub e_b: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn from_terms(cfg: &EnergyConfig, e_d: f64, e_l: f64, e_p: f64, e_c: f64, e_b: f64) -> Self {
        let total = e_d
            + cfg.lambda_l * e_l
            + cfg.lambda_p * e_p
            + cfg.lambda_c * e_c
            + cfg.lambda_b * e_b;
        Self {
            e_d,
            e_l,
            e_p,
            e_c,
            e_b,
            total,
        }
    }

    pub fn zero() -> Self {
        Self {
            e_d: 0.0,
            e_l: 0.0,
            e_p: 0.0,
            e_c: 0.0,
            e_b: 0.0,
            total: 0.0,
        }
    }
}

/// Representative class of a superpixel: the class with the highest summed
/// probability over the superpixel's pixels; ties break toward the smallest
/// class id.
pub fn representative_label(
    seg: &SuperpixelSegmentation,
    s: u32,
    labels: &LabelProbMap,
) -> u32 {
    let classes = labels.classes();
    let mut sums = vec![0.0f64; classes];
    for &px in seg.members(s) {
        let d = labels.dist(px as usize);
        for (acc, v) in sums.iter_mut().zip(d.iter()) {
            *acc += v;
        }
    }
    let mut best = 0usize;
    for i in 1..classes {
        if sums[i] > sums[best] {
            best = i;
        }
    }
    best as u32
}

#[inline]
fn round_target(q: Point2<f64>) -> Option<(i64, i64)> {
    if q.x.abs() > 1e12 || q.y.abs() > 1e12 {
        return None;
    }
    Some((q.x.round() as i64, q.y.round() as i64))
}

/// Pixels of the back superpixel whose rounded warp target collides with a
/// rounded warp target of the front superpixel. Returned sorted by linear
/// pixel index; pixels with a degenerate projection on either side do not
/// collide.
pub fn occluded_set(
    seg: &SuperpixelSegmentation,
    front: u32,
    back: u32,
    h_front: &Homography,
    h_back: &Homography,
) -> Vec<u32> {
    let width = seg.width();
    let front_targets: HashSet<(i64, i64)> = seg
        .members(front)
        .iter()
        .filter_map(|&px| {
            let (x, y) = (px as usize % width, px as usize / width);
            h_front
                .map(Point2::new(x as f64, y as f64))
                .and_then(round_target)
        })
        .collect();
    seg.members(back)
        .iter()
        .filter(|&&px| {
            let (x, y) = (px as usize % width, px as usize / width);
            h_back
                .map(Point2::new(x as f64, y as f64))
                .and_then(round_target)
                .is_some_and(|t| front_targets.contains(&t))
        })
        .copied()
        .collect()
}

/// Immutable problem data plus the caches used by every term evaluation:
/// the census signatures of the reference frame and the representative
/// labels of the superpixels.
pub struct EnergyModel<'a> {
    pub frame_t: &'a GrayImage,
    pub frame_t1: &'a GrayImage,
    pub seg: &'a SuperpixelSegmentation,
    pub labels_prev: &'a LabelProbMap,
    pub labels_evidence: &'a LabelProbMap,
    pub fundamental: Option<&'a FundamentalMatrix>,
    pub table: &'a SemanticClassTable,
    pub cfg: &'a EnergyConfig,
    src_sigs: Vec<TernarySignature>,
    rep_labels: Vec<u32>,
    rep_static: Vec<bool>,
}

impl<'a> EnergyModel<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_t: &'a GrayImage,
        frame_t1: &'a GrayImage,
        seg: &'a SuperpixelSegmentation,
        labels_prev: &'a LabelProbMap,
        labels_evidence: &'a LabelProbMap,
        fundamental: Option<&'a FundamentalMatrix>,
        table: &'a SemanticClassTable,
        cfg: &'a EnergyConfig,
    ) -> Result<Self, ModelError> {
        let (w, h) = (frame_t.width(), frame_t.height());
        if frame_t1.width() != w || frame_t1.height() != h {
            return Err(ModelError::DimensionMismatch("frames differ in size".into()));
        }
        if seg.width() != w || seg.height() != h {
            return Err(ModelError::DimensionMismatch(
                "segmentation does not match the frames".into(),
            ));
        }
        for (name, m) in [("previous", labels_prev), ("evidence", labels_evidence)] {
            if m.width() != w || m.height() != h {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name} label map does not match the frames"
                )));
            }
            if m.classes() != table.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name} label map has {} classes, table has {}",
                    m.classes(),
                    table.len()
                )));
            }
        }
        if cfg.lambda_p > 0.0 && fundamental.is_none() {
            return Err(ModelError::InvalidValue(
                "lambda_p > 0 requires a fundamental matrix".into(),
            ));
        }

        let src_sigs: Vec<TernarySignature> = (0..w * h)
            .into_par_iter()
            .map(|px| {
                let (x, y) = (px % w, px / w);
                ternary_signature(
                    frame_t,
                    (x as f64, y as f64),
                    cfg.census_radius,
                    cfg.census_eps,
                )
            })
            .collect();
        let rep_labels: Vec<u32> = (0..seg.count() as u32)
            .map(|s| representative_label(seg, s, labels_prev))
            .collect();
        let rep_static = rep_labels.iter().map(|&c| table.is_static(c)).collect();

        Ok(Self {
            frame_t,
            frame_t1,
            seg,
            labels_prev,
            labels_evidence,
            fundamental,
            table,
            cfg,
            src_sigs,
            rep_labels,
            rep_static,
        })
    }

    pub fn rep_label(&self, s: u32) -> u32 {
        self.rep_labels[s as usize]
    }

    #[inline]
    fn pixel_point(&self, px: usize) -> Point2<f64> {
        let w = self.seg.width();
        Point2::new((px % w) as f64, (px / w) as f64)
    }

    /// Census cost of moving pixel `px` by `h`. Targets outside the image or
    /// with a degenerate projection cost the full truncation value.
    pub fn pixel_data_cost(&self, px: usize, h: &Homography) -> f64 {
        let p = self.pixel_point(px);
        match h.map(p) {
            Some(q) if self.frame_t1.contains(q.x, q.y) => {
                let sig_q = ternary_signature(
                    self.frame_t1,
                    (q.x, q.y),
                    self.cfg.census_radius,
                    self.cfg.census_eps,
                );
                (signature_distance(&self.src_sigs[px], &sig_q) as f64).min(self.cfg.tau_d)
            }
            _ => self.cfg.tau_d,
        }
    }

    /// Label inconsistency of pixel `px` under `h`, without the occlusion
    /// factor: half the squared distance between the estimate at the rounded
    /// target and the blend of evidence and propagated previous labels.
    /// Targets outside the image contribute 0 (unobservable).
    pub fn pixel_label_cost(&self, px: usize, h: &Homography, labels_next: &LabelProbMap) -> f64 {
        let p = self.pixel_point(px);
        let Some(q) = h.map(p) else {
            return 0.0;
        };
        let Some((qx, qy)) = round_target(q) else {
            return 0.0;
        };
        let (w, ht) = (self.seg.width() as i64, self.seg.height() as i64);
        if qx < 0 || qy < 0 || qx >= w || qy >= ht {
            return 0.0;
        }
        let tgt = (qy * w + qx) as usize;
        let alpha = self.cfg.alpha;
        let next = labels_next.dist(tgt);
        let evidence = self.labels_evidence.dist(tgt);
        let prev = self.labels_prev.dist(px);
        let mut acc = 0.0;
        for i in 0..next.len() {
            let d = next[i] - (alpha * evidence[i] + (1.0 - alpha) * prev[i]);
            acc += d * d;
        }
        0.5 * acc
    }

    /// Data share of one superpixel: mean over its pixels of the census cost
    /// for visible pixels and the occlusion penalty for occluded ones.
    pub fn data_term_superpixel(
        &self,
        s: u32,
        h: &Homography,
        occluded: impl Fn(usize) -> bool,
    ) -> f64 {
        let members = self.seg.members(s);
        let mut acc = 0.0;
        for &px in members {
            let px = px as usize;
            acc += if occluded(px) {
                self.cfg.lambda_o
            } else {
                self.pixel_data_cost(px, h)
            };
        }
        acc / members.len() as f64
    }

    /// Full data term: sum of the per-superpixel shares.
    pub fn image_data_term(&self, mf: &MotionField, occ: &OcclusionState) -> f64 {
        let shares: Vec<f64> = (0..self.seg.count() as u32)
            .into_par_iter()
            .map(|s| self.data_term_superpixel(s, mf.get(s), |px| occ.occluded(px)))
            .collect();
        shares.iter().sum()
    }

    /// Label share of one superpixel. Zero when the label term is disabled.
    pub fn label_term_superpixel(
        &self,
        s: u32,
        h: &Homography,
        labels_next: &LabelProbMap,
        occluded: impl Fn(usize) -> bool,
    ) -> f64 {
        if self.cfg.lambda_l == 0.0 {
            return 0.0;
        }
        let members = self.seg.members(s);
        let mut acc = 0.0;
        for &px in members {
            let px = px as usize;
            if !occluded(px) {
                acc += self.pixel_label_cost(px, h, labels_next);
            }
        }
        acc / members.len() as f64
    }

    /// Full label consistency term.
    pub fn label_data_term(
        &self,
        mf: &MotionField,
        occ: &OcclusionState,
        labels_next: &LabelProbMap,
    ) -> f64 {
        if self.cfg.lambda_l == 0.0 {
            return 0.0;
        }
        let shares: Vec<f64> = (0..self.seg.count() as u32)
            .into_par_iter()
            .map(|s| self.label_term_superpixel(s, mf.get(s), labels_next, |px| occ.occluded(px)))
            .collect();
        shares.iter().sum()
    }

    /// Truncation ceiling of the epipolar residual for superpixel `s`:
    /// higher for superpixels whose representative class is static.
    pub fn physical_ceiling(&self, s: u32) -> f64 {
        if self.rep_static[s as usize] {
            self.cfg.lambda_non_st + self.cfg.beta
        } else {
            self.cfg.lambda_non_st
        }
    }

    /// Epipolar share of one superpixel: the mean algebraic epipolar residual
    /// of its pixels under `h`, truncated at the ceiling. Zero when the term
    /// is disabled.
    pub fn physical_term_superpixel(&self, s: u32, h: &Homography) -> f64 {
        if self.cfg.lambda_p == 0.0 {
            return 0.0;
        }
        let f = self.fundamental.expect("checked at construction").matrix();
        let members = self.seg.members(s);
        let mut acc = 0.0;
        for &px in members {
            let p = self.pixel_point(px as usize);
            match h.map(p) {
                Some(q) => {
                    let lp = f * nalgebra::Vector3::new(p.x, p.y, 1.0);
                    acc += (q.x * lp.x + q.y * lp.y + lp.z).abs();
                }
                None => {
                    acc = f64::INFINITY;
                    break;
                }
            }
        }
        let mean = acc / members.len() as f64;
        mean.min(self.physical_ceiling(s))
    }

    /// Full epipolar term.
    pub fn physical_term(&self, mf: &MotionField) -> f64 {
        if self.cfg.lambda_p == 0.0 {
            return 0.0;
        }
        let shares: Vec<f64> = (0..self.seg.count() as u32)
            .into_par_iter()
            .map(|s| self.physical_term_superpixel(s, mf.get(s)))
            .collect();
        shares.iter().sum()
    }

    /// L1 distance between the two mapped images of pixel `px`; a degenerate
    /// projection on either side reads as the impossibility penalty.
    #[inline]
    fn mapped_l1(&self, h_i: &Homography, h_j: &Homography, px: usize) -> f64 {
        let p = self.pixel_point(px);
        match (h_i.map(p), h_j.map(p)) {
            (Some(a), Some(b)) => (a.x - b.x).abs() + (a.y - b.y).abs(),
            _ => self.cfg.lambda_imp,
        }
    }

    /// Connectivity potential of one edge under the given relation and
    /// occlusion bits.
    pub fn edge_potential(
        &self,
        edge: usize,
        h_i: &Homography,
        h_j: &Homography,
        label: BoundaryLabel,
        occluded: &impl Fn(usize) -> bool,
    ) -> f64 {
        let (i, j) = self.seg.adjacency()[edge];
        match label {
            BoundaryLabel::CoPlanar => {
                self.smoothness_mean(edge, h_i, h_j, false)
                    + self.union_impossibility(i, j, occluded)
            }
            BoundaryLabel::Hinge => {
                self.smoothness_mean(edge, h_i, h_j, true)
                    + self.union_impossibility(i, j, occluded)
            }
            BoundaryLabel::LeftOcc => {
                let omega = occluded_set(self.seg, i, j, h_i, h_j);
                self.phi_occ_with_omega(i, j, &omega, occluded)
            }
            BoundaryLabel::RightOcc => {
                let omega = occluded_set(self.seg, j, i, h_j, h_i);
                self.phi_occ_with_omega(j, i, &omega, occluded)
            }
        }
    }

    /// Mean motion discrepancy of an edge: over the union of the two
    /// superpixels for the co-planar relation, over the shared boundary for
    /// a hinge.
    pub fn smoothness_mean(
        &self,
        edge: usize,
        h_i: &Homography,
        h_j: &Homography,
        boundary_only: bool,
    ) -> f64 {
        let (i, j) = self.seg.adjacency()[edge];
        if boundary_only {
            let set = self.seg.boundary_set(edge);
            let sum: f64 = set
                .iter()
                .map(|&px| self.mapped_l1(h_i, h_j, px as usize))
                .sum();
            sum / set.len() as f64
        } else {
            let mi = self.seg.members(i);
            let mj = self.seg.members(j);
            let sum: f64 = mi
                .iter()
                .chain(mj.iter())
                .map(|&px| self.mapped_l1(h_i, h_j, px as usize))
                .sum();
            sum / (mi.len() + mj.len()) as f64
        }
    }

    /// Impossibility charge of occluded pixels inside the union of an edge's
    /// superpixels (applies to the co-planar and hinge relations).
    fn union_impossibility(&self, i: u32, j: u32, occluded: &impl Fn(usize) -> bool) -> f64 {
        let count = self
            .seg
            .members(i)
            .iter()
            .chain(self.seg.members(j).iter())
            .filter(|&&px| occluded(px as usize))
            .count();
        count as f64 * self.cfg.lambda_imp
    }

    /// Occlusion-relation potential given a precomputed collision set: the
    /// front superpixel must be fully visible and the back superpixel's
    /// occluded pixels must be exactly the collision set.
    pub fn phi_occ_with_omega(
        &self,
        front: u32,
        back: u32,
        omega: &[u32],
        occluded: &impl Fn(usize) -> bool,
    ) -> f64 {
        let mut violations = 0usize;
        for &px in self.seg.members(front) {
            if occluded(px as usize) {
                violations += 1;
            }
        }
        let mut omega_iter = omega.iter().peekable();
        for &px in self.seg.members(back) {
            while omega_iter.peek().is_some_and(|&&o| o < px) {
                omega_iter.next();
            }
            let in_omega = omega_iter.peek().is_some_and(|&&o| o == px);
            let is_occ = occluded(px as usize);
            if in_omega != is_occ {
                violations += 1;
            }
        }
        violations as f64 * self.cfg.lambda_imp
    }

    /// Full connectivity term.
    pub fn connectivity_term(&self, mf: &MotionField, occ: &OcclusionState) -> f64 {
        let shares: Vec<f64> = (0..self.seg.edge_count())
            .into_par_iter()
            .map(|e| {
                let (i, j) = self.seg.adjacency()[e];
                self.edge_potential(e, mf.get(i), mf.get(j), occ.edge_label(e), &|px| {
                    occ.occluded(px)
                })
            })
            .collect();
        shares.iter().sum()
    }

    /// Prior of one edge relation. Depends on the occlusion state only
    /// through the relation, never through the pixel mask.
    pub fn edge_prior(&self, edge: usize, label: BoundaryLabel) -> f64 {
        let (i, j) = self.seg.adjacency()[edge];
        match label {
            BoundaryLabel::CoPlanar => {
                if self.rep_labels[i as usize] != self.rep_labels[j as usize] {
                    self.cfg.lambda_co
                } else {
                    0.0
                }
            }
            BoundaryLabel::Hinge => self.cfg.lambda_h,
            BoundaryLabel::LeftOcc | BoundaryLabel::RightOcc => self.cfg.lambda_occ,
        }
    }

    /// Full boundary relation prior.
    pub fn boundary_prior(&self, occ: &OcclusionState) -> f64 {
        (0..self.seg.edge_count())
            .map(|e| self.edge_prior(e, occ.edge_label(e)))
            .sum()
    }

    /// Evaluates every term and the weighted total.
    pub fn total(
        &self,
        mf: &MotionField,
        occ: &OcclusionState,
        labels_next: &LabelProbMap,
    ) -> EnergyBreakdown {
        let e_d = self.image_data_term(mf, occ);
        let e_l = self.label_data_term(mf, occ, labels_next);
        let e_p = self.physical_term(mf);
        let e_c = self.connectivity_term(mf, occ);
        let e_b = self.boundary_prior(occ);
        EnergyBreakdown::from_terms(self.cfg, e_d, e_l, e_p, e_c, e_b)
    }
}
