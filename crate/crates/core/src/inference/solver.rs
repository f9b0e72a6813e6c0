use std::collections::HashSet;

use nalgebra::Point2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::rng::stream;
use super::state::{MessageStore, Particle, ParticleSet, SolverState};
use super::SolverError;
use crate::energy::{occluded_set, EnergyBreakdown, EnergyModel};
use crate::geometry::{
    homography_from_3pts_and_f, homography_from_4pts, homography_least_squares, lk_refine,
    Correspondence,
};
use crate::model::{
    dense_flow, finite_energy_bound, validate_config, BoundaryLabel, FlowField, Homography,
    LabelProbMap, MotionField, OcclusionState,
};

const SALT_INIT: u64 = 0x01;
const SALT_PROPOSE: u64 = 0x02;

/// Output of a joint solve.
#[derive(Debug, Clone)]
pub struct JointEstimate {
    pub flow: FlowField,
    pub labels: LabelProbMap,
    pub occlusion: OcclusionState,
    pub trace: Vec<EnergyBreakdown>,
}

/// Block coordinate descent over the three variable blocks: particle-based
/// message passing updates the homographies, an exact per-edge enumeration
/// updates the boundary relations and the pixel mask, and a closed-form
/// gather updates the label map.
///
/// Every committed motion change must strictly lower the true objective
/// restricted to the superpixel and its incident edges (the message-passing
/// disbelief steers the particle populations, not the commits), and the
/// occlusion and label blocks are exact minimizers of their sub-objectives,
/// so the energy recorded after each outer iteration never increases.
pub struct Solver<'a> {
    model: EnergyModel<'a>,
    pub state: SolverState,
    sweep_order: Vec<u32>,
    sp_edges: Vec<Vec<usize>>,
    unary_cache: Vec<Vec<f64>>,
    mark_counts: Vec<u32>,
}

struct CandidateEval {
    homography: Homography,
    unary: f64,
    disbelief: f64,
    msg_in: Vec<f64>,
}

impl<'a> Solver<'a> {
    /// Builds the initial state: particle 0 fits the initial flow over each
    /// superpixel (identity without one), the remaining particles scatter it
    /// by random translations, edges start co-planar where representative
    /// labels agree and hinge elsewhere, nothing is occluded, and the label
    /// map starts at the evidence blend of the forward-propagated previous
    /// labels.
    pub fn new(
        model: EnergyModel<'a>,
        init_flow: Option<&FlowField>,
    ) -> Result<Self, SolverError> {
        let cfg = model.cfg;
        let report = validate_config(cfg, model.table);
        if !report.pass() {
            return Err(SolverError::InvalidConfig(report.violations().to_vec()));
        }
        let seg = model.seg;
        let bound = finite_energy_bound(
            cfg,
            seg.width(),
            seg.height(),
            seg.count(),
            seg.edge_count(),
            model.table.len(),
        );
        if cfg.lambda_imp <= bound {
            return Err(SolverError::ImpossiblePenaltyTooSmall {
                lambda_imp: cfg.lambda_imp,
                bound,
            });
        }
        if let Some(flow) = init_flow {
            if flow.width() != seg.width() || flow.height() != seg.height() {
                return Err(SolverError::Model(
                    crate::model::ModelError::DimensionMismatch(
                        "initial flow does not match the frames".into(),
                    ),
                ));
            }
        }

        let k = cfg.particle_count;
        let mut sets = Vec::with_capacity(seg.count());
        let mut motions = Vec::with_capacity(seg.count());
        for s in 0..seg.count() as u32 {
            let base = init_flow
                .and_then(|flow| fit_superpixel_homography(seg, s, flow))
                .unwrap_or_else(Homography::identity);
            let mut particles = vec![Particle {
                homography: base,
                disbelief: 0.0,
            }];
            let mut rng = stream(cfg.rng_seed, &[SALT_INIT, s as u64]);
            for _ in 1..k {
                let dx = rng.random_range(-cfg.max_disp..=cfg.max_disp);
                let dy = rng.random_range(-cfg.max_disp..=cfg.max_disp);
                let scattered = Homography::translation(dx, dy)
                    .and_then(|t| t.compose(&base))
                    .unwrap_or(base);
                particles.push(Particle {
                    homography: scattered,
                    disbelief: 0.0,
                });
            }
            motions.push(base);
            sets.push(particles);
        }
        let motion = MotionField::new(motions, seg).map_err(SolverError::Model)?;

        let mut occlusion = OcclusionState::unoccluded(seg);
        for (e, &(i, j)) in seg.adjacency().iter().enumerate() {
            if model.rep_label(i) != model.rep_label(j) {
                occlusion.set_edge_label(e, BoundaryLabel::Hinge);
            }
        }

        let labels_next = if cfg.lambda_l > 0.0 {
            compute_label_update(&model, &motion, &vec![false; seg.width() * seg.height()])
                .map_err(SolverError::Model)?
        } else {
            model.labels_evidence.clone()
        };

        let mut sweep_order: Vec<u32> = (0..seg.count() as u32).collect();
        sweep_order.sort_by(|&a, &b| {
            let (ax, ay) = seg.centroid(a);
            let (bx, by) = seg.centroid(b);
            (ay, ax, a).partial_cmp(&(by, bx, b)).expect("finite centroids")
        });
        let mut sp_edges = vec![Vec::new(); seg.count()];
        for (e, &(i, j)) in seg.adjacency().iter().enumerate() {
            sp_edges[i as usize].push(e);
            sp_edges[j as usize].push(e);
        }

        let state = SolverState {
            motion,
            occlusion,
            labels_next,
            particles: ParticleSet::new(sets, vec![0; seg.count()]),
            messages: MessageStore::zeros(seg.edge_count(), k),
            energy_trace: Vec::new(),
            edge_marks: vec![Vec::new(); seg.edge_count()],
        };
        Ok(Self {
            model,
            state,
            sweep_order,
            sp_edges,
            unary_cache: vec![Vec::new(); seg.count()],
            mark_counts: vec![0; seg.width() * seg.height()],
        })
    }

    pub fn model(&self) -> &EnergyModel<'a> {
        &self.model
    }

    /// Weighted unary energy of superpixel `s` under `h`: its data share
    /// plus the weighted epipolar and label shares, with the occlusion mask
    /// and label map held fixed.
    fn unary(&self, s: u32, h: &Homography) -> f64 {
        let occ = &self.state.occlusion;
        let cfg = self.model.cfg;
        let mut v = self
            .model
            .data_term_superpixel(s, h, |px| occ.occluded(px));
        if cfg.lambda_p > 0.0 {
            v += cfg.lambda_p * self.model.physical_term_superpixel(s, h);
        }
        if cfg.lambda_l > 0.0 {
            v += cfg.lambda_l
                * self
                    .model
                    .label_term_superpixel(s, h, &self.state.labels_next, |px| occ.occluded(px));
        }
        v
    }

    /// Weighted pairwise energy of an edge under the current relation:
    /// `h_low` and `h_high` belong to the lower- and higher-id superpixel.
    fn pairwise(&self, edge: usize, h_low: &Homography, h_high: &Homography) -> f64 {
        let occ = &self.state.occlusion;
        let label = occ.edge_label(edge);
        let cfg = self.model.cfg;
        cfg.lambda_c * self.model.edge_potential(edge, h_low, h_high, label, &|px| occ.occluded(px))
            + cfg.lambda_b * self.model.edge_prior(edge, label)
    }

    fn pairwise_for(&self, s: u32, n: u32, h_s: &Homography, h_n: &Homography) -> f64 {
        let edge = self.model.seg.edge_of(s, n).expect("adjacent");
        if s < n {
            self.pairwise(edge, h_s, h_n)
        } else {
            self.pairwise(edge, h_n, h_s)
        }
    }

    /// True objective restricted to `s` and its incident edges, with every
    /// other variable held at its current value. This is what commits are
    /// judged by.
    fn local_energy(&self, s: u32, h: &Homography) -> f64 {
        let mut v = self.unary(s, h);
        for &n in self.model.seg.neighbors(s) {
            v += self.pairwise_for(s, n, h, self.state.motion.get(n));
        }
        v
    }

    fn refresh_unary_cache(&mut self) {
        let this = &*self;
        let cache: Vec<Vec<f64>> = (0..this.model.seg.count() as u32)
            .into_par_iter()
            .map(|s| {
                this.state
                    .particles
                    .particles(s)
                    .iter()
                    .map(|p| this.unary(s, &p.homography))
                    .collect()
            })
            .collect();
        self.unary_cache = cache;
    }

    /// One message passing sweep: a forward pass over the superpixels in
    /// raster order of their centroids, then a backward pass. Each visited
    /// superpixel refreshes its candidate set from the proposal strategies,
    /// keeps the lowest-disbelief particles (the adopted motion is never
    /// evicted), commits a motion change only on strict local-energy
    /// improvement, and updates its incident messages.
    pub fn sweep(&mut self, outer_iter: usize, inner_iter: usize) {
        self.refresh_unary_cache();
        let order: Vec<u32> = self.sweep_order.clone();
        for (pass, nodes) in [
            (0u64, order.iter().copied().collect::<Vec<_>>()),
            (1u64, order.iter().rev().copied().collect()),
        ] {
            for s in nodes {
                let mut rng = stream(
                    self.model.cfg.rng_seed,
                    &[
                        SALT_PROPOSE,
                        s as u64,
                        outer_iter as u64,
                        inner_iter as u64,
                        pass,
                    ],
                );
                self.sweep_node(s, outer_iter, &mut rng);
            }
        }
    }

    fn sweep_node(&mut self, s: u32, outer_iter: usize, rng: &mut ChaCha8Rng) {
        let seg = self.model.seg;
        let k = self.model.cfg.particle_count;
        let neighbors: Vec<u32> = seg.neighbors(s).to_vec();

        // Candidates: the incumbent first, then the remaining current
        // particles, then the proposals, deduplicated exactly.
        let incumbent = *self.state.motion.get(s);
        let mut candidates: Vec<Homography> = vec![incumbent];
        let push_unique = |list: &mut Vec<Homography>, h: Homography| {
            if !list.iter().any(|c| c.matrix() == h.matrix()) {
                list.push(h);
            }
        };
        for p in self.state.particles.particles(s) {
            push_unique(&mut candidates, p.homography);
        }
        for h in self.propose(s, outer_iter, rng) {
            push_unique(&mut candidates, h);
        }

        // Pre-accumulated neighbor quantities: unary plus incoming messages
        // from everyone but `s`, per neighbor particle.
        let aux: Vec<Vec<f64>> = neighbors
            .iter()
            .map(|&n| {
                let pn = self.state.particles.particles(n);
                (0..pn.len())
                    .map(|x| {
                        let mut v = self.unary_cache[n as usize][x];
                        for &u in seg.neighbors(n) {
                            if u == s {
                                continue;
                            }
                            let e = seg.edge_of(u, n).expect("adjacent");
                            v += self.state.messages.get(e, u < n)[x];
                        }
                        v
                    })
                    .collect()
            })
            .collect();

        let this = &*self;
        let evals: Vec<CandidateEval> = candidates
            .par_iter()
            .map(|h| {
                let unary = this.unary(s, h);
                let mut msg_in = Vec::with_capacity(neighbors.len());
                for (ni, &n) in neighbors.iter().enumerate() {
                    let pn = this.state.particles.particles(n);
                    let mut best = f64::INFINITY;
                    for (x, p) in pn.iter().enumerate() {
                        let v = aux[ni][x] + this.pairwise_for(s, n, h, &p.homography);
                        if v < best {
                            best = v;
                        }
                    }
                    msg_in.push(best);
                }
                let disbelief = unary + msg_in.iter().sum::<f64>();
                CandidateEval {
                    homography: *h,
                    unary,
                    disbelief,
                    msg_in,
                }
            })
            .collect();

        // Keep the K lowest disbeliefs (stable), never evicting the
        // incumbent at index 0.
        let mut order: Vec<usize> = (0..evals.len()).collect();
        order.sort_by(|&a, &b| evals[a].disbelief.total_cmp(&evals[b].disbelief).then(a.cmp(&b)));
        let mut kept_idx: Vec<usize> = order.iter().copied().take(k).collect();
        if !kept_idx.contains(&0) {
            let last = kept_idx.len() - 1;
            kept_idx[last] = 0;
        }
        kept_idx.sort_unstable();

        // Commit rule: adopt the kept particle of least local energy, only
        // on strict improvement over the incumbent.
        let locals: Vec<f64> = kept_idx
            .iter()
            .map(|&ci| {
                let h = &evals[ci].homography;
                let mut v = evals[ci].unary;
                for &n in &neighbors {
                    v += self.pairwise_for(s, n, h, self.state.motion.get(n));
                }
                v
            })
            .collect();
        let incumbent_pos = kept_idx
            .iter()
            .position(|&ci| ci == 0)
            .expect("incumbent kept");
        let mut adopt_pos = incumbent_pos;
        for (pos, v) in locals.iter().enumerate() {
            if *v < locals[adopt_pos] {
                adopt_pos = pos;
            }
        }

        let kept: Vec<Particle> = kept_idx
            .iter()
            .map(|&ci| Particle {
                homography: evals[ci].homography,
                disbelief: evals[ci].disbelief,
            })
            .collect();
        let new_unaries: Vec<f64> = kept_idx.iter().map(|&ci| evals[ci].unary).collect();
        self.state.motion.set(s, kept[adopt_pos].homography);
        self.state.particles.replace(s, kept, adopt_pos);
        self.unary_cache[s as usize] = new_unaries;

        // Incoming messages for the new particle set, then outgoing
        // messages from it (min-sum, normalized to minimum zero).
        for (ni, &n) in neighbors.iter().enumerate() {
            let e = seg.edge_of(s, n).expect("adjacent");
            let values: Vec<f64> = kept_idx.iter().map(|&ci| evals[ci].msg_in[ni]).collect();
            self.state.messages.set(e, n < s, values);
        }
        for &n in &neighbors {
            let e = seg.edge_of(s, n).expect("adjacent");
            let pn_homs: Vec<Homography> = self
                .state
                .particles
                .particles(n)
                .iter()
                .map(|p| p.homography)
                .collect();
            let ps = self.state.particles.particles(s);
            let mut values = Vec::with_capacity(pn_homs.len());
            for hn in &pn_homs {
                let mut best = f64::INFINITY;
                for (xi, p) in ps.iter().enumerate() {
                    let mut v = self.unary_cache[s as usize][xi];
                    for &u in &neighbors {
                        if u == n {
                            continue;
                        }
                        let eu = seg.edge_of(u, s).expect("adjacent");
                        v += self.state.messages.get(eu, u < s)[xi];
                    }
                    v += self.pairwise_for(s, n, &p.homography, hn);
                    if v < best {
                        best = v;
                    }
                }
                values.push(best);
            }
            self.state.messages.set(e, s < n, values);
        }
    }

    /// One candidate per proposal strategy: gradient refinement of the
    /// incumbent, a plane compatible with the epipolar geometry through
    /// three points of the current motion, a perturbed-corner fit whose
    /// noise shrinks geometrically over the outer iterations, and a
    /// neighbor's adopted motion. Strategies that hit degenerate geometry
    /// are skipped; the identity is emitted if everything fails.
    pub fn propose(&self, s: u32, outer_iter: usize, rng: &mut ChaCha8Rng) -> Vec<Homography> {
        let seg = self.model.seg;
        let cfg = self.model.cfg;
        let current = self.state.motion.get(s);
        let members = seg.members(s);
        let mut out = Vec::with_capacity(4);

        // (i) Photometric refinement of the incumbent.
        out.push(lk_refine(
            current,
            self.model.frame_t,
            self.model.frame_t1,
            members,
            cfg.lk_iters,
        ));

        // (ii) Epipolar-compatible plane through three sampled pixels.
        if let Some(f) = self.model.fundamental {
            if members.len() >= 3 {
                let mut picks = [0usize; 3];
                for slot in picks.iter_mut() {
                    *slot = rng.random_range(0..members.len());
                }
                let pts: Vec<Point2<f64>> = picks
                    .iter()
                    .map(|&i| {
                        let (x, y) = seg.pixel_xy(members[i]);
                        Point2::new(x as f64, y as f64)
                    })
                    .collect();
                let matches: Option<Vec<Correspondence>> = pts
                    .iter()
                    .map(|&p| current.map(p).map(|q| Correspondence::new(p, q)))
                    .collect();
                if let Some(m) = matches {
                    if let Ok(arr) = <[Correspondence; 3]>::try_from(m) {
                        if let Ok(h) = homography_from_3pts_and_f(f, &arr, f64::INFINITY) {
                            out.push(h);
                        }
                    }
                }
            }
        }

        // (iii) Bounding-box corners mapped by the incumbent plus shrinking
        // Gaussian noise.
        let sigma = cfg.sigma0 * cfg.sigma_decay.powi(outer_iter as i32);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        for &px in members {
            let (x, y) = seg.pixel_xy(px);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if x1 > x0 && y1 > y0 {
            let corners = [
                Point2::new(x0 as f64, y0 as f64),
                Point2::new(x1 as f64, y0 as f64),
                Point2::new(x1 as f64, y1 as f64),
                Point2::new(x0 as f64, y1 as f64),
            ];
            let normal = Normal::new(0.0, sigma.max(1e-12)).expect("valid sigma");
            let targets: Option<Vec<Point2<f64>>> = corners
                .iter()
                .map(|&c| {
                    current.map(c).map(|q| {
                        Point2::new(q.x + normal.sample(rng), q.y + normal.sample(rng))
                    })
                })
                .collect();
            if let Some(t) = targets {
                if let Ok(arr) = <[Point2<f64>; 4]>::try_from(t) {
                    if let Ok(h) = homography_from_4pts(&corners, &arr) {
                        out.push(h);
                    }
                }
            }
        }

        // (iv) A neighbor's adopted motion.
        let neighbors = seg.neighbors(s);
        if !neighbors.is_empty() {
            let n = neighbors[rng.random_range(0..neighbors.len())];
            out.push(*self.state.motion.get(n));
        }

        if out.is_empty() {
            out.push(Homography::identity());
        }
        out
    }

    /// Exact per-edge update of the boundary relation and its occlusion
    /// marks: the four cases are scored by the true change of the objective
    /// (data and label shares of the two superpixels, the connectivity of
    /// every incident edge under the union-resolved mask, and the edge's
    /// prior), and the argmin is committed. Edges are visited sequentially
    /// in index order; ties break toward the earlier case in declaration
    /// order.
    pub fn update_occlusion(&mut self) {
        let seg = self.model.seg;
        let cfg = self.model.cfg;
        let motion = &self.state.motion;
        let npx = seg.width() * seg.height();

        let data_cost: Vec<f64> = (0..npx)
            .into_par_iter()
            .map(|px| self.model.pixel_data_cost(px, motion.get(seg.id_at(px))))
            .collect();
        let label_cost: Vec<f64> = if cfg.lambda_l > 0.0 {
            let labels_next = &self.state.labels_next;
            (0..npx)
                .into_par_iter()
                .map(|px| {
                    self.model
                        .pixel_label_cost(px, motion.get(seg.id_at(px)), labels_next)
                })
                .collect()
        } else {
            vec![0.0; npx]
        };
        let omegas: Vec<(Vec<u32>, Vec<u32>)> = (0..seg.edge_count())
            .into_par_iter()
            .map(|e| {
                let (i, j) = seg.adjacency()[e];
                (
                    occluded_set(seg, i, j, motion.get(i), motion.get(j)),
                    occluded_set(seg, j, i, motion.get(j), motion.get(i)),
                )
            })
            .collect();
        let l1_means: Vec<(f64, f64)> = (0..seg.edge_count())
            .into_par_iter()
            .map(|e| {
                let (i, j) = seg.adjacency()[e];
                (
                    self.model
                        .smoothness_mean(e, motion.get(i), motion.get(j), false),
                    self.model
                        .smoothness_mean(e, motion.get(i), motion.get(j), true),
                )
            })
            .collect();

        for e in 0..seg.edge_count() {
            self.update_occlusion_edge(e, &data_cost, &label_cost, &omegas, &l1_means);
        }
        let mask: Vec<bool> = self.mark_counts.iter().map(|&c| c > 0).collect();
        self.state.occlusion.set_mask(mask);
    }

    fn update_occlusion_edge(
        &mut self,
        e: usize,
        data_cost: &[f64],
        label_cost: &[f64],
        omegas: &[(Vec<u32>, Vec<u32>)],
        l1_means: &[(f64, f64)],
    ) {
        let seg = self.model.seg;
        let cfg = self.model.cfg;
        let (i, j) = seg.adjacency()[e];

        for &px in &self.state.edge_marks[e] {
            self.mark_counts[px as usize] -= 1;
        }

        let incident: Vec<usize> = {
            let mut v: Vec<usize> = self.sp_edges[i as usize]
                .iter()
                .chain(self.sp_edges[j as usize].iter())
                .copied()
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };

        let empty: &[u32] = &[];
        let mut best_case = BoundaryLabel::CoPlanar;
        let mut best_cost = f64::INFINITY;
        let mut best_marks: &[u32] = empty;
        for case in BoundaryLabel::ALL {
            let marks: &[u32] = match case {
                BoundaryLabel::CoPlanar | BoundaryLabel::Hinge => empty,
                BoundaryLabel::LeftOcc => &omegas[e].0,
                BoundaryLabel::RightOcc => &omegas[e].1,
            };
            let mark_set: HashSet<u32> = marks.iter().copied().collect();
            let occl = |px: usize| -> bool {
                if self.mark_counts[px] > 0 {
                    return true;
                }
                let id = seg.id_at(px);
                (id == i || id == j) && mark_set.contains(&(px as u32))
            };

            let mut cost = 0.0;
            for sp in [i, j] {
                let members = seg.members(sp);
                let mut data = 0.0;
                let mut label = 0.0;
                for &px in members {
                    let px = px as usize;
                    if occl(px) {
                        data += cfg.lambda_o;
                    } else {
                        data += data_cost[px];
                        label += label_cost[px];
                    }
                }
                cost += data / members.len() as f64;
                cost += cfg.lambda_l * label / members.len() as f64;
            }
            for &e2 in &incident {
                let label2 = if e2 == e {
                    case
                } else {
                    self.state.occlusion.edge_label(e2)
                };
                cost +=
                    cfg.lambda_c * self.edge_phi_cached(e2, label2, &occl, omegas, l1_means);
            }
            cost += cfg.lambda_b * self.model.edge_prior(e, case);

            if cost < best_cost {
                best_cost = cost;
                best_case = case;
                best_marks = marks;
            }
        }

        let committed = best_marks.to_vec();
        for &px in &committed {
            self.mark_counts[px as usize] += 1;
        }
        self.state.edge_marks[e] = committed;
        self.state.occlusion.set_edge_label(e, best_case);
    }

    /// Connectivity potential of an edge from the per-phase caches.
    fn edge_phi_cached(
        &self,
        e: usize,
        label: BoundaryLabel,
        occl: &impl Fn(usize) -> bool,
        omegas: &[(Vec<u32>, Vec<u32>)],
        l1_means: &[(f64, f64)],
    ) -> f64 {
        let seg = self.model.seg;
        let cfg = self.model.cfg;
        let (i, j) = seg.adjacency()[e];
        let occupied = |sp: u32| -> usize {
            seg.members(sp)
                .iter()
                .filter(|&&px| occl(px as usize))
                .count()
        };
        match label {
            BoundaryLabel::CoPlanar => {
                l1_means[e].0 + (occupied(i) + occupied(j)) as f64 * cfg.lambda_imp
            }
            BoundaryLabel::Hinge => {
                l1_means[e].1 + (occupied(i) + occupied(j)) as f64 * cfg.lambda_imp
            }
            BoundaryLabel::LeftOcc => self.model.phi_occ_with_omega(i, j, &omegas[e].0, occl),
            BoundaryLabel::RightOcc => self.model.phi_occ_with_omega(j, i, &omegas[e].1, occl),
        }
    }

    /// Exact minimizer of the label term given the motion and mask; see
    /// [`compute_label_update`].
    pub fn update_labels(&mut self) -> Result<(), SolverError> {
        if self.model.cfg.lambda_l == 0.0 {
            return Ok(());
        }
        self.state.labels_next =
            compute_label_update(&self.model, &self.state.motion, self.state.occlusion.mask())
                .map_err(SolverError::Model)?;
        Ok(())
    }

    /// Runs the configured outer iterations and returns the estimate. The
    /// progress callback observes the energy after each outer iteration.
    pub fn run(
        &mut self,
        mut progress: Option<&mut dyn FnMut(usize, &EnergyBreakdown)>,
    ) -> Result<JointEstimate, SolverError> {
        let outer = self.model.cfg.outer_iters;
        let inner = self.model.cfg.inner_iters;
        for m in 0..outer {
            // Stale messages refer to the previous occlusion and label
            // blocks; start each outer iteration from a clean slate.
            self.state.messages.reset();
            for n in 0..inner {
                self.sweep(m, n);
            }
            self.update_occlusion();
            self.update_labels()?;
            let breakdown = self.model.total(
                &self.state.motion,
                &self.state.occlusion,
                &self.state.labels_next,
            );
            self.state.energy_trace.push(breakdown);
            if let Some(cb) = progress.as_deref_mut() {
                cb(m, &breakdown);
            }
        }
        Ok(JointEstimate {
            flow: dense_flow(&self.state.motion, self.model.seg),
            labels: self.state.labels_next.clone(),
            occlusion: self.state.occlusion.clone(),
            trace: self.state.energy_trace.clone(),
        })
    }
}

/// Closed-form minimizer of the label term for fixed motion and mask. Each
/// target pixel gathers its visible sources (pixels whose rounded warp lands
/// on it), weighted by their superpixel's normalization, and takes the blend
/// of the evidence with the weighted source mean; sourceless pixels take the
/// evidence. The result is renormalized per pixel.
pub fn compute_label_update(
    model: &EnergyModel<'_>,
    motion: &MotionField,
    mask: &[bool],
) -> Result<LabelProbMap, crate::model::ModelError> {
    let seg = model.seg;
    let (w, h) = (seg.width(), seg.height());
    let classes = model.labels_prev.classes();
    let alpha = model.cfg.alpha;
    let mut acc = vec![0.0f64; w * h * classes];
    let mut wsum = vec![0.0f64; w * h];
    for s in 0..seg.count() as u32 {
        let hom = motion.get(s);
        let members = seg.members(s);
        let weight = 1.0 / members.len() as f64;
        for &px in members {
            let px = px as usize;
            if mask[px] {
                continue;
            }
            let (x, y) = seg.pixel_xy(px as u32);
            let Some(q) = hom.map(Point2::new(x as f64, y as f64)) else {
                continue;
            };
            if q.x.abs() > 1e12 || q.y.abs() > 1e12 {
                continue;
            }
            let (qx, qy) = (q.x.round() as i64, q.y.round() as i64);
            if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                continue;
            }
            let tgt = qy as usize * w + qx as usize;
            let prev = model.labels_prev.dist(px);
            for c in 0..classes {
                acc[tgt * classes + c] += weight * prev[c];
            }
            wsum[tgt] += weight;
        }
    }
    let mut probs = vec![0.0f64; w * h * classes];
    for px in 0..w * h {
        let evidence = model.labels_evidence.dist(px);
        if wsum[px] > 0.0 {
            for c in 0..classes {
                let mean_prev = acc[px * classes + c] / wsum[px];
                probs[px * classes + c] = alpha * evidence[c] + (1.0 - alpha) * mean_prev;
            }
        } else {
            probs[px * classes..(px + 1) * classes].copy_from_slice(evidence);
        }
    }
    LabelProbMap::from_raw_renormalized(w, h, classes, probs)
}

/// Least-squares homography fit of the initial flow over one superpixel,
/// subsampled for large superpixels. `None` on degenerate geometry.
fn fit_superpixel_homography(
    seg: &crate::model::SuperpixelSegmentation,
    s: u32,
    flow: &FlowField,
) -> Option<Homography> {
    let members = seg.members(s);
    let stride = members.len().div_ceil(256).max(1);
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for &px in members.iter().step_by(stride) {
        let px = px as usize;
        let (u, v, valid) = flow.at(px);
        if !valid {
            continue;
        }
        let (x, y) = (px % seg.width(), px / seg.width());
        src.push(Point2::new(x as f64, y as f64));
        dst.push(Point2::new(x as f64 + u, y as f64 + v));
    }
    if src.len() < 4 {
        return None;
    }
    homography_least_squares(&src, &dst).ok()
}
