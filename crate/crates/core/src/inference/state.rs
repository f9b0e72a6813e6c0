use crate::energy::EnergyBreakdown;
use crate::model::{
    Homography, LabelProbMap, MotionField, OcclusionState, SuperpixelSegmentation,
};

/// A candidate homography with its current disbelief (lower is better).
#[derive(Debug, Clone, Copy)]
pub struct Particle {
    pub homography: Homography,
    pub disbelief: f64,
}

/// Fixed-size particle populations, one per superpixel, with the index of
/// the particle currently adopted as the superpixel's motion.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    sets: Vec<Vec<Particle>>,
    adopted: Vec<usize>,
}

impl ParticleSet {
    pub fn new(sets: Vec<Vec<Particle>>, adopted: Vec<usize>) -> Self {
        debug_assert_eq!(sets.len(), adopted.len());
        for (s, &b) in sets.iter().zip(adopted.iter()) {
            debug_assert!(b < s.len());
            debug_assert!(s.iter().all(|p| p.disbelief.is_finite()));
        }
        Self { sets, adopted }
    }

    pub fn count(&self) -> usize {
        self.sets.len()
    }

    pub fn particles(&self, s: u32) -> &[Particle] {
        &self.sets[s as usize]
    }

    /// Index of the adopted (best) particle of superpixel `s`.
    pub fn adopted_index(&self, s: u32) -> usize {
        self.adopted[s as usize]
    }

    pub fn adopted_homography(&self, s: u32) -> &Homography {
        &self.sets[s as usize][self.adopted[s as usize]].homography
    }

    pub(crate) fn replace(&mut self, s: u32, particles: Vec<Particle>, adopted: usize) {
        debug_assert!(adopted < particles.len());
        self.sets[s as usize] = particles;
        self.adopted[s as usize] = adopted;
    }
}

/// Min-sum messages over the particle populations: one scalar per particle
/// of the target superpixel for each directed adjacency edge. Every stored
/// vector is normalized so its minimum is zero.
#[derive(Debug, Clone)]
pub struct MessageStore {
    // Indexed 2 * edge + dir, dir 0 carrying i -> j for the edge (i, j).
    msgs: Vec<Vec<f64>>,
}

impl MessageStore {
    pub fn zeros(edge_count: usize, particles: usize) -> Self {
        Self {
            msgs: vec![vec![0.0; particles]; 2 * edge_count],
        }
    }

    pub fn reset(&mut self) {
        for m in &mut self.msgs {
            for v in m.iter_mut() {
                *v = 0.0;
            }
        }
    }

    #[inline]
    fn index(edge: usize, from_low: bool) -> usize {
        2 * edge + usize::from(!from_low)
    }

    /// Message along `edge` sent from the lower-id side when `from_low`.
    pub fn get(&self, edge: usize, from_low: bool) -> &[f64] {
        &self.msgs[Self::index(edge, from_low)]
    }

    pub(crate) fn set(&mut self, edge: usize, from_low: bool, mut values: Vec<f64>) {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min.is_finite() && min != 0.0 {
            for v in &mut values {
                *v -= min;
            }
        }
        self.msgs[Self::index(edge, from_low)] = values;
    }
}

/// Complete mutable state of a solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub motion: MotionField,
    pub occlusion: OcclusionState,
    pub labels_next: LabelProbMap,
    pub particles: ParticleSet,
    pub messages: MessageStore,
    pub energy_trace: Vec<EnergyBreakdown>,
    /// Pixels marked occluded by each edge's committed relation; the pixel
    /// mask is the union of these.
    pub(crate) edge_marks: Vec<Vec<u32>>,
}

impl SolverState {
    /// Union rule for the pixel mask: a pixel is occluded exactly when at
    /// least one incident edge's committed relation marks it.
    pub fn resolve_mask(&self, seg: &SuperpixelSegmentation) -> Vec<bool> {
        let mut mask = vec![false; seg.width() * seg.height()];
        for marks in &self.edge_marks {
            for &px in marks {
                mask[px as usize] = true;
            }
        }
        mask
    }
}
