use super::{ModelError, SuperpixelSegmentation};

/// Relation between two adjacent superpixels. For the adjacency pair
/// `(i, j)` with `i < j`, `LeftOcc` means `i` occludes pixels of `j` and
/// `RightOcc` means `j` occludes pixels of `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLabel {
    CoPlanar,
    Hinge,
    LeftOcc,
    RightOcc,
}

impl BoundaryLabel {
    /// Fixed enumeration order used for deterministic tie-breaking.
    pub const ALL: [BoundaryLabel; 4] = [
        BoundaryLabel::CoPlanar,
        BoundaryLabel::Hinge,
        BoundaryLabel::LeftOcc,
        BoundaryLabel::RightOcc,
    ];

    pub fn is_occlusion(self) -> bool {
        matches!(self, BoundaryLabel::LeftOcc | BoundaryLabel::RightOcc)
    }
}

/// Per-pixel occlusion bits plus one boundary label per adjacency edge.
/// Edge labels are stored in the order of [`SuperpixelSegmentation::adjacency`].
#[derive(Debug, Clone)]
pub struct OcclusionState {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    edge_labels: Vec<BoundaryLabel>,
}

impl OcclusionState {
    /// All pixels visible; every edge co-planar.
    pub fn unoccluded(seg: &SuperpixelSegmentation) -> Self {
        Self {
            width: seg.width(),
            height: seg.height(),
            mask: vec![false; seg.width() * seg.height()],
            edge_labels: vec![BoundaryLabel::CoPlanar; seg.edge_count()],
        }
    }

    pub fn new(
        seg: &SuperpixelSegmentation,
        mask: Vec<bool>,
        edge_labels: Vec<BoundaryLabel>,
    ) -> Result<Self, ModelError> {
        if mask.len() != seg.width() * seg.height() {
            return Err(ModelError::DimensionMismatch(format!(
                "mask has {} bits for a {}x{} grid",
                mask.len(),
                seg.width(),
                seg.height()
            )));
        }
        if edge_labels.len() != seg.edge_count() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} edge labels for {} adjacency edges",
                edge_labels.len(),
                seg.edge_count()
            )));
        }
        Ok(Self {
            width: seg.width(),
            height: seg.height(),
            mask,
            edge_labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn occluded(&self, px: usize) -> bool {
        self.mask[px]
    }

    pub fn edge_labels(&self) -> &[BoundaryLabel] {
        &self.edge_labels
    }

    pub fn edge_label(&self, edge: usize) -> BoundaryLabel {
        self.edge_labels[edge]
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) {
        assert_eq!(mask.len(), self.mask.len());
        self.mask = mask;
    }

    pub fn set_edge_label(&mut self, edge: usize, label: BoundaryLabel) {
        self.edge_labels[edge] = label;
    }
}
