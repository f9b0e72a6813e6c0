use std::collections::{BTreeMap, HashMap};

use super::ModelError;

/// A partition of the pixel grid into superpixels, together with the derived
/// adjacency structure.
///
/// Superpixel ids are contiguous `0..count`. Two superpixels are adjacent
/// when some pixel of one 4-neighbors a pixel of the other; the boundary set
/// of an adjacent pair holds the pixels (from both sides) that have a
/// 4-neighbor in the other superpixel.
#[derive(Debug, Clone)]
pub struct SuperpixelSegmentation {
    width: usize,
    height: usize,
    id_map: Vec<u32>,
    count: usize,
    members: Vec<Vec<u32>>,
    adjacency: Vec<(u32, u32)>,
    edge_index: HashMap<(u32, u32), usize>,
    boundary_sets: Vec<Vec<u32>>,
    neighbors: Vec<Vec<u32>>,
    centroids: Vec<(f64, f64)>,
}

impl SuperpixelSegmentation {
    /// Builds the full structure from a per-pixel id map, validating the
    /// contiguity of ids.
    pub fn from_id_map(width: usize, height: usize, id_map: Vec<u32>) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::InvalidValue(
                "segmentation dimensions must be positive".into(),
            ));
        }
        if id_map.len() != width * height {
            return Err(ModelError::DimensionMismatch(format!(
                "id map has {} entries for a {}x{} grid",
                id_map.len(),
                width,
                height
            )));
        }
        let max_id = *id_map.iter().max().expect("non-empty id map") as usize;
        let count = max_id + 1;
        if count > id_map.len() {
            return Err(ModelError::NonContiguousIds(format!(
                "{count} ids for {} pixels",
                id_map.len()
            )));
        }

        let mut members: Vec<Vec<u32>> = vec![Vec::new(); count];
        for (px, &id) in id_map.iter().enumerate() {
            members[id as usize].push(px as u32);
        }
        if let Some(empty) = members.iter().position(|m| m.is_empty()) {
            return Err(ModelError::NonContiguousIds(format!(
                "id {empty} has no pixels"
            )));
        }

        // Scan right and down neighbors once; this finds every adjacent pair
        // and every boundary pixel.
        let mut boundary: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
        let mut push = |a_id: u32, b_id: u32, a_px: u32, b_px: u32| {
            let key = if a_id < b_id { (a_id, b_id) } else { (b_id, a_id) };
            let set = boundary.entry(key).or_default();
            set.push(a_px);
            set.push(b_px);
        };
        for y in 0..height {
            for x in 0..width {
                let px = y * width + x;
                let id = id_map[px];
                if x + 1 < width {
                    let q = px + 1;
                    if id_map[q] != id {
                        push(id, id_map[q], px as u32, q as u32);
                    }
                }
                if y + 1 < height {
                    let q = px + width;
                    if id_map[q] != id {
                        push(id, id_map[q], px as u32, q as u32);
                    }
                }
            }
        }

        let mut adjacency = Vec::with_capacity(boundary.len());
        let mut boundary_sets = Vec::with_capacity(boundary.len());
        let mut edge_index = HashMap::with_capacity(boundary.len());
        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); count];
        for (idx, (pair, mut set)) in boundary.into_iter().enumerate() {
            set.sort_unstable();
            set.dedup();
            adjacency.push(pair);
            boundary_sets.push(set);
            edge_index.insert(pair, idx);
            neighbors[pair.0 as usize].push(pair.1);
            neighbors[pair.1 as usize].push(pair.0);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }

        let centroids = members
            .iter()
            .map(|m| {
                let (mut sx, mut sy) = (0.0, 0.0);
                for &px in m {
                    sx += (px as usize % width) as f64;
                    sy += (px as usize / width) as f64;
                }
                (sx / m.len() as f64, sy / m.len() as f64)
            })
            .collect();

        Ok(Self {
            width,
            height,
            id_map,
            count,
            members,
            adjacency,
            edge_index,
            boundary_sets,
            neighbors,
            centroids,
        })
    }

    /// Single superpixel covering the whole grid.
    pub fn single(width: usize, height: usize) -> Result<Self, ModelError> {
        Self::from_id_map(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn id_map(&self) -> &[u32] {
        &self.id_map
    }

    #[inline]
    pub fn id_at(&self, px: usize) -> u32 {
        self.id_map[px]
    }

    /// Sorted linear pixel indices of superpixel `s`.
    pub fn members(&self, s: u32) -> &[u32] {
        &self.members[s as usize]
    }

    /// Unordered adjacent pairs `(i, j)` with `i < j`, sorted.
    pub fn adjacency(&self) -> &[(u32, u32)] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Index of the edge joining `a` and `b`, if adjacent.
    pub fn edge_of(&self, a: u32, b: u32) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edge_index.get(&key).copied()
    }

    /// Sorted pixels on the shared boundary of adjacency edge `edge`.
    pub fn boundary_set(&self, edge: usize) -> &[u32] {
        &self.boundary_sets[edge]
    }

    /// Sorted neighbor ids of superpixel `s`.
    pub fn neighbors(&self, s: u32) -> &[u32] {
        &self.neighbors[s as usize]
    }

    pub fn centroid(&self, s: u32) -> (f64, f64) {
        self.centroids[s as usize]
    }

    #[inline]
    pub fn pixel_xy(&self, px: u32) -> (usize, usize) {
        (px as usize % self.width, px as usize / self.width)
    }
}
