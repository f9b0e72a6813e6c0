use std::collections::{BTreeSet, HashSet};

use nalgebra::{Matrix3, Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Correspondence, FundamentalMatrix};
use crate::io::RgbImage;
use crate::model::{FlowField, GrayImage, Homography, LabelProbMap, ModelError};

/// Axis-aligned region of frame t moving by its own homography. Bounds are
/// inclusive pixel coordinates.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub homography: Homography,
    pub class_id: u32,
}

impl RegionSpec {
    /// Continuous membership test against the pixel-partition boundary
    /// halfway between pixel centers.
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 - 0.5
            && x < self.x1 as f64 + 0.5
            && y >= self.y0 as f64 - 0.5
            && y < self.y1 as f64 + 0.5
    }

    fn contains_pixel(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// How the scene's fundamental matrix is derived.
#[derive(Debug, Clone)]
pub enum FundamentalSpec {
    /// Camera translating in the image plane: the epipole is the direction
    /// `(tx, ty)` at infinity. Static content must translate parallel to it.
    Translation(f64, f64),
    /// Single static plane: any matrix of the form `[e]x H_bg` is exact for
    /// correspondences induced by the background homography.
    FromBackground,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Motion of everything not covered by a foreground region.
    pub background_homography: Homography,
    pub background_class: u32,
    /// Foreground regions ordered back to front; must not overlap in frame t.
    pub regions: Vec<RegionSpec>,
    pub fundamental: FundamentalSpec,
    pub class_count: usize,
    pub static_classes: BTreeSet<u32>,
    /// Standard deviation of optional additive intensity noise on both
    /// frames (0 disables).
    pub noise_sigma: f64,
    /// Probability that a pixel of the bottom-up evidence is flipped to a
    /// wrong class (0 disables).
    pub evidence_flip_prob: f64,
}

/// A rendered scene with exact ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub frame_t: GrayImage,
    pub frame_t1: GrayImage,
    pub color_t: RgbImage,
    pub color_t1: RgbImage,
    pub gt_flow: FlowField,
    pub gt_occlusion: Vec<bool>,
    pub gt_labels_t: Vec<u32>,
    pub gt_labels_t1: Vec<u32>,
    /// Homography per region; index 0 is the background.
    pub gt_homographies: Vec<Homography>,
    /// Per-pixel region id (0 = background) in frame t.
    pub region_map: Vec<u32>,
    pub fundamental: FundamentalMatrix,
    pub class_count: usize,
    pub static_classes: BTreeSet<u32>,
    pub labels_prev: LabelProbMap,
    pub labels_evidence: LabelProbMap,
}

/// Band-limited noise texture: uniform noise smoothed with a box filter so
/// census and gradient-based refinement have structure everywhere.
pub fn noise_texture(width: usize, height: usize, rng: &mut impl Rng) -> GrayImage {
    let raw: Vec<f64> = (0..width * height)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        let mut acc = 0.0;
        let mut n = 0.0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nx = (x as i64 + dx).clamp(0, width as i64 - 1) as usize;
                let ny = (y as i64 + dy).clamp(0, height as i64 - 1) as usize;
                acc += raw[ny * width + nx];
                n += 1.0;
            }
        }
        // Stretch back toward full contrast after smoothing.
        ((acc / n - 0.5) * 1.6 + 0.5).clamp(0.0, 1.0)
    })
}

fn region_tone(region: u32) -> [f64; 3] {
    const TONES: [[f64; 3]; 6] = [
        [0.15, 0.25, 0.85],
        [0.9, 0.2, 0.15],
        [0.15, 0.85, 0.25],
        [0.9, 0.8, 0.1],
        [0.7, 0.2, 0.8],
        [0.1, 0.8, 0.8],
    ];
    TONES[region as usize % TONES.len()]
}

/// Renders a scene. Foreground regions are composited over the background
/// with correct occlusion ordering; frame t+1 is produced by inverse-warping
/// frame t's texture bilinearly.
pub fn make_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene, ModelError> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 {
        return Err(ModelError::InvalidValue("scene must be non-empty".into()));
    }
    for r in &spec.regions {
        if r.x1 >= w || r.y1 >= h || r.x0 > r.x1 || r.y0 > r.y1 {
            return Err(ModelError::InvalidValue(format!(
                "region out of bounds: ({},{})..({},{})",
                r.x0, r.y0, r.x1, r.y1
            )));
        }
        if r.class_id as usize >= spec.class_count {
            return Err(ModelError::InvalidValue(format!(
                "region class {} out of range",
                r.class_id
            )));
        }
    }
    for (a, ra) in spec.regions.iter().enumerate() {
        for rb in spec.regions.iter().skip(a + 1) {
            let overlap_x = ra.x0 <= rb.x1 && rb.x0 <= ra.x1;
            let overlap_y = ra.y0 <= rb.y1 && rb.y0 <= ra.y1;
            if overlap_x && overlap_y {
                return Err(ModelError::InvalidValue(
                    "foreground regions overlap in frame t".into(),
                ));
            }
        }
    }

    let mut tex_rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = noise_texture(w, h, &mut tex_rng);

    // Region ids: 0 = background, 1.. = foreground in spec order.
    let mut region_map = vec![0u32; w * h];
    let mut gt_labels_t = vec![spec.background_class; w * h];
    for (i, r) in spec.regions.iter().enumerate() {
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                region_map[y * w + x] = (i + 1) as u32;
                gt_labels_t[y * w + x] = r.class_id;
            }
        }
    }
    let mut gt_homographies = vec![spec.background_homography];
    gt_homographies.extend(spec.regions.iter().map(|r| r.homography));

    // Front-most region covering a continuous frame-t+1 position; regions
    // are listed back to front, so scan from the last one.
    let covering_region = |x: f64, y: f64| -> u32 {
        for (i, r) in spec.regions.iter().enumerate().rev() {
            if let Ok(inv) = r.homography.inverse() {
                if let Some(p) = inv.map(Point2::new(x, y)) {
                    if r.contains(p.x, p.y) {
                        return (i + 1) as u32;
                    }
                }
            }
        }
        0
    };

    let bg_inv = spec.background_homography.inverse()?;
    let frame_t1_clean = GrayImage::from_fn(w, h, |x, y| {
        let rid = covering_region(x as f64, y as f64);
        let inv = if rid == 0 {
            bg_inv
        } else {
            spec.regions[rid as usize - 1]
                .homography
                .inverse()
                .unwrap_or(bg_inv)
        };
        match inv.map(Point2::new(x as f64, y as f64)) {
            Some(p) => texture.sample_clamped(p.x, p.y),
            None => 0.0,
        }
    });
    let gt_labels_t1: Vec<u32> = {
        let mut out = vec![spec.background_class; w * h];
        for y in 0..h {
            for x in 0..w {
                let rid = covering_region(x as f64, y as f64);
                if rid > 0 {
                    out[y * w + x] = spec.regions[rid as usize - 1].class_id;
                }
            }
        }
        out
    };

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let apply_noise = |img: &GrayImage, rng: &mut ChaCha8Rng| -> GrayImage {
        if spec.noise_sigma <= 0.0 {
            return img.clone();
        }
        let normal = Normal::new(0.0, spec.noise_sigma).expect("valid sigma");
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            img.get(x, y) + normal.sample(rng)
        })
    };
    let frame_t = apply_noise(&texture, &mut noise_rng);
    let frame_t1 = apply_noise(&frame_t1_clean, &mut noise_rng);

    // Color variants carry one tone per region modulated by the texture so
    // superpixel computation can hug region boundaries.
    let color_of = |region: u32, tex: f64| -> [f64; 3] {
        let tone = region_tone(region);
        [
            0.6 * tone[0] + 0.4 * tex,
            0.6 * tone[1] + 0.4 * tex,
            0.6 * tone[2] + 0.4 * tex,
        ]
    };
    let color_t = RgbImage::from_fn(w, h, |x, y| {
        color_of(region_map[y * w + x], frame_t.get(x, y))
    });
    let color_t1 = RgbImage::from_fn(w, h, |x, y| {
        let rid = covering_region(x as f64, y as f64);
        color_of(rid, frame_t1.get(x, y))
    });

    // Exact flow and the rasterized forward-warp collision set. Depth order
    // is the region index: larger index is closer to the camera.
    let mut gt_flow = FlowField::zeros(w, h);
    let mut targets: Vec<HashSet<(i64, i64)>> = vec![HashSet::new(); gt_homographies.len()];
    let mut target_of = vec![None::<(i64, i64)>; w * h];
    for y in 0..h {
        for x in 0..w {
            let px = y * w + x;
            let hom = &gt_homographies[region_map[px] as usize];
            match hom.map(Point2::new(x as f64, y as f64)) {
                Some(q) => {
                    gt_flow.set(px, q.x - x as f64, q.y - y as f64, true);
                    let t = (q.x.round() as i64, q.y.round() as i64);
                    targets[region_map[px] as usize].insert(t);
                    target_of[px] = Some(t);
                }
                None => gt_flow.set(px, 0.0, 0.0, false),
            }
        }
    }
    let gt_occlusion: Vec<bool> = (0..w * h)
        .map(|px| {
            let rid = region_map[px] as usize;
            match target_of[px] {
                Some(t) => (rid + 1..gt_homographies.len()).any(|front| targets[front].contains(&t)),
                None => false,
            }
        })
        .collect();

    let fundamental = match spec.fundamental {
        FundamentalSpec::Translation(tx, ty) => {
            FundamentalMatrix::from_cross(Vector3::new(tx, ty, 0.0))
        }
        FundamentalSpec::FromBackground => {
            let e = Vector3::new(0.3, -0.45, 0.84);
            FundamentalMatrix::new(cross_matrix(e) * spec.background_homography.matrix())
        }
    }
    .map_err(|_| ModelError::InvalidValue("scene fundamental matrix is degenerate".into()))?;

    let labels_prev =
        LabelProbMap::from_class_ids(w, h, spec.class_count, &gt_labels_t)?;
    let mut evidence_ids = gt_labels_t1.clone();
    if spec.evidence_flip_prob > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c909);
        for id in evidence_ids.iter_mut() {
            if rng.random_range(0.0..1.0) < spec.evidence_flip_prob {
                let offset = rng.random_range(1..spec.class_count as u32);
                *id = (*id + offset) % spec.class_count as u32;
            }
        }
    }
    let labels_evidence =
        LabelProbMap::from_class_ids(w, h, spec.class_count, &evidence_ids)?;

    Ok(SyntheticScene {
        width: w,
        height: h,
        frame_t,
        frame_t1,
        color_t,
        color_t1,
        gt_flow,
        gt_occlusion,
        gt_labels_t,
        gt_labels_t1,
        gt_homographies,
        region_map,
        fundamental,
        class_count: spec.class_count,
        static_classes: spec.static_classes.clone(),
        labels_prev,
        labels_evidence,
    })
}

fn cross_matrix(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl SyntheticScene {
    /// Exact correspondences sampled from pixels whose ground-truth class is
    /// static and whose flow satisfies the scene's epipolar geometry.
    pub fn sample_static_matches(&self, count: usize, seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let static_px: Vec<usize> = (0..self.width * self.height)
            .filter(|&px| {
                self.static_classes.contains(&self.gt_labels_t[px]) && self.gt_flow.valid()[px]
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        if static_px.is_empty() {
            return out;
        }
        for _ in 0..count {
            let px = static_px[rng.random_range(0..static_px.len())];
            let (x, y) = (px % self.width, px / self.width);
            let (u, v, _) = self.gt_flow.at(px);
            out.push(Correspondence::new(
                Point2::new(x as f64, y as f64),
                Point2::new(x as f64 + u, y as f64 + v),
            ));
        }
        out
    }

    /// Ground-truth flow restricted to one region id.
    pub fn region_pixels(&self, region: u32) -> Vec<u32> {
        (0..self.width * self.height)
            .filter(|&px| self.region_map[px] == region)
            .map(|px| px as u32)
            .collect()
    }
}

/// The three scene families used by the verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneTemplate {
    /// One plane under a mild projective motion; everything static.
    SinglePlane,
    /// Camera translation over two static planes at different depths.
    TwoPlaneStatic,
    /// Static translating background plus an independently moving foreground
    /// square.
    TwoPlaneDynamic,
}

impl SceneTemplate {
    pub const ALL: [SceneTemplate; 3] = [
        SceneTemplate::SinglePlane,
        SceneTemplate::TwoPlaneStatic,
        SceneTemplate::TwoPlaneDynamic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneTemplate::SinglePlane => "single-plane",
            SceneTemplate::TwoPlaneStatic => "two-plane-static",
            SceneTemplate::TwoPlaneDynamic => "two-plane-dynamic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Instantiates the template with motions randomized from the seed.
    pub fn spec(self, width: usize, height: usize, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x5851_f42d_4c95_7f2d));
        match self {
            SceneTemplate::SinglePlane => {
                let tx = rng.random_range(-4.0..4.0);
                let ty = rng.random_range(-3.0..3.0);
                let px = rng.random_range(-2e-4..2e-4);
                let m = Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, px, 0.0, 1.0);
                SceneSpec {
                    width,
                    height,
                    background_homography: Homography::new(m).expect("near identity"),
                    background_class: 0,
                    regions: vec![],
                    fundamental: FundamentalSpec::FromBackground,
                    class_count: 2,
                    static_classes: BTreeSet::from([0]),
                    noise_sigma: 0.0,
                    evidence_flip_prob: 0.0,
                }
            }
            SceneTemplate::TwoPlaneStatic => {
                // Both planes translate parallel to the camera translation;
                // the nearer (front) plane moves farther.
                let dir = rng.random_range(-0.3..0.3f64);
                let mag = rng.random_range(2.0..4.5f64);
                let (tx, ty) = (mag * dir.cos(), mag * dir.sin());
                let k = rng.random_range(1.3..1.7);
                let (fx0, fy0) = (
                    rng.random_range(width / 5..width / 3),
                    rng.random_range(height / 5..height / 3),
                );
                let side = (width.min(height) * 2 / 5).max(8);
                SceneSpec {
                    width,
                    height,
                    background_homography: Homography::translation(tx, ty).expect("translation"),
                    background_class: 0,
                    regions: vec![RegionSpec {
                        x0: fx0,
                        y0: fy0,
                        x1: (fx0 + side - 1).min(width - 1),
                        y1: (fy0 + side - 1).min(height - 1),
                        homography: Homography::translation(k * tx, k * ty)
                            .expect("translation"),
                        class_id: 1,
                    }],
                    fundamental: FundamentalSpec::Translation(tx, ty),
                    class_count: 3,
                    static_classes: BTreeSet::from([0, 1]),
                    noise_sigma: 0.0,
                    evidence_flip_prob: 0.0,
                }
            }
            SceneTemplate::TwoPlaneDynamic => {
                let tx: f64 =
                    rng.random_range(2.5..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let ty = rng.random_range(-0.8..0.8);
                // Foreground slides against the background so a clear
                // occlusion band forms, with bounded relative displacement.
                let fx = -tx.signum() * rng.random_range(1.5..2.5);
                let fy = rng.random_range(-1.0..1.0);
                let side = (width.min(height) * 2 / 5).max(8);
                let (fx0, fy0) = (
                    rng.random_range(width / 4..width / 2),
                    rng.random_range(height / 5..height / 2),
                );
                SceneSpec {
                    width,
                    height,
                    background_homography: Homography::translation(tx, ty).expect("translation"),
                    background_class: 0,
                    regions: vec![RegionSpec {
                        x0: fx0,
                        y0: fy0,
                        x1: (fx0 + side - 1).min(width - 1),
                        y1: (fy0 + side - 1).min(height - 1),
                        homography: Homography::translation(fx, fy).expect("translation"),
                        class_id: 1,
                    }],
                    fundamental: FundamentalSpec::Translation(tx, ty),
                    class_count: 3,
                    static_classes: BTreeSet::from([0]),
                    noise_sigma: 0.0,
                    evidence_flip_prob: 0.0,
                }
            }
        }
    }
}
