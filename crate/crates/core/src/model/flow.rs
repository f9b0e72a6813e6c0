use nalgebra::Point2;

use super::{Homography, ModelError, SuperpixelSegmentation};

/// A dense displacement field. Pixels with `valid == false` carry zero
/// displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn new(
        width: usize,
        height: usize,
        u: Vec<f64>,
        v: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, ModelError> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "flow buffers must all have {n} entries"
            )));
        }
        let mut f = Self {
            width,
            height,
            u,
            v,
            valid,
        };
        f.clear_invalid();
        Ok(f)
    }

    fn clear_invalid(&mut self) {
        for px in 0..self.u.len() {
            if !self.valid[px] {
                self.u[px] = 0.0;
                self.v[px] = 0.0;
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn at(&self, px: usize) -> (f64, f64, bool) {
        (self.u[px], self.v[px], self.valid[px])
    }

    pub fn set(&mut self, px: usize, u: f64, v: f64, valid: bool) {
        if valid {
            self.u[px] = u;
            self.v[px] = v;
        } else {
            self.u[px] = 0.0;
            self.v[px] = 0.0;
        }
        self.valid[px] = valid;
    }
}

/// One homography per superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    homographies: Vec<Homography>,
}

impl MotionField {
    pub fn new(
        homographies: Vec<Homography>,
        seg: &SuperpixelSegmentation,
    ) -> Result<Self, ModelError> {
        if homographies.len() != seg.count() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} homographies for {} superpixels",
                homographies.len(),
                seg.count()
            )));
        }
        Ok(Self { homographies })
    }

    pub fn identity(seg: &SuperpixelSegmentation) -> Self {
        Self {
            homographies: vec![Homography::identity(); seg.count()],
        }
    }

    pub fn len(&self) -> usize {
        self.homographies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.homographies.is_empty()
    }

    #[inline]
    pub fn get(&self, s: u32) -> &Homography {
        &self.homographies[s as usize]
    }

    pub fn set(&mut self, s: u32, h: Homography) {
        self.homographies[s as usize] = h;
    }

    pub fn homographies(&self) -> &[Homography] {
        &self.homographies
    }
}

/// Evaluates the dense flow induced by per-superpixel homographies: each
/// pixel moves to the image of its superpixel's homography. Degenerate
/// projections mark the pixel invalid.
pub fn dense_flow(mf: &MotionField, seg: &SuperpixelSegmentation) -> FlowField {
    assert_eq!(
        mf.len(),
        seg.count(),
        "motion field does not match segmentation"
    );
    let (w, h) = (seg.width(), seg.height());
    let mut flow = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let px = y * w + x;
            let hom = mf.get(seg.id_at(px));
            match hom.map(Point2::new(x as f64, y as f64)) {
                Some(q) => flow.set(px, q.x - x as f64, q.y - y as f64, true),
                None => flow.set(px, 0.0, 0.0, false),
            }
        }
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    #[test]
    fn identity_motion_gives_zero_flow() {
        let seg = SuperpixelSegmentation::single(4, 3).unwrap();
        let mf = MotionField::identity(&seg);
        let flow = dense_flow(&mf, &seg);
        assert!(flow.u().iter().all(|&u| u == 0.0));
        assert!(flow.v().iter().all(|&v| v == 0.0));
        assert!(flow.valid().iter().all(|&b| b));
    }

    #[test]
    fn translation_flow_is_constant() {
        let seg = SuperpixelSegmentation::single(5, 4).unwrap();
        let mf = MotionField::new(vec![Homography::translation(2.0, 3.0).unwrap()], &seg).unwrap();
        let flow = dense_flow(&mf, &seg);
        assert!(flow.u().iter().all(|&u| (u - 2.0).abs() < 1e-9));
        assert!(flow.v().iter().all(|&v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn projective_flow_matches_direct_product() {
        // Oracle: direct 3-vector multiply and homogeneous division.
        let m = Matrix3::new(1.1, 0.02, -0.5, -0.03, 0.95, 0.8, 1e-3, -2e-4, 1.0);
        let seg = SuperpixelSegmentation::single(16, 8).unwrap();
        let hom = Homography::new(m).unwrap();
        let mf = MotionField::new(vec![hom], &seg).unwrap();
        let flow = dense_flow(&mf, &seg);

        let (x, y) = (10.0f64, 5.0f64);
        let n = hom.matrix();
        let w = n[(2, 0)] * x + n[(2, 1)] * y + n[(2, 2)];
        let qx = (n[(0, 0)] * x + n[(0, 1)] * y + n[(0, 2)]) / w;
        let qy = (n[(1, 0)] * x + n[(1, 1)] * y + n[(1, 2)]) / w;
        let px = 5 * 16 + 10;
        assert!((flow.u()[px] - (qx - x)).abs() < 1e-12);
        assert!((flow.v()[px] - (qy - y)).abs() < 1e-12);
    }

    #[test]
    fn flow_is_superpixel_local() {
        let ids = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let seg = SuperpixelSegmentation::from_id_map(4, 2, ids).unwrap();
        let mf0 = MotionField::identity(&seg);
        let mut mf1 = mf0.clone();
        mf1.set(1, Homography::translation(1.0, 0.0).unwrap());
        let f0 = dense_flow(&mf0, &seg);
        let f1 = dense_flow(&mf1, &seg);
        for px in 0..8 {
            if seg.id_at(px) == 0 {
                assert_eq!(f0.at(px), f1.at(px));
            } else {
                assert_ne!(f0.at(px), f1.at(px));
            }
        }
    }

    #[test]
    fn invalid_pixels_are_zeroed() {
        let f = FlowField::new(2, 1, vec![5.0, 6.0], vec![1.0, 2.0], vec![true, false]).unwrap();
        assert_eq!(f.at(1), (0.0, 0.0, false));
    }
}
