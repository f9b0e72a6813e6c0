use crate::model::{FlowField, GrayImage, LabelProbMap, ModelError};

/// RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::InvalidValue(
                "image dimensions must be positive".into(),
            ));
        }
        if data.len() != width * height {
            return Err(ModelError::DimensionMismatch(format!(
                "expected {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let c = f(x, y);
                data.push([
                    c[0].clamp(0.0, 1.0),
                    c[1].clamp(0.0, 1.0),
                    c[2].clamp(0.0, 1.0),
                ]);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    /// Rec. 709 luma conversion into the grayscale domain used by the data
    /// term.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            let [r, g, b] = self.get(x, y);
            0.2126 * r + 0.7152 * g + 0.0722 * b
        })
    }
}

/// Renders a flow field on the standard direction/magnitude color wheel:
/// hue encodes the flow direction, saturation the magnitude relative to
/// `max_mag` (99th percentile of the valid magnitudes when absent). Zero
/// flow is white; invalid pixels are black.
pub fn flow_to_color(flow: &FlowField, max_mag: Option<f64>) -> RgbImage {
    let max_mag = max_mag.unwrap_or_else(|| {
        let mut mags: Vec<f64> = (0..flow.u().len())
            .filter(|&px| flow.valid()[px])
            .map(|px| flow.u()[px].hypot(flow.v()[px]))
            .collect();
        if mags.is_empty() {
            return 1.0;
        }
        mags.sort_by(f64::total_cmp);
        let idx = ((mags.len() - 1) as f64 * 0.99).round() as usize;
        mags[idx].max(1e-12)
    });
    RgbImage::from_fn(flow.width(), flow.height(), |x, y| {
        let px = y * flow.width() + x;
        let (u, v, valid) = flow.at(px);
        if !valid {
            return [0.0, 0.0, 0.0];
        }
        let mag = u.hypot(v);
        let sat = (mag / max_mag).min(1.0);
        let hue = v.atan2(u); // radians in (-pi, pi], 0 pointing +x
        hsv_to_rgb(hue, sat, 1.0)
    })
}

/// `hue` in radians, `sat`/`val` in `[0, 1]`.
fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [f64; 3] {
    let h = (hue.rem_euclid(std::f64::consts::TAU)) / std::f64::consts::TAU * 6.0;
    let c = val * sat;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = val - c;
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

/// Fixed palette for class visualizations: hues spaced around the wheel.
pub fn class_color(class: u32, class_count: usize) -> [f64; 3] {
    let hue = class as f64 / class_count.max(1) as f64 * std::f64::consts::TAU;
    hsv_to_rgb(hue, 0.85, 0.95)
}

/// Argmax label visualization.
pub fn labels_to_color(labels: &LabelProbMap) -> RgbImage {
    RgbImage::from_fn(labels.width(), labels.height(), |x, y| {
        let px = y * labels.width() + x;
        class_color(labels.argmax(px), labels.classes())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_white_for_any_scale() {
        let flow = FlowField::zeros(4, 4);
        for max_mag in [None, Some(1.0), Some(50.0)] {
            let img = flow_to_color(&flow, max_mag);
            for y in 0..4 {
                for x in 0..4 {
                    let [r, g, b] = img.get(x, y);
                    assert!((r - 1.0).abs() < 1e-12, "r {r}");
                    assert!((g - 1.0).abs() < 1e-12);
                    assert!((b - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn max_magnitude_flow_is_saturated_at_angle_zero() {
        let mut flow = FlowField::zeros(2, 1);
        flow.set(0, 5.0, 0.0, true);
        let img = flow_to_color(&flow, Some(5.0));
        // Hue 0 at full saturation is pure red.
        let [r, g, b] = img.get(0, 0);
        assert!((r - 1.0).abs() < 1e-12 && g.abs() < 1e-12 && b.abs() < 1e-12);
    }

    #[test]
    fn hue_tracks_direction() {
        let n = 16usize;
        let mut flow = FlowField::zeros(n, 1);
        for i in 0..n {
            let ang = i as f64 / n as f64 * std::f64::consts::TAU;
            flow.set(i, ang.cos() * 3.0, ang.sin() * 3.0, true);
        }
        let img = flow_to_color(&flow, Some(3.0));
        for i in 0..n {
            let ang = i as f64 / n as f64 * std::f64::consts::TAU;
            let expected = hsv_to_rgb(ang, 1.0, 1.0);
            let got = img.get(i, 0);
            for c in 0..3 {
                assert!((got[c] - expected[c]).abs() < 1e-9, "pixel {i} channel {c}");
            }
        }
    }

    #[test]
    fn invalid_pixels_are_black() {
        let mut flow = FlowField::zeros(2, 1);
        flow.set(1, 0.0, 0.0, false);
        let img = flow_to_color(&flow, None);
        assert_eq!(img.get(1, 0), [0.0, 0.0, 0.0]);
    }
}
