use super::ModelError;

/// Per-pixel probability distributions over `classes` semantic classes,
/// stored pixel-major, class-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelProbMap {
    width: usize,
    height: usize,
    classes: usize,
    probs: Vec<f64>,
}

impl LabelProbMap {
    /// Validates that every entry lies in `[0, 1]` and every pixel's
    /// distribution sums to 1 within `1e-6`.
    pub fn new(
        width: usize,
        height: usize,
        classes: usize,
        probs: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 || classes == 0 {
            return Err(ModelError::InvalidValue(
                "label map dimensions and class count must be positive".into(),
            ));
        }
        if probs.len() != width * height * classes {
            return Err(ModelError::DimensionMismatch(format!(
                "expected {} probabilities, got {}",
                width * height * classes,
                probs.len()
            )));
        }
        for v in &probs {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(ModelError::InvalidValue(format!(
                    "probability {v} outside [0, 1]"
                )));
            }
        }
        for px in 0..width * height {
            let sum: f64 = probs[px * classes..(px + 1) * classes].iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(ModelError::InvalidValue(format!(
                    "pixel {px} distribution sums to {sum}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            classes,
            probs,
        })
    }

    /// Uniform distribution at every pixel.
    pub fn uniform(width: usize, height: usize, classes: usize) -> Result<Self, ModelError> {
        let p = 1.0 / classes as f64;
        let mut m = Self::new(width, height, classes, vec![p; width * height * classes])?;
        m.renormalize();
        Ok(m)
    }

    /// One-hot map from per-pixel class ids.
    pub fn from_class_ids(
        width: usize,
        height: usize,
        classes: usize,
        ids: &[u32],
    ) -> Result<Self, ModelError> {
        if ids.len() != width * height {
            return Err(ModelError::DimensionMismatch(format!(
                "expected {} class ids, got {}",
                width * height,
                ids.len()
            )));
        }
        let mut probs = vec![0.0; width * height * classes];
        for (px, &id) in ids.iter().enumerate() {
            if id as usize >= classes {
                return Err(ModelError::InvalidValue(format!(
                    "class id {id} out of range for {classes} classes"
                )));
            }
            probs[px * classes + id as usize] = 1.0;
        }
        Self::new(width, height, classes, probs)
    }

    /// Construction path for internally computed maps: renormalizes each
    /// pixel before validating.
    pub(crate) fn from_raw_renormalized(
        width: usize,
        height: usize,
        classes: usize,
        probs: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let mut m = Self {
            width,
            height,
            classes,
            probs,
        };
        m.renormalize();
        Self::new(m.width, m.height, m.classes, m.probs)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Distribution of the pixel with linear index `px`.
    #[inline]
    pub fn dist(&self, px: usize) -> &[f64] {
        &self.probs[px * self.classes..(px + 1) * self.classes]
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize, class: usize) -> f64 {
        self.probs[(y * self.width + x) * self.classes + class]
    }

    /// Index of the most probable class at `px`; ties break toward the
    /// smallest class id.
    pub fn argmax(&self, px: usize) -> u32 {
        let d = self.dist(px);
        let mut best = 0usize;
        for (i, v) in d.iter().enumerate().skip(1) {
            if *v > d[best] {
                best = i;
            }
        }
        best as u32
    }

    /// Projects each pixel distribution back onto the simplex by dividing by
    /// its sum. Sums that are exactly 1 are left untouched, so applying the
    /// projection twice equals applying it once.
    pub fn renormalize(&mut self) {
        let classes = self.classes;
        for px in 0..self.width * self.height {
            let row = &mut self.probs[px * classes..(px + 1) * classes];
            let sum: f64 = row.iter().sum();
            if sum > 0.0 && sum != 1.0 {
                for v in row {
                    *v /= sum;
                }
            }
        }
    }
}

/// The semantic class inventory, including which classes are physically
/// static (their pixels can only move with the camera).
#[derive(Debug, Clone)]
pub struct SemanticClassTable {
    names: Vec<String>,
    is_static: Vec<bool>,
}

impl SemanticClassTable {
    /// Class ids are assigned contiguously in input order. Requires at least
    /// one static and one non-static class.
    pub fn new(classes: Vec<(String, bool)>) -> Result<Self, ModelError> {
        if !classes.iter().any(|(_, s)| *s) || !classes.iter().any(|(_, s)| !*s) {
            return Err(ModelError::InvalidValue(
                "class table needs at least one static and one non-static class".into(),
            ));
        }
        let (names, is_static) = classes.into_iter().unzip();
        Ok(Self { names, is_static })
    }

    /// Auto-named classes with the given static set.
    pub fn with_static_set(
        class_count: usize,
        static_ids: impl IntoIterator<Item = u32>,
    ) -> Result<Self, ModelError> {
        let mut is_static = vec![false; class_count];
        for id in static_ids {
            if id as usize >= class_count {
                return Err(ModelError::InvalidValue(format!(
                    "static class id {id} out of range for {class_count} classes"
                )));
            }
            is_static[id as usize] = true;
        }
        Self::new(
            is_static
                .into_iter()
                .enumerate()
                .map(|(i, s)| (format!("class{i}"), s))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn is_static(&self, id: u32) -> bool {
        self.is_static[id as usize]
    }

    pub fn static_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.is_static
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| i as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validates_distribution_sums() {
        assert!(LabelProbMap::new(1, 1, 2, vec![0.6, 0.4]).is_ok());
        assert!(LabelProbMap::new(1, 1, 2, vec![0.6, 0.5]).is_err());
        assert!(LabelProbMap::new(1, 1, 2, vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn argmax_ties_break_low() {
        let m = LabelProbMap::new(1, 1, 3, vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(m.argmax(0), 0);
    }

    #[test]
    fn class_table_needs_both_kinds() {
        assert!(SemanticClassTable::with_static_set(3, [0]).is_ok());
        assert!(SemanticClassTable::with_static_set(2, [0, 1]).is_err());
        assert!(SemanticClassTable::with_static_set(2, []).is_err());
    }

    proptest! {
        #[test]
        fn renormalize_is_a_projection(values in proptest::collection::vec(1e-3..1.0f64, 6)) {
            let mut m = LabelProbMap {
                width: 2, height: 1, classes: 3, probs: values,
            };
            m.renormalize();
            let once = m.probs.clone();
            m.renormalize();
            prop_assert_eq!(once, m.probs);
        }
    }
}
