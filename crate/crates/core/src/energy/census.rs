use crate::model::{EnergyConfig, GrayImage};

/// Census-style descriptor of a local window: every neighbor of the center
/// is encoded as less / equal / greater than the center with threshold
/// `eps`, two bits per neighbor, packed into 64-bit words.
///
/// For radius `r` the signature covers the `(2r+1)^2 - 1` non-center offsets
/// of the window in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernarySignature {
    words: Vec<u64>,
    neighbors: usize,
}

const LESS: u64 = 0b00;
const EQUAL: u64 = 0b01;
const GREATER: u64 = 0b10;

impl TernarySignature {
    pub fn neighbor_count(&self) -> usize {
        self.neighbors
    }

    /// State of neighbor `i`: 0 = less, 1 = equal, 2 = greater.
    pub fn state(&self, i: usize) -> u8 {
        debug_assert!(i < self.neighbors);
        ((self.words[i / 32] >> ((i % 32) * 2)) & 0b11) as u8
    }
}

/// Computes the signature at a (possibly subpixel) position with bilinear
/// sampling; out-of-bounds samples clamp to the image edge.
pub fn ternary_signature(
    img: &GrayImage,
    p: (f64, f64),
    radius: usize,
    eps: f64,
) -> TernarySignature {
    let side = 2 * radius + 1;
    let neighbors = side * side - 1;
    let mut words = vec![0u64; neighbors.div_ceil(32)];
    let center = img.sample_clamped(p.0, p.1);
    let mut i = 0usize;
    for dy in -(radius as i64)..=radius as i64 {
        for dx in -(radius as i64)..=radius as i64 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let v = img.sample_clamped(p.0 + dx as f64, p.1 + dy as f64);
            let d = v - center;
            let state = if d < -eps {
                LESS
            } else if d > eps {
                GREATER
            } else {
                EQUAL
            };
            words[i / 32] |= state << ((i % 32) * 2);
            i += 1;
        }
    }
    TernarySignature { words, neighbors }
}

/// Number of neighbors whose ternary state differs between two signatures of
/// equal layout.
pub fn signature_distance(a: &TernarySignature, b: &TernarySignature) -> u32 {
    debug_assert_eq!(a.neighbors, b.neighbors);
    const ODD_BITS: u64 = 0x5555_5555_5555_5555;
    a.words
        .iter()
        .zip(b.words.iter())
        .map(|(x, y)| {
            let diff = x ^ y;
            ((diff | (diff >> 1)) & ODD_BITS).count_ones()
        })
        .sum()
}

/// Truncated census matching cost between pixel `p` of `img_t` and the
/// (possibly subpixel) position `q` of `img_t1`: the number of differing
/// ternary states, truncated at `tau_d`.
pub fn rho_d(
    img_t: &GrayImage,
    img_t1: &GrayImage,
    p: (usize, usize),
    q: (f64, f64),
    cfg: &EnergyConfig,
) -> f64 {
    let sig_p = ternary_signature(
        img_t,
        (p.0 as f64, p.1 as f64),
        cfg.census_radius,
        cfg.census_eps,
    );
    let sig_q = ternary_signature(img_t1, q, cfg.census_radius, cfg.census_eps);
    (signature_distance(&sig_p, &sig_q) as f64).min(cfg.tau_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GrayImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_is_all_equal() {
        let img = GrayImage::filled(9, 9, 0.3).unwrap();
        let sig = ternary_signature(&img, (4.0, 4.0), 2, 1e-3);
        assert_eq!(sig.neighbor_count(), 24);
        for i in 0..24 {
            assert_eq!(sig.state(i), EQUAL as u8);
        }
    }

    #[test]
    fn horizontal_ramp_orders_neighbors() {
        let img = GrayImage::from_fn(9, 9, |x, _| x as f64 / 10.0);
        let sig = ternary_signature(&img, (4.0, 4.0), 1, 1e-4);
        // Offsets in row-major order around the center:
        // (-1,-1) (0,-1) (1,-1) (-1,0) (1,0) (-1,1) (0,1) (1,1)
        let expected = [LESS, EQUAL, GREATER, LESS, GREATER, LESS, EQUAL, GREATER];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(sig.state(i), *e as u8, "neighbor {i}");
        }
    }

    #[test]
    fn matches_naive_comparison_at_integer_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_fn(12, 10, |_, _| rng.random_range(0.0..1.0));
        let r = 2usize;
        let eps = 0.05;
        for (cx, cy) in [(3usize, 3usize), (0, 0), (11, 9), (6, 2)] {
            let sig = ternary_signature(&img, (cx as f64, cy as f64), r, eps);
            let center = img.get(cx, cy);
            let mut i = 0;
            for dy in -(r as i64)..=r as i64 {
                for dx in -(r as i64)..=r as i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = (cx as i64 + dx).clamp(0, 11) as usize;
                    let ny = (cy as i64 + dy).clamp(0, 9) as usize;
                    let d = img.get(nx, ny) - center;
                    let expect = if d < -eps {
                        0u8
                    } else if d > eps {
                        2
                    } else {
                        1
                    };
                    assert_eq!(sig.state(i), expect, "center ({cx},{cy}) neighbor {i}");
                    i += 1;
                }
            }
        }
    }

    #[test]
    fn rho_d_zero_on_identical_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = GrayImage::from_fn(16, 16, |_, _| rng.random_range(0.0..1.0));
        let cfg = EnergyConfig::default();
        assert_eq!(rho_d(&img, &img, (8, 8), (8.0, 8.0), &cfg), 0.0);
    }

    #[test]
    fn rho_d_saturates_on_inverted_texture() {
        // Alternating texture flips every comparison; the raw distance hits
        // the neighbor count and the truncation bites.
        let img = GrayImage::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { 0.9 } else { 0.1 });
        let inv = GrayImage::from_fn(16, 16, |x, y| 1.0 - img.get(x, y));
        let cfg = EnergyConfig::default();
        let raw = signature_distance(
            &ternary_signature(&img, (8.0, 8.0), cfg.census_radius, cfg.census_eps),
            &ternary_signature(&inv, (8.0, 8.0), cfg.census_radius, cfg.census_eps),
        );
        assert!(raw as f64 >= cfg.tau_d);
        assert_eq!(rho_d(&img, &inv, (8, 8), (8.0, 8.0), &cfg), cfg.tau_d);
    }

    #[test]
    fn true_shift_beats_wrong_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<f64> = (0..32 * 32).map(|_| rng.random_range(0.0..1.0)).collect();
        let smooth = |x: usize, y: usize| {
            let mut acc = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = (x as i64 + dx).clamp(0, 31) as usize;
                    let ny = (y as i64 + dy).clamp(0, 31) as usize;
                    acc += raw[ny * 32 + nx];
                }
            }
            acc / 9.0
        };
        let img_t = GrayImage::from_fn(32, 32, smooth);
        // Frame shifted right by 3: content at (x, y) moves to (x + 3, y).
        let img_t1 = GrayImage::from_fn(32, 32, |x, y| {
            smooth((x as i64 - 3).clamp(0, 31) as usize, y)
        });
        let cfg = EnergyConfig::default();
        let good = rho_d(&img_t, &img_t1, (14, 16), (17.0, 16.0), &cfg);
        let bad = rho_d(&img_t, &img_t1, (14, 16), (22.0, 16.0), &cfg);
        assert!(good < bad, "good {good} >= bad {bad}");
    }
}
