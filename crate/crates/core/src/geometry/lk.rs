use nalgebra::{Matrix3, Point2, SMatrix, SVector};

use crate::model::{GrayImage, Homography};

/// Inverse-compositional Lucas-Kanade over the 8 homography parameters.
///
/// Minimizes the sum of squared intensity differences between `img_t` at the
/// given pixels and `img_t1` sampled at their warped positions (bilinear,
/// clamp-to-edge). The steepest-descent images and Hessian are precomputed
/// on the template once; each iteration composes the inverse of the
/// parameter increment onto the warp.
///
/// The returned warp never has a higher residual than `h0` on the pixel set:
/// an increment that fails to lower the residual is discarded and iteration
/// stops. Flat templates (singular Hessian) return `h0` unchanged.
pub fn lk_refine(
    h0: &Homography,
    img_t: &GrayImage,
    img_t1: &GrayImage,
    pixels: &[u32],
    max_iters: usize,
) -> Homography {
    assert!(!pixels.is_empty(), "lk_refine needs a non-empty pixel set");
    let width = img_t.width();
    let coords: Vec<(f64, f64)> = pixels
        .iter()
        .map(|&px| ((px as usize % width) as f64, (px as usize / width) as f64))
        .collect();
    let template: Vec<f64> = pixels
        .iter()
        .map(|&px| img_t.data()[px as usize])
        .collect();

    // Steepest descent rows: grad(T) * dW/dp at the identity warp.
    let mut steepest: Vec<SVector<f64, 8>> = Vec::with_capacity(coords.len());
    let mut hessian = SMatrix::<f64, 8, 8>::zeros();
    for &(x, y) in &coords {
        let gx = 0.5 * (img_t.sample_clamped(x + 1.0, y) - img_t.sample_clamped(x - 1.0, y));
        let gy = 0.5 * (img_t.sample_clamped(x, y + 1.0) - img_t.sample_clamped(x, y - 1.0));
        let row = SVector::<f64, 8>::from_column_slice(&[
            gx * x,
            gx * y,
            gx,
            gy * x,
            gy * y,
            gy,
            -x * (gx * x + gy * y),
            -y * (gx * x + gy * y),
        ]);
        hessian += row * row.transpose();
        steepest.push(row);
    }
    let Some(chol) = hessian.cholesky() else {
        return *h0; // no texture to work with
    };

    let ssd = |h: &Homography| -> f64 {
        let mut acc = 0.0;
        for (i, &(x, y)) in coords.iter().enumerate() {
            let sample = match h.map(Point2::new(x, y)) {
                Some(q) => img_t1.sample_clamped(q.x, q.y),
                None => img_t1.sample_clamped(f64::MAX, f64::MAX),
            };
            let d = sample - template[i];
            acc += d * d;
        }
        acc
    };

    let mut current = *h0;
    let mut current_ssd = ssd(&current);
    for _ in 0..max_iters {
        let mut rhs = SVector::<f64, 8>::zeros();
        for (i, &(x, y)) in coords.iter().enumerate() {
            let sample = match current.map(Point2::new(x, y)) {
                Some(q) => img_t1.sample_clamped(q.x, q.y),
                None => img_t1.sample_clamped(f64::MAX, f64::MAX),
            };
            rhs += steepest[i] * (sample - template[i]);
        }
        let dp = chol.solve(&rhs);
        let delta = Matrix3::new(
            1.0 + dp[0],
            dp[1],
            dp[2],
            dp[3],
            1.0 + dp[4],
            dp[5],
            dp[6],
            dp[7],
            1.0,
        );
        let Some(delta_inv) = delta.try_inverse() else {
            break;
        };
        let Ok(next) = Homography::new(current.matrix() * delta_inv) else {
            break;
        };
        let next_ssd = ssd(&next);
        if next_ssd >= current_ssd {
            break;
        }
        let rel_drop = (current_ssd - next_ssd) / current_ssd.max(1e-300);
        current = next;
        current_ssd = next_ssd;
        if rel_drop < 1e-6 {
            break;
        }
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Band-limited noise: random grid smoothed with a small box filter so
    /// gradients exist everywhere.
    fn textured(width: usize, height: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..width * height)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        GrayImage::from_fn(width, height, |x, y| {
            let mut acc = 0.0;
            let mut count = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = (x as i64 + dx).clamp(0, width as i64 - 1) as usize;
                    let ny = (y as i64 + dy).clamp(0, height as i64 - 1) as usize;
                    acc += raw[ny * width + nx];
                    count += 1.0;
                }
            }
            acc / count
        })
    }

    fn warp_image(src: &GrayImage, h: &Homography) -> GrayImage {
        let inv = h.inverse().unwrap();
        GrayImage::from_fn(src.width(), src.height(), |x, y| {
            match inv.map(Point2::new(x as f64, y as f64)) {
                Some(p) => src.sample_clamped(p.x, p.y),
                None => 0.0,
            }
        })
    }

    fn interior_pixels(width: usize, height: usize, margin: usize) -> Vec<u32> {
        let mut out = Vec::new();
        for y in margin..height - margin {
            for x in margin..width - margin {
                out.push((y * width + x) as u32);
            }
        }
        out
    }

    #[test]
    fn fixed_point_returns_input() {
        let img = textured(32, 32, 1);
        let h0 = Homography::translation(1.0, -2.0).unwrap();
        let img1 = warp_image(&img, &h0);
        let pixels = interior_pixels(32, 32, 6);
        let out = lk_refine(&h0, &img, &img1, &pixels, 10);
        let d: f64 = (out.matrix() - h0.matrix()).norm();
        assert!(d < 1e-6, "drifted by {d}");
    }

    #[test]
    fn recovers_subpixel_translation() {
        let img = textured(48, 48, 2);
        let gt = Homography::translation(1.5, 0.0).unwrap();
        let img1 = warp_image(&img, &gt);
        let pixels = interior_pixels(48, 48, 8);
        let out = lk_refine(&Homography::identity(), &img, &img1, &pixels, 30);
        let q = out.map(Point2::new(24.0, 24.0)).unwrap();
        assert!(
            (q.x - 25.5).abs() < 0.05 && (q.y - 24.0).abs() < 0.05,
            "recovered ({}, {})",
            q.x - 24.0,
            q.y - 24.0
        );
    }

    #[test]
    fn flat_patch_returns_input() {
        let img = GrayImage::filled(16, 16, 0.5).unwrap();
        let h0 = Homography::translation(0.5, 0.5).unwrap();
        let pixels = interior_pixels(16, 16, 2);
        let out = lk_refine(&h0, &img, &img, &pixels, 10);
        assert_eq!(out.matrix(), h0.matrix());
    }

    #[test]
    fn never_increases_ssd() {
        let img = textured(32, 32, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pixels = interior_pixels(32, 32, 6);
        for trial in 0..10 {
            let gt = Homography::translation(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            )
            .unwrap();
            let img1 = warp_image(&img, &gt);
            let h0 = Homography::translation(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .unwrap();
            let measure = |h: &Homography| -> f64 {
                pixels
                    .iter()
                    .map(|&px| {
                        let (x, y) = ((px % 32) as f64, (px / 32) as f64);
                        let q = h.map(Point2::new(x, y)).unwrap();
                        let d = img1.sample_clamped(q.x, q.y) - img.get(x as usize, y as usize);
                        d * d
                    })
                    .sum()
            };
            let out = lk_refine(&h0, &img, &img1, &pixels, 20);
            assert!(
                measure(&out) <= measure(&h0) + 1e-12,
                "trial {trial} increased the residual"
            );
        }
    }
}
