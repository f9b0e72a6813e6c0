//! Synthetic scenes with exact ground truth plus the independent brute-force
//! energy oracle used by the property suites.

mod oracle;
mod scene;

pub use oracle::oracle_energy;
pub use scene::{
    make_scene, noise_texture, FundamentalSpec, RegionSpec, SceneSpec, SceneTemplate,
    SyntheticScene,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::epipolar_residual;
    use crate::model::Homography;

    #[test]
    fn identity_scene_has_identical_frames_and_no_occlusion() {
        let mut spec = SceneTemplate::SinglePlane.spec(24, 20, 0);
        spec.background_homography = Homography::identity();
        let scene = make_scene(&spec, 3).unwrap();
        assert_eq!(scene.frame_t, scene.frame_t1);
        assert!(scene.gt_flow.u().iter().all(|&u| u == 0.0));
        assert!(scene.gt_occlusion.iter().all(|&o| !o));
    }

    #[test]
    fn static_scene_matches_satisfy_f() {
        for seed in 0..5u64 {
            let spec = SceneTemplate::TwoPlaneStatic.spec(32, 24, seed);
            let scene = make_scene(&spec, seed).unwrap();
            for m in scene.sample_static_matches(64, seed ^ 1) {
                let r = epipolar_residual(&scene.fundamental, m.p, m.q);
                assert!(r < 1e-10, "residual {r} at seed {seed}");
            }
        }
    }

    #[test]
    fn occlusion_band_matches_collision_enumeration() {
        // Background slides right by 5, foreground sits still: background
        // pixels whose target lands on the (stationary) square collide.
        let spec = SceneSpec {
            width: 32,
            height: 24,
            background_homography: Homography::translation(5.0, 0.0).unwrap(),
            background_class: 0,
            regions: vec![RegionSpec {
                x0: 12,
                y0: 6,
                x1: 21,
                y1: 15,
                homography: Homography::identity(),
                class_id: 1,
            }],
            fundamental: FundamentalSpec::Translation(5.0, 0.0),
            class_count: 3,
            static_classes: std::collections::BTreeSet::from([0]),
            noise_sigma: 0.0,
            evidence_flip_prob: 0.0,
        };
        let scene = make_scene(&spec, 9).unwrap();
        for y in 0..24usize {
            for x in 0..32usize {
                let px = y * 32 + x;
                // A background pixel collides exactly when its target x + 5
                // lands in the square's footprint [12, 21] x [6, 15].
                let expect = scene.region_map[px] == 0
                    && (6..=15).contains(&y)
                    && (12..=21).contains(&(x + 5));
                assert_eq!(
                    scene.gt_occlusion[px], expect,
                    "pixel ({x},{y}) occlusion mismatch"
                );
            }
        }
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let spec = SceneTemplate::TwoPlaneDynamic.spec(32, 24, 7);
        let a = make_scene(&spec, 7).unwrap();
        let b = make_scene(&spec, 7).unwrap();
        assert_eq!(a.frame_t, b.frame_t);
        assert_eq!(a.frame_t1, b.frame_t1);
        assert_eq!(a.gt_occlusion, b.gt_occlusion);
    }

    #[test]
    fn overlapping_regions_rejected() {
        let mut spec = SceneTemplate::TwoPlaneDynamic.spec(32, 24, 1);
        let r = spec.regions[0].clone();
        spec.regions.push(r);
        assert!(make_scene(&spec, 1).is_err());
    }
}
