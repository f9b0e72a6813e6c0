use std::collections::BTreeSet;

use super::SemanticClassTable;

/// All weights, thresholds, and iteration counts of the solver.
///
/// The defaults are fixed, documented values; they are not tuned per
/// dataset. Every field can be overridden through the plain-text config
/// format in [`crate::io`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    /// Weight of the label consistency term. Zero disables the label
    /// machinery entirely: the label term reads as 0 and the output label
    /// map equals the bottom-up evidence.
    pub lambda_l: f64,
    /// Weight of the epipolar penalty. Zero disables it and makes the solver
    /// independent of the fundamental matrix.
    pub lambda_p: f64,
    /// Weight of the connectivity term.
    pub lambda_c: f64,
    /// Weight of the boundary relation prior.
    pub lambda_b: f64,
    /// Data cost charged to an occluded pixel instead of its census cost.
    pub lambda_o: f64,
    /// Blend between bottom-up evidence (1) and temporally propagated labels
    /// (0) in the label term.
    pub alpha: f64,
    /// Truncation of the per-superpixel epipolar residual for non-static
    /// content.
    pub lambda_non_st: f64,
    /// Additional truncation headroom for static content; the static ceiling
    /// is `lambda_non_st + beta`.
    pub beta: f64,
    /// Penalty for impossible occlusion configurations. Must exceed any
    /// achievable finite energy on the instance; checked when a solve
    /// starts.
    pub lambda_imp: f64,
    /// Prior charged to a co-planar edge whose superpixels carry different
    /// representative labels.
    pub lambda_co: f64,
    /// Prior charged to a hinge edge.
    pub lambda_h: f64,
    /// Prior charged to an occlusion edge (either direction).
    pub lambda_occ: f64,
    /// Truncation of the census distance, in differing-state counts.
    pub tau_d: f64,
    /// Census window radius in pixels (window side `2r + 1`).
    pub census_radius: usize,
    /// Intensity difference below which two samples count as equal in the
    /// census signature.
    pub census_eps: f64,
    /// Particles kept per superpixel.
    pub particle_count: usize,
    /// Message passing sweeps per outer iteration.
    pub inner_iters: usize,
    /// Outer block coordinate descent iterations.
    pub outer_iters: usize,
    /// Seed for every random decision in the solver.
    pub rng_seed: u64,
    /// Half-range of the translation search and of initial particle
    /// scattering, in pixels.
    pub max_disp: f64,
    /// Initial standard deviation of the perturbed-corner proposal.
    pub sigma0: f64,
    /// Geometric decay of the perturbation per outer iteration.
    pub sigma_decay: f64,
    /// Iteration cap for the Lucas-Kanade proposal.
    pub lk_iters: usize,
    /// Class ids treated as physically static.
    pub static_classes: BTreeSet<u32>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            lambda_l: 1.0,
            lambda_p: 4.0,
            lambda_c: 1.0,
            lambda_b: 1.0,
            lambda_o: 12.0,
            alpha: 0.5,
            lambda_non_st: 0.4,
            beta: 1.6,
            lambda_imp: 1e9,
            lambda_co: 0.5,
            lambda_h: 2.0,
            lambda_occ: 6.0,
            tau_d: 24.0,
            census_radius: 3,
            census_eps: 0.0078,
            particle_count: 5,
            inner_iters: 2,
            outer_iters: 5,
            rng_seed: 0,
            max_disp: 64.0,
            sigma0: 3.0,
            sigma_decay: 0.5,
            lk_iters: 10,
            static_classes: BTreeSet::from([0]),
        }
    }
}

/// Outcome of config validation: one message per violated invariant.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    violations: Vec<String>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(msg());
        }
    }
}

/// Checks every config invariant against the class table. Never fails;
/// returns a report listing the violations.
pub fn validate_config(cfg: &EnergyConfig, table: &SemanticClassTable) -> ValidationReport {
    let mut r = ValidationReport::default();
    let weights = [
        ("lambda_l", cfg.lambda_l),
        ("lambda_p", cfg.lambda_p),
        ("lambda_c", cfg.lambda_c),
        ("lambda_b", cfg.lambda_b),
        ("lambda_o", cfg.lambda_o),
        ("lambda_non_st", cfg.lambda_non_st),
        ("beta", cfg.beta),
        ("lambda_imp", cfg.lambda_imp),
        ("lambda_co", cfg.lambda_co),
        ("lambda_h", cfg.lambda_h),
        ("lambda_occ", cfg.lambda_occ),
        ("tau_d", cfg.tau_d),
    ];
    for (name, v) in weights {
        r.check(v.is_finite() && v >= 0.0, || {
            format!("{name} must be finite and non-negative, got {v}")
        });
    }
    r.check(
        cfg.lambda_occ > cfg.lambda_h && cfg.lambda_h > cfg.lambda_co && cfg.lambda_co > 0.0,
        || {
            format!(
                "boundary priors must satisfy lambda_occ > lambda_h > lambda_co > 0, got {} / {} / {}",
                cfg.lambda_occ, cfg.lambda_h, cfg.lambda_co
            )
        },
    );
    r.check(cfg.alpha.is_finite() && (0.0..=1.0).contains(&cfg.alpha), || {
        format!("alpha must lie in [0, 1], got {}", cfg.alpha)
    });
    r.check(cfg.lambda_imp > 0.0, || {
        "lambda_imp must be strictly positive".into()
    });
    r.check(cfg.census_radius >= 1, || {
        "census_radius must be at least 1".into()
    });
    r.check(cfg.census_eps.is_finite() && cfg.census_eps >= 0.0, || {
        format!("census_eps must be non-negative, got {}", cfg.census_eps)
    });
    r.check(cfg.particle_count >= 1, || {
        "particle_count must be at least 1".into()
    });
    r.check(cfg.inner_iters >= 1, || "inner_iters must be at least 1".into());
    r.check(cfg.outer_iters >= 1, || "outer_iters must be at least 1".into());
    r.check(cfg.max_disp.is_finite() && cfg.max_disp > 0.0, || {
        format!("max_disp must be positive, got {}", cfg.max_disp)
    });
    r.check(cfg.sigma0.is_finite() && cfg.sigma0 >= 0.0, || {
        format!("sigma0 must be non-negative, got {}", cfg.sigma0)
    });
    r.check(
        cfg.sigma_decay.is_finite() && cfg.sigma_decay > 0.0 && cfg.sigma_decay <= 1.0,
        || format!("sigma_decay must lie in (0, 1], got {}", cfg.sigma_decay),
    );
    for &id in &cfg.static_classes {
        r.check((id as usize) < table.len(), || {
            format!("static class id {id} out of range for {} classes", table.len())
        });
    }
    for id in 0..table.len() as u32 {
        let flagged = cfg.static_classes.contains(&id);
        r.check(table.is_static(id) == flagged, || {
            format!(
                "class {id} static flag disagrees between config ({flagged}) and class table ({})",
                table.is_static(id)
            )
        });
    }
    r
}

/// Upper bound of the finite (impossibility-free) energy achievable on an
/// instance, used to check that `lambda_imp` dominates every feasible total.
/// Motion magnitudes are capped at `32 (W + H)`, which every proposal
/// strategy respects by a wide margin.
pub fn finite_energy_bound(
    cfg: &EnergyConfig,
    width: usize,
    height: usize,
    superpixels: usize,
    edges: usize,
    classes: usize,
) -> f64 {
    let motion_cap = 32.0 * (width + height) as f64;
    let data = superpixels as f64 * cfg.tau_d.max(cfg.lambda_o);
    let label = superpixels as f64 * classes as f64 / 2.0;
    let physical = superpixels as f64 * (cfg.lambda_non_st + cfg.beta);
    let connectivity = edges as f64 * 2.0 * motion_cap;
    let prior = edges as f64 * cfg.lambda_occ;
    data + cfg.lambda_l * label
        + cfg.lambda_p * physical
        + cfg.lambda_c * connectivity
        + cfg.lambda_b * prior
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SemanticClassTable {
        SemanticClassTable::with_static_set(3, [0]).unwrap()
    }

    #[test]
    fn default_config_passes() {
        let mut cfg = EnergyConfig::default();
        cfg.static_classes = BTreeSet::from([0]);
        let report = validate_config(&cfg, &table());
        assert!(report.pass(), "violations: {:?}", report.violations());
    }

    #[test]
    fn prior_ordering_violation_is_reported() {
        let mut cfg = EnergyConfig::default();
        cfg.lambda_h = cfg.lambda_occ + 1.0;
        let report = validate_config(&cfg, &table());
        assert!(!report.pass());
        assert!(report
            .violations()
            .iter()
            .any(|m| m.contains("lambda_occ > lambda_h > lambda_co")));
    }

    #[test]
    fn alpha_out_of_range_fails() {
        let mut cfg = EnergyConfig::default();
        cfg.alpha = 1.2;
        assert!(!validate_config(&cfg, &table()).pass());
    }

    #[test]
    fn static_set_must_agree_with_table() {
        let mut cfg = EnergyConfig::default();
        cfg.static_classes = BTreeSet::from([1]);
        assert!(!validate_config(&cfg, &table()).pass());
    }
}
