//! Every tunable default in one versioned place, echoed into reports so
//! numeric claims stay reproducible.

use std::sync::OnceLock;

use serde::Serialize;

use crate::geometry::QuadratureSpec;

pub const DEFAULTS_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize)]
pub struct Defaults {
    pub version: &'static str,
    /// General-purpose quadrature for current evaluation.
    pub quadrature: QuadratureSpec,
    /// Cheaper quadrature for probe sweeps (many small integrals).
    pub scan_quadrature: QuadratureSpec,
    /// Scenario boxes are `(-h, h)^n` with this halfwidth.
    pub box_halfwidth: f64,
    /// Square patches per axis when triangulating a surface piece.
    pub surface_patches: usize,
    /// Probe bump radius on unit-scale scenarios.
    pub probe_radius: f64,
    /// Probe grid pitch on unit-scale scenarios.
    pub probe_pitch: f64,
    /// Closedness verdict threshold on mass-normalized residuals.
    pub closedness_threshold: f64,
    /// Sample count for numerical zero-testing of forms.
    pub zero_sample_count: usize,
    /// Max |coefficient| below which a sampled form counts as zero.
    pub zero_threshold: f64,
    /// Relative spread above which line strengths count as non-constant.
    pub strength_constancy_tol: f64,
    /// Line-fit probes whose denominator falls below this miss the line.
    pub denominator_floor: f64,
    /// Frank branching sums must vanish to this tolerance.
    pub branching_tolerance: f64,
    /// Points closer than this to the domain boundary are boundary points.
    pub boundary_snap: f64,
}

impl Defaults {
    pub fn get() -> &'static Defaults {
        static INSTANCE: OnceLock<Defaults> = OnceLock::new();
        INSTANCE.get_or_init(|| Defaults {
            version: DEFAULTS_VERSION,
            quadrature: QuadratureSpec {
                cells_per_axis: 16,
                gauss_order: 6,
                epsilon_ladder: QuadratureSpec::halving_ladder(0.25, 7),
            },
            scan_quadrature: QuadratureSpec {
                cells_per_axis: 12,
                gauss_order: 8,
                epsilon_ladder: QuadratureSpec::halving_ladder(0.25, 7),
            },
            box_halfwidth: 1.0,
            surface_patches: 32,
            probe_radius: 0.15,
            probe_pitch: 0.1,
            closedness_threshold: 1e-6,
            zero_sample_count: 256,
            zero_threshold: 1e-9,
            strength_constancy_tol: 1e-3,
            denominator_floor: 1e-12,
            branching_tolerance: 1e-12,
            boundary_snap: 1e-9,
        })
    }
}
