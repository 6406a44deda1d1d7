//! Prebuilt worked examples, each pairing a current with the analytic
//! value of its boundary for golden testing.
//!
//! Orientation conventions are pinned here once:
//!
//! * the half-plane sheet `h` (x = 0, z <= 0) is oriented so its free
//!   boundary edge on z = 0 runs in +y,
//! * interface and leaf surfaces on z = 0 are oriented by dx∧dy,
//! * the ambient box is `(-1, 1)^n`.

use crate::currents::{Current, TestForm};
use crate::defaults::Defaults;
use crate::error::{CoreError, Result};
use crate::exterior::{halton_points, DifferentialForm, MultiIndex};
use crate::geometry::{gauss_legendre, Chain, Kahan, QuadratureSpec, Region, Simplex};
use crate::symexpr::ScalarExpr;

/// Closed-form evaluator for the expected boundary action on a probe.
pub type BoundaryOracle = Box<dyn Fn(&TestForm) -> Result<f64> + Send + Sync>;

/// A worked example: the current, and where the theory provides one,
/// its expected boundary as a function of the test form.
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub current: Current,
    pub expected_boundary: Option<BoundaryOracle>,
    pub notes: String,
}

/// Point-sampled facts about an interface scenario.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InterfaceFacts {
    /// max |jump| of the three layering components across the interface
    pub max_jump: [f64; 3],
    /// sampled max |d f| coefficient strictly inside the upper half
    pub df_plus_residual: f64,
    /// sampled max |d f| coefficient strictly inside the lower half
    pub df_minus_residual: f64,
}

pub fn scenario_names() -> &'static [&'static str] {
    &[
        "edge-dislocation",
        "open-book-2d",
        "open-book-3d",
        "screw",
        "interface-horizontal",
        "interface-vertical",
        "broken-leaves",
    ]
}

fn unit_box(dim: usize) -> Vec<(f64, f64)> {
    let h = Defaults::get().box_halfwidth;
    vec![(-h, h); dim]
}

/// Triangulates the parameter rectangle `[u0,u1] x [v0,v1]` into
/// `patches x patches x 2` triangles through `embed`; counterclockwise
/// in (u, v) unless `flip`.
fn triangulate_rectangle(
    embed: impl Fn(f64, f64) -> Vec<f64>,
    u_range: (f64, f64),
    v_range: (f64, f64),
    patches: usize,
    flip: bool,
) -> Result<Chain> {
    let mut terms = Vec::with_capacity(2 * patches * patches);
    let du = (u_range.1 - u_range.0) / patches as f64;
    let dv = (v_range.1 - v_range.0) / patches as f64;
    for iu in 0..patches {
        for iv in 0..patches {
            let u0 = u_range.0 + iu as f64 * du;
            let u1 = u_range.0 + (iu + 1) as f64 * du;
            let v0 = v_range.0 + iv as f64 * dv;
            let v1 = v_range.0 + (iv + 1) as f64 * dv;
            let p00 = embed(u0, v0);
            let p10 = embed(u1, v0);
            let p11 = embed(u1, v1);
            let p01 = embed(u0, v1);
            let (a, b) = if flip {
                (
                    Simplex::new(vec![p00.clone(), p11.clone(), p10.clone()])?,
                    Simplex::new(vec![p00, p01, p11])?,
                )
            } else {
                (
                    Simplex::new(vec![p00.clone(), p10.clone(), p11.clone()])?,
                    Simplex::new(vec![p00, p11, p01])?,
                )
            };
            terms.push((1.0, a));
            terms.push((1.0, b));
        }
    }
    Chain::new(terms)
}

/// The angular 1-form `(-y dx + x dy)/(x^2 + y^2)` in the first two
/// coordinates of an n-dimensional space.
pub fn angular_form(dim: usize) -> Result<DifferentialForm> {
    DifferentialForm::zero(dim, 1)
        .with_coeff(&[1], ScalarExpr::parse("-y/(x^2+y^2)", dim).map_err(CoreError::Parse)?)?
        .with_coeff(&[2], ScalarExpr::parse("x/(x^2+y^2)", dim).map_err(CoreError::Parse)?)
}

/// A sheet of material cut on the half-plane x = 0, z <= 0: its
/// boundary is the y-axis segment, the classical edge dislocation.
pub fn edge_dislocation() -> Result<Scenario> {
    let defaults = Defaults::get();
    let h = defaults.box_halfwidth;
    let patches = defaults.surface_patches;
    // parameters (u, v) = (y, z); flip so the z = 0 edge runs in +y
    let sheet = triangulate_rectangle(
        |y, z| vec![0.0, y, z],
        (-h, h),
        (-h, 0.0),
        patches,
        true,
    )?;
    let current = Current::from_chain(sheet, None)?.with_ambient(&unit_box(3));
    let expected: BoundaryOracle = Box::new(move |psi: &TestForm| {
        // ∫_L ψ along the y-axis segment oriented +y: only the dy
        // coefficient of ψ pulls back
        let idx = MultiIndex::from_one_based(&[2])?;
        let Some(coeff) = psi.form().coeff(&idx).cloned() else {
            return Ok(0.0);
        };
        line_integral_y_axis(&coeff, -h, h)
    });
    Ok(Scenario {
        name: "edge-dislocation".into(),
        dim: 3,
        current,
        expected_boundary: Some(expected),
        notes: "sheet on x = 0, z <= 0; boundary is the y-axis segment oriented +y".into(),
    })
}

fn line_integral_y_axis(coeff: &ScalarExpr, lo: f64, hi: f64) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(12);
    let cells = 64usize;
    let h = (hi - lo) / cells as f64;
    let mut acc = Kahan::default();
    for c in 0..cells {
        let a = lo + c as f64 * h;
        for (&z, &w) in nodes.iter().zip(&weights) {
            let y = a + 0.5 * h * (z + 1.0);
            acc.add(0.5 * h * w * coeff.eval(&[0.0, y, 0.0]).map_err(CoreError::Eval)?);
        }
    }
    Ok(acc.total())
}

/// Radial layering around a removed origin in the plane; the boundary
/// concentrates 2π times the probe's value at the origin.
pub fn open_book_2d() -> Result<Scenario> {
    let h = Defaults::get().box_halfwidth;
    let region = Region::cube(2, h).puncture(&[(1, 0.0), (2, 0.0)], 0.25)?;
    let current = Current::from_form(angular_form(2)?, region)?;
    let expected: BoundaryOracle = Box::new(|beta: &TestForm| {
        let Some((_, coeff)) = beta.form().coeffs().next() else {
            return Ok(0.0);
        };
        Ok(2.0 * std::f64::consts::PI * coeff.eval(&[0.0, 0.0]).map_err(CoreError::Eval)?)
    });
    Ok(Scenario {
        name: "open-book-2d".into(),
        dim: 2,
        current,
        expected_boundary: Some(expected),
        notes: "angular layering in the punctured plane; boundary = 2π δ_0".into(),
    })
}

/// The same radial layering swept along the z-axis: pages of an open
/// book with the spine on the axis.
pub fn open_book_3d() -> Result<Scenario> {
    let h = Defaults::get().box_halfwidth;
    let region = Region::cube(3, h).puncture(&[(1, 0.0), (2, 0.0)], 0.25)?;
    let current = Current::from_form(angular_form(3)?, region)?;
    let expected: BoundaryOracle = Box::new(move |gamma: &TestForm| {
        // 2π ∫ γ_3(0, 0, z) dz over the box extent
        let idx = MultiIndex::from_one_based(&[3])?;
        let Some(coeff) = gamma.form().coeff(&idx).cloned() else {
            return Ok(0.0);
        };
        let (nodes, weights) = gauss_legendre(12);
        let cells = 64usize;
        let step = 2.0 * h / cells as f64;
        let mut acc = Kahan::default();
        for c in 0..cells {
            let a = -h + c as f64 * step;
            for (&t, &w) in nodes.iter().zip(&weights) {
                let z = a + 0.5 * step * (t + 1.0);
                acc.add(
                    0.5 * step * w * coeff.eval(&[0.0, 0.0, z]).map_err(CoreError::Eval)?,
                );
            }
        }
        Ok(2.0 * std::f64::consts::PI * acc.total())
    });
    Ok(Scenario {
        name: "open-book-3d".into(),
        dim: 3,
        current,
        expected_boundary: Some(expected),
        notes: "angular layering about the z-axis; boundary = 2π ∫ γ3(0,0,z) dz".into(),
    })
}

/// Open book plus `a` times the closed layering `dz`: the pages twist
/// into helicoids but the defect is unchanged.
pub fn screw_dislocation(a: f64) -> Result<Scenario> {
    let book = open_book_3d()?;
    let dz = Current::from_form(
        DifferentialForm::basis(3, &[3])?,
        Region::cube(3, Defaults::get().box_halfwidth),
    )?;
    let current = Current::linear_combine(&[(1.0, book.current), (a, dz)])?;
    Ok(Scenario {
        name: "screw".into(),
        dim: 3,
        current,
        expected_boundary: book.expected_boundary,
        notes: format!(
            "open book plus {a} * dz; adding a closed layering leaves the boundary unchanged"
        ),
    })
}

/// Two smooth layerings glued across the plane z = 0. The boundary
/// picks up the trace jump on the interface plus any interior
/// non-closedness of either side.
pub fn interface_coherence(
    f_plus: DifferentialForm,
    f_minus: DifferentialForm,
) -> Result<(Scenario, InterfaceFacts)> {
    if f_plus.dim() != 3 || f_minus.dim() != 3 || f_plus.degree() != 1 || f_minus.degree() != 1 {
        return Err(CoreError::Invalid(
            "interface layerings must be 1-forms in three dimensions".into(),
        ));
    }
    let h = Defaults::get().box_halfwidth;
    let upper = Region::cube(3, h).clip_ge(3, 0.0)?;
    let lower = Region::cube(3, h).clip_le(3, 0.0)?;
    let t_plus = Current::from_form(f_plus.clone(), upper.clone())?;
    let t_minus = Current::from_form(f_minus.clone(), lower.clone())?;
    let current = Current::linear_combine(&[(1.0, t_plus), (1.0, t_minus)])?;

    let facts = interface_facts(&f_plus, &f_minus, h)?;

    let df_plus = f_plus.d();
    let df_minus = f_minus.d();
    let jump = [
        component(&f_plus, 1)?.sub(&component(&f_minus, 1)?),
        component(&f_plus, 2)?.sub(&component(&f_minus, 2)?),
    ];
    let expected: BoundaryOracle = Box::new(move |psi: &TestForm| {
        // interface term: ∫_Σ [[f]]∧ψ with Σ oriented dx∧dy; only the
        // tangential jump components enter
        let mut total = Kahan::default();
        total.add(sigma_integral(&jump, psi, h)?);
        // interior terms: ∫ df ∧ ψ over each open half
        let spec = QuadratureSpec::new(12, 8, vec![]).unwrap();
        for (df, region) in [(&df_plus, &upper), (&df_minus, &lower)] {
            if df.is_structurally_zero() {
                continue;
            }
            let integrand = df.wedge(psi.form())?;
            if let Some(r) = region.restricted_to(psi.support()) {
                total.add(crate::geometry::integrate_region(&integrand, &r, &spec)?);
            }
        }
        Ok(total.total())
    });

    Ok((
        Scenario {
            name: "interface".into(),
            dim: 3,
            current,
            expected_boundary: Some(expected),
            notes: "two half-space layerings glued across z = 0".into(),
        },
        facts,
    ))
}

fn component(form: &DifferentialForm, i: usize) -> Result<ScalarExpr> {
    let idx = MultiIndex::from_one_based(&[i])?;
    Ok(form
        .coeff(&idx)
        .cloned()
        .unwrap_or_else(|| ScalarExpr::zero(form.dim())))
}

/// `∫_Σ [[f]] ∧ ψ` over the z = 0 square: the dx∧dy pullback
/// coefficient is `[[f1]] ψ2 − [[f2]] ψ1` at (x, y, 0).
fn sigma_integral(jump: &[ScalarExpr; 2], psi: &TestForm, halfwidth: f64) -> Result<f64> {
    let psi1 = component(psi.form(), 1)?;
    let psi2 = component(psi.form(), 2)?;
    let (nodes, weights) = gauss_legendre(10);
    let cells = 48usize;
    let step = 2.0 * halfwidth / cells as f64;
    let mut acc = Kahan::default();
    for ix in 0..cells {
        for iy in 0..cells {
            let x0 = -halfwidth + ix as f64 * step;
            let y0 = -halfwidth + iy as f64 * step;
            for (&tx, &wx) in nodes.iter().zip(&weights) {
                let x = x0 + 0.5 * step * (tx + 1.0);
                for (&ty, &wy) in nodes.iter().zip(&weights) {
                    let y = y0 + 0.5 * step * (ty + 1.0);
                    let p = [x, y, 0.0];
                    let j1 = jump[0].eval(&p).map_err(CoreError::Eval)?;
                    let j2 = jump[1].eval(&p).map_err(CoreError::Eval)?;
                    if j1 == 0.0 && j2 == 0.0 {
                        continue;
                    }
                    let v1 = psi1.eval(&p).map_err(CoreError::Eval)?;
                    let v2 = psi2.eval(&p).map_err(CoreError::Eval)?;
                    acc.add(0.25 * step * step * wx * wy * (j1 * v2 - j2 * v1));
                }
            }
        }
    }
    Ok(acc.total())
}

fn interface_facts(
    f_plus: &DifferentialForm,
    f_minus: &DifferentialForm,
    halfwidth: f64,
) -> Result<InterfaceFacts> {
    let mut max_jump = [0.0f64; 3];
    for p in halton_points(&[(-halfwidth, halfwidth), (-halfwidth, halfwidth)], 64) {
        let at = [p[0], p[1], 0.0];
        for k in 1..=3 {
            let plus = component(f_plus, k)?.eval(&at).map_err(CoreError::Eval)?;
            let minus = component(f_minus, k)?.eval(&at).map_err(CoreError::Eval)?;
            max_jump[k - 1] = max_jump[k - 1].max((plus - minus).abs());
        }
    }
    let count = Defaults::get().zero_sample_count;
    let upper_box = [
        (-halfwidth, halfwidth),
        (-halfwidth, halfwidth),
        (0.01, halfwidth),
    ];
    let lower_box = [
        (-halfwidth, halfwidth),
        (-halfwidth, halfwidth),
        (-halfwidth, -0.01),
    ];
    Ok(InterfaceFacts {
        max_jump,
        df_plus_residual: f_plus.d().max_abs_on_sample(&upper_box, count)?,
        df_minus_residual: f_minus.d().max_abs_on_sample(&lower_box, count)?,
    })
}

/// Horizontal layering (parallel to the interface) with a density jump:
/// `f± = A,B dz`. Defect-free for any A, B.
pub fn interface_horizontal(a: f64, b: f64) -> Result<(Scenario, InterfaceFacts)> {
    let f_plus = DifferentialForm::zero(3, 1)
        .with_coeff(&[3], ScalarExpr::constant(a, 3))?;
    let f_minus = DifferentialForm::zero(3, 1)
        .with_coeff(&[3], ScalarExpr::constant(b, 3))?;
    let (mut s, facts) = interface_coherence(f_plus, f_minus)?;
    s.name = "interface-horizontal".into();
    s.notes = format!("horizontal layering with density jump {a} vs {b}: no defect");
    Ok((s, facts))
}

/// Vertical layering (perpendicular to the interface): `f± = A,B dy`.
/// Incoherent across the interface unless A = B.
pub fn interface_vertical(a: f64, b: f64) -> Result<(Scenario, InterfaceFacts)> {
    let f_plus = DifferentialForm::zero(3, 1)
        .with_coeff(&[2], ScalarExpr::constant(a, 3))?;
    let f_minus = DifferentialForm::zero(3, 1)
        .with_coeff(&[2], ScalarExpr::constant(b, 3))?;
    let (mut s, facts) = interface_coherence(f_plus, f_minus)?;
    s.name = "interface-vertical".into();
    s.notes = format!("vertical layering {a} vs {b}: incoherence defect on z = 0 unless equal");
    Ok((s, facts))
}

/// The broken-leaves limit current: a surface sheet on z = 0 plus the
/// smooth layering `dy`.
pub fn broken_leaves_limit() -> Result<Scenario> {
    let defaults = Defaults::get();
    let h = defaults.box_halfwidth;
    let sigma = triangulate_rectangle(
        |x, y| vec![x, y, 0.0],
        (-h, h),
        (-h, h),
        defaults.surface_patches,
        false,
    )?;
    let sheet = Current::from_chain(sigma, None)?;
    let dy = Current::from_form(DifferentialForm::basis(3, &[2])?, Region::cube(3, h))?;
    let current =
        Current::linear_combine(&[(1.0, sheet), (1.0, dy)])?.with_ambient(&unit_box(3));
    Ok(Scenario {
        name: "broken-leaves".into(),
        dim: 3,
        current,
        // dα = 0 for α = dy, and the sheet is closed as a current
        expected_boundary: Some(Box::new(|_| Ok(0.0))),
        notes: "limit of layerings concentrating onto the z = 0 sheet; \
                the smoothed sequence also carries a surface term acting on the \
                dx∧dz probe component, so it reproduces this current only on \
                probes whose dx∧dz coefficient vanishes near the sheet"
            .into(),
    })
}

/// The smoothing sequence: `T_i = ∫ α_i ∧ ·` with
/// `α_i = (1 - c_i) dy + c_i dz` and `c_i` a unit-mass bump of width
/// `2^-i` in z. Each `c_i` term lives on its own z-slab so quadrature
/// always resolves the layer.
pub fn broken_leaves_sequence(i_max: usize) -> Result<Vec<Current>> {
    if i_max == 0 || i_max > 20 {
        return Err(CoreError::Invalid(format!(
            "sequence index must be within 1..=20 (layer width 2^-i underflows the \
             quadrature otherwise), got {i_max}"
        )));
    }
    let h = Defaults::get().box_halfwidth;
    let ambient = unit_box(3);
    let mut out = Vec::with_capacity(i_max);
    for i in 1..=i_max {
        let width = 0.5f64.powi(i as i32);
        let mass = bump_line_mass(width)?;
        let c_i = ScalarExpr::parse(&format!("bump({width}; z)/{mass}"), 3)
            .map_err(CoreError::Parse)?;
        // α_i = dy + c_i (dz - dy); the c_i part vanishes outside the slab
        let dy_part = Current::from_form(DifferentialForm::basis(3, &[2])?, Region::cube(3, h))?;
        let slab = Region::bounding_box(&[(-h, h), (-h, h), (-width, width)])?;
        let cz_minus_cy = DifferentialForm::zero(3, 1)
            .with_coeff(&[2], c_i.neg())?
            .with_coeff(&[3], c_i)?;
        let slab_part = Current::from_form(cz_minus_cy, slab)?;
        out.push(
            Current::linear_combine(&[(1.0, dy_part), (1.0, slab_part)])?
                .with_ambient(&ambient),
        );
    }
    Ok(out)
}

/// `∫ bump(width; z) dz` over the support, by fine 1-D quadrature.
fn bump_line_mass(width: f64) -> Result<f64> {
    let bump = ScalarExpr::parse(&format!("bump({width}; x)"), 1).map_err(CoreError::Parse)?;
    let (nodes, weights) = gauss_legendre(16);
    let cells = 32usize;
    let step = 2.0 * width / cells as f64;
    let mut acc = Kahan::default();
    for c in 0..cells {
        let a = -width + c as f64 * step;
        for (&t, &w) in nodes.iter().zip(&weights) {
            let z = a + 0.5 * step * (t + 1.0);
            acc.add(0.5 * step * w * bump.eval(&[z]).map_err(CoreError::Eval)?);
        }
    }
    Ok(acc.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::new(16, 6, QuadratureSpec::halving_ladder(0.25, 7)).unwrap()
    }

    #[test]
    fn scenario_construction_is_deterministic() {
        let s1 = edge_dislocation().unwrap();
        let s2 = edge_dislocation().unwrap();
        let psi = TestForm::bump_probe(&[0.0, 0.2, 0.0], 0.3, &[2]).unwrap();
        let q = spec();
        let a = s1.current.boundary().unwrap().evaluate(&psi, &q).unwrap();
        let b = s2.current.boundary().unwrap().evaluate(&psi, &q).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn edge_dislocation_matches_line_integral() {
        let s = edge_dislocation().unwrap();
        let q = QuadratureSpec::new(64, 6, vec![]).unwrap();
        let boundary = s.current.boundary().unwrap();
        let expected = s.expected_boundary.as_ref().unwrap();

        // a dy probe near the line
        let psi = TestForm::bump_probe(&[0.0, 0.2, 0.0], 0.3, &[2]).unwrap();
        let got = boundary.evaluate(&psi, &q).unwrap();
        let want = expected(&psi).unwrap();
        assert!(want.abs() > 1e-3, "oracle should be nontrivial: {want}");
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");

        // dx pulls back to zero on the line
        let psi = TestForm::bump_probe(&[0.0, 0.2, 0.0], 0.3, &[1]).unwrap();
        let got = boundary.evaluate(&psi, &q).unwrap();
        assert!(got.abs() <= 1e-6, "dx probe: {got}");

        // support away from the sheet sees nothing
        let psi = TestForm::bump_probe(&[0.6, 0.0, 0.0], 0.2, &[2]).unwrap();
        assert_eq!(boundary.evaluate(&psi, &q).unwrap(), 0.0);
    }

    #[test]
    fn open_book_2d_concentrates_two_pi() {
        let s = open_book_2d().unwrap();
        let q = spec();
        let boundary = s.current.boundary().unwrap();
        let beta = TestForm::bump_probe(&[0.0, 0.0], 0.5, &[]).unwrap();
        let got = boundary.evaluate(&beta, &q).unwrap();
        let want = 2.0 * std::f64::consts::PI;
        assert!(
            (got - want).abs() <= 1e-3 * want,
            "got {got}, want {want}, rel {}",
            ((got - want) / want).abs()
        );

        // annulus-supported probe (zero at the origin) sees nothing
        let ring = ScalarExpr::parse("x^2 + y^2", 2).unwrap();
        let beta = TestForm::modulated_bump_probe(&[0.0, 0.0], 0.5, &[], &ring).unwrap();
        let got = boundary.evaluate(&beta, &q).unwrap();
        // the pinned linear extrapolation model leaves an O(eps^2) residue
        assert!(got.abs() <= 5e-4, "off-origin probe: {got}");
    }

    #[test]
    fn open_book_3d_matches_axis_integral() {
        let s = open_book_3d().unwrap();
        let q = spec();
        let boundary = s.current.boundary().unwrap();
        let expected = s.expected_boundary.as_ref().unwrap();
        let gamma = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.5, &[3]).unwrap();
        let got = boundary.evaluate(&gamma, &q).unwrap();
        let want = expected(&gamma).unwrap();
        assert!(want > 0.1);
        assert!(
            (got - want).abs() <= 1e-3 * want.abs(),
            "{got} vs {want}, rel {}",
            ((got - want) / want).abs()
        );
    }

    #[test]
    fn screw_boundary_equals_open_book_boundary() {
        let q = spec();
        let book = open_book_3d().unwrap();
        let screw = screw_dislocation(1.0).unwrap();
        let b_book = book.current.boundary().unwrap();
        let b_screw = screw.current.boundary().unwrap();
        for center in [[0.0, 0.0, 0.0], [0.1, -0.1, 0.2]] {
            for idx in [[1usize], [3usize]] {
                let psi = TestForm::bump_probe(&center, 0.4, &idx).unwrap();
                let a = b_screw.evaluate(&psi, &q).unwrap();
                let b = b_book.evaluate(&psi, &q).unwrap();
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
        // a = 0 degenerates to the open book exactly
        let trivial = screw_dislocation(0.0).unwrap();
        let psi = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.4, &[3]).unwrap();
        assert_eq!(
            trivial.current.boundary().unwrap().evaluate(&psi, &q).unwrap().to_bits(),
            b_book.evaluate(&psi, &q).unwrap().to_bits()
        );
    }

    #[test]
    fn helicoid_is_an_integral_surface_of_the_screw_layering() {
        // on the surface θ + a z = const the phase stays constant
        let a = 0.3;
        let theta = ScalarExpr::parse("atan2(y, x)", 3).unwrap();
        let mut max_dev = 0.0f64;
        for k in 0..12 {
            for m in 0..12 {
                let rho = 0.2 + 0.6 * (k as f64) / 11.0;
                let z = -0.9 + 1.8 * (m as f64) / 11.0;
                let angle = -a * z; // the c = 0 leaf
                let p = [rho * angle.cos(), rho * angle.sin(), z];
                let phase = theta.eval(&p).unwrap() + a * z;
                max_dev = max_dev.max(phase.abs());
            }
        }
        assert!(max_dev <= 1e-9, "phase drift {max_dev:e}");
    }

    #[test]
    fn interface_jump_structure() {
        let (_, facts) = interface_horizontal(2.0, 5.0).unwrap();
        assert!(facts.max_jump[0] < 1e-12 && facts.max_jump[1] < 1e-12);
        assert!((facts.max_jump[2] - 3.0).abs() < 1e-12);
        assert!(facts.df_plus_residual < 1e-12 && facts.df_minus_residual < 1e-12);

        let (s, facts) = interface_vertical(2.0, 5.0).unwrap();
        assert!((facts.max_jump[1] - 3.0).abs() < 1e-12);
        // the boundary really acts on probes crossing the interface
        let q = spec();
        let psi = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.3, &[1]).unwrap();
        let got = s.current.boundary().unwrap().evaluate(&psi, &q).unwrap();
        let want = s.expected_boundary.as_ref().unwrap()(&psi).unwrap();
        assert!(got.abs() > 1e-3, "interface defect visible: {got}");
        assert!(
            (got - want).abs() <= 1e-6 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }

    #[test]
    fn interface_identical_closed_sides_are_closed() {
        let f = DifferentialForm::zero(3, 1)
            .with_coeff(&[2], ScalarExpr::constant(1.5, 3))
            .unwrap()
            .with_coeff(&[3], ScalarExpr::constant(0.5, 3))
            .unwrap();
        let (s, facts) = interface_coherence(f.clone(), f).unwrap();
        assert!(facts.max_jump.iter().all(|&j| j < 1e-12));
        let q = spec();
        let psi = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.3, &[1]).unwrap();
        let got = s.current.boundary().unwrap().evaluate(&psi, &q).unwrap();
        assert!(got.abs() <= 1e-8, "closed glued layering: {got}");
    }

    #[test]
    fn broken_leaves_sequence_concentrates() {
        let q = spec();
        let seq = broken_leaves_sequence(6).unwrap();
        let limit = broken_leaves_limit().unwrap();
        // probe with dx∧dy component only (no dx∧dz): the sequence
        // converges to the limit current
        let phi = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.4, &[1, 2]).unwrap();
        let values: Vec<f64> = seq.iter().map(|t| t.evaluate(&phi, &q).unwrap()).collect();
        let limit_value = limit.current.evaluate(&phi, &q).unwrap();
        let mut increments = Vec::new();
        for w in values.windows(2) {
            increments.push((w[1] - w[0]).abs());
        }
        for w in increments.windows(2) {
            assert!(
                w[1] <= w[0] / 1.8,
                "increments not contracting: {increments:?}"
            );
        }
        // geometric extrapolation of the sequence tail
        let k = values.len();
        let ratio = (values[k - 1] - values[k - 2]) / (values[k - 2] - values[k - 3]);
        let extrapolated =
            values[k - 1] + (values[k - 1] - values[k - 2]) * ratio / (1.0 - ratio);
        assert!(
            (extrapolated - limit_value).abs() <= 1e-3 * limit_value.abs(),
            "extrapolated {extrapolated} vs limit {limit_value}"
        );
        // guard rails
        assert!(broken_leaves_sequence(0).is_err());
        assert!(broken_leaves_sequence(21).is_err());
    }

    #[test]
    fn broken_leaves_limit_is_closed() {
        let q = spec();
        let s = broken_leaves_limit().unwrap();
        let boundary = s.current.boundary().unwrap();
        for idx in [[1usize], [2usize], [3usize]] {
            let psi = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.4, &idx).unwrap();
            let got = boundary.evaluate(&psi, &q).unwrap();
            assert!(got.abs() <= 1e-7, "residual {got:e} on {idx:?}");
        }
    }
}
