//! Deterministic quadrature: composite tensor-product Gauss-Legendre
//! over boxes, Grundmann-Moller rules over simplices, and an
//! epsilon-ladder with linear Richardson extrapolation for punctured
//! regions.
//!
//! Determinism contract: cells are summed in lexicographic order with
//! compensated (Kahan) addition. Cells may be *evaluated* in parallel,
//! but the reduction order is fixed, so results are independent of the
//! thread count.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::exterior::{index_minor, DifferentialForm, MultiIndex};
use crate::geometry::{Chain, Puncture, QuadratureSpec, Region, Simplex};

/// Straddling cells are bisected along the punctured axes up to this
/// depth before the integrand is zeroed inside the tube.
const MAX_PUNCTURE_DEPTH: usize = 4;

/// Max bisection levels when refining large simplices.
const MAX_CHAIN_SUBDIV: u32 = 6;

/// Compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on
/// the Legendre recurrence. Exact for polynomials of degree 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 1..=m {
        let mut z = if 2 * i == n + 1 {
            0.0
        } else {
            (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos()
        };
        if z != 0.0 {
            for _ in 0..64 {
                let (p, dp) = legendre_with_derivative(n, z);
                let step = p / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i - 1] = -z;
        nodes[n - i] = z;
        weights[i - 1] = w;
        weights[n - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = if x.abs() < 1.0 {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    } else {
        // endpoints never arise for interior Gauss nodes
        0.0
    };
    (p1, dp)
}

/// Grundmann-Moller rule on the standard p-simplex
/// `{ l : l_i >= 0, sum l_i <= 1 }`, exact for polynomials of degree
/// `2s + 1`. Weights integrate against the plain Lebesgue measure, so
/// the rule applied to `f = 1` returns `1/p!`.
pub fn grundmann_moller(p: usize, s: usize) -> Vec<(Vec<f64>, f64)> {
    assert!(p >= 1);
    let d = 2 * s + 1;
    let mut rule = Vec::new();
    for i in 0..=s {
        let denom = (d + p - 2 * i) as f64;
        let mut w = 0.25f64.powi(s as i32) * denom.powi(d as i32)
            / (factorial(i) * factorial(d + p - i));
        if i % 2 == 1 {
            w = -w;
        }
        // k runs over all p+1 barycentric slots; slot 0 is implied by
        // the rest, so only k[1..] enters the Cartesian node
        for k in compositions(s - i, p + 1) {
            let node: Vec<f64> = k[1..]
                .iter()
                .map(|&kj| (2 * kj + 1) as f64 / denom)
                .collect();
            rule.push((node, w));
        }
    }
    rule
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All vectors of `len` non-negative integers summing to `total`,
/// in lexicographic order.
fn compositions(total: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; len];
    fn rec(slot: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot + 1 == cur.len() {
            cur[slot] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[slot] = v;
            rec(slot + 1, left - v, cur, out);
        }
    }
    rec(0, total, &mut cur, &mut out);
    out
}

// --- region integration ------------------------------------------------------

struct CellRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Integrates an n-form over a region. Punctured regions run the
/// epsilon ladder and return the linear-model extrapolation of the last
/// two rungs.
pub fn integrate_region(
    form: &DifferentialForm,
    region: &Region,
    spec: &QuadratureSpec,
) -> Result<f64> {
    Ok(integrate_region_ladder(form, region, spec)?.1)
}

/// As [`integrate_region`], also returning the raw ladder (one value per
/// epsilon rung; a single entry when no puncture is active).
pub fn integrate_region_ladder(
    form: &DifferentialForm,
    region: &Region,
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, f64)> {
    let n = region.dim();
    if form.dim() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: form.dim(),
        });
    }
    if form.degree() != n {
        return Err(CoreError::DegreeMismatch {
            context: "region integration",
            expected: n,
            got: form.degree(),
        });
    }
    let top = MultiIndex::all(n, n).pop().expect("volume index");
    let coeff = match form.coeff(&top) {
        None => return Ok((vec![0.0], 0.0)),
        Some(c) => c.clone(),
    };
    let rule = {
        let (nodes, weights) = gauss_legendre(spec.gauss_order);
        CellRule { nodes, weights }
    };

    let ladder_active = !region.punctures().is_empty()
        && !spec.epsilon_ladder.is_empty()
        && region.punctures().iter().any(|p| {
            let (dmin, _) = p.distance_range(region.base_box());
            dmin < spec.epsilon_ladder[0]
        });

    if !ladder_active {
        // No tube can exclude anything: a single pass suffices. Any stored
        // puncture radii are still honoured.
        let punctures: Vec<Puncture> = region.punctures().to_vec();
        let v = integrate_once(&coeff, region, &punctures, &rule, spec.cells_per_axis)?;
        return Ok((vec![v], v));
    }

    let mut ladder = Vec::with_capacity(spec.epsilon_ladder.len());
    for &eps in &spec.epsilon_ladder {
        let scaled = region.with_puncture_radius(eps);
        let v = integrate_once(
            &coeff,
            &scaled,
            &scaled.punctures().to_vec(),
            &rule,
            spec.cells_per_axis,
        )?;
        ladder.push(v);
    }
    let extrapolated = richardson_linear(&spec.epsilon_ladder, &ladder);
    Ok((ladder, extrapolated))
}

/// Linear-model extrapolation `value(eps) = a + b*eps` from the last
/// two rungs.
pub(crate) fn richardson_linear(eps: &[f64], values: &[f64]) -> f64 {
    let k = values.len();
    if k == 1 {
        return values[0];
    }
    let (e0, e1) = (eps[k - 2], eps[k - 1]);
    let (v0, v1) = (values[k - 2], values[k - 1]);
    (v1 * e0 - v0 * e1) / (e0 - e1)
}

fn integrate_once(
    coeff: &crate::symexpr::ScalarExpr,
    region: &Region,
    punctures: &[Puncture],
    rule: &CellRule,
    cells_per_axis: usize,
) -> Result<f64> {
    let n = region.dim();
    let base = region.base_box();
    let total_cells = cells_per_axis.pow(n as u32);

    let cell_values: Vec<f64> = (0..total_cells)
        .into_par_iter()
        .map(|linear| -> Result<f64> {
            let mut cell = Vec::with_capacity(n);
            let mut rem = linear;
            for axis in 0..n {
                let idx = rem % cells_per_axis;
                rem /= cells_per_axis;
                let (lo, hi) = base[axis];
                let h = (hi - lo) / cells_per_axis as f64;
                cell.push((lo + idx as f64 * h, lo + (idx + 1) as f64 * h));
            }
            // clip trims, possibly to nothing
            for clip in region.clips() {
                let (lo, hi) = cell[clip.axis];
                let (lo, hi) = if clip.keep_above {
                    (lo.max(clip.threshold), hi)
                } else {
                    (lo, hi.min(clip.threshold))
                };
                if !(lo < hi) {
                    return Ok(0.0);
                }
                cell[clip.axis] = (lo, hi);
            }
            integrate_cell(coeff, &cell, punctures, rule, 0)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut acc = Kahan::default();
    for v in cell_values {
        acc.add(v);
    }
    Ok(acc.total())
}

fn integrate_cell(
    coeff: &crate::symexpr::ScalarExpr,
    cell: &[(f64, f64)],
    punctures: &[Puncture],
    rule: &CellRule,
    depth: usize,
) -> Result<f64> {
    let mut straddling: Vec<&Puncture> = Vec::new();
    for p in punctures {
        let (dmin, dmax) = p.distance_range(cell);
        if dmax <= p.radius {
            return Ok(0.0); // fully inside the exclusion tube
        }
        if dmin < p.radius {
            straddling.push(p);
        }
    }

    if !straddling.is_empty() && depth < MAX_PUNCTURE_DEPTH {
        // bisect along the axes the tubes actually constrain
        let mut axes: Vec<usize> = straddling
            .iter()
            .flat_map(|p| p.fixed.iter().map(|&(a, _)| a))
            .collect();
        axes.sort_unstable();
        axes.dedup();
        let mut acc = Kahan::default();
        let parts = 1usize << axes.len();
        for part in 0..parts {
            let mut child = cell.to_vec();
            for (bit, &axis) in axes.iter().enumerate() {
                let (lo, hi) = child[axis];
                let mid = 0.5 * (lo + hi);
                child[axis] = if part & (1 << bit) == 0 {
                    (lo, mid)
                } else {
                    (mid, hi)
                };
            }
            acc.add(integrate_cell(coeff, &child, punctures, rule, depth + 1)?);
        }
        return Ok(acc.total());
    }

    // plain tensor Gauss-Legendre; at max depth the integrand is zeroed
    // inside any remaining tube overlap
    let n = cell.len();
    let g = rule.nodes.len();
    let mut point = vec![0.0; n];
    let mut jac = 1.0;
    for &(lo, hi) in cell {
        jac *= 0.5 * (hi - lo);
    }
    let mut acc = Kahan::default();
    let total_nodes = g.pow(n as u32);
    for linear in 0..total_nodes {
        let mut rem = linear;
        let mut wprod = jac;
        for axis in 0..n {
            let k = rem % g;
            rem /= g;
            let (lo, hi) = cell[axis];
            point[axis] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * rule.nodes[k];
            wprod *= rule.weights[k];
        }
        if !straddling.is_empty() && straddling.iter().any(|p| p.distance(&point) < p.radius) {
            continue;
        }
        let v = coeff.eval(&point).map_err(CoreError::Eval)?;
        acc.add(wprod * v);
    }
    Ok(acc.total())
}

// --- chain integration --------------------------------------------------------

/// Integrates a degree-p form over a p-chain by pulling it back through
/// each simplex's affine parameterization.
pub fn integrate_chain(
    form: &DifferentialForm,
    chain: &Chain,
    spec: &QuadratureSpec,
) -> Result<f64> {
    integrate_chain_hinted(form, chain, spec, None)
}

/// As [`integrate_chain`]; simplices whose bounding box misses
/// `support_hint` are skipped (sound when the form vanishes outside it).
pub fn integrate_chain_hinted(
    form: &DifferentialForm,
    chain: &Chain,
    spec: &QuadratureSpec,
    support_hint: Option<&[(f64, f64)]>,
) -> Result<f64> {
    if chain.is_empty() {
        return Ok(0.0);
    }
    if form.dim() != chain.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: chain.dim(),
            got: form.dim(),
        });
    }
    if form.degree() != chain.degree() {
        return Err(CoreError::DegreeMismatch {
            context: "chain integration",
            expected: chain.degree(),
            got: form.degree(),
        });
    }
    let p = chain.degree();

    if p == 0 {
        // weighted point evaluations
        let empty = MultiIndex::empty();
        let mut acc = Kahan::default();
        if let Some(c) = form.coeff(&empty) {
            for (w, s) in chain.terms() {
                if skip_simplex(s, support_hint) {
                    continue;
                }
                let v = c.eval(&s.vertices()[0]).map_err(CoreError::Eval)?;
                acc.add(w * v);
            }
        }
        return Ok(acc.total());
    }

    let rule_s = spec.gauss_order.saturating_sub(1);
    let rule = grundmann_moller(p, rule_s);
    let target_edge = 2.0 / spec.cells_per_axis as f64;

    let values: Vec<f64> = chain
        .terms()
        .par_iter()
        .map(|(w, s)| -> Result<f64> {
            if skip_simplex(s, support_hint) {
                return Ok(0.0);
            }
            let levels = subdivision_levels(s.max_edge_length(), target_edge, p);
            let mut acc = Kahan::default();
            for child in subdivide(s, levels) {
                if skip_simplex(&child, support_hint) {
                    continue;
                }
                acc.add(integrate_simplex(form, &child, &rule)?);
            }
            Ok(w * acc.total())
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut acc = Kahan::default();
    for v in values {
        acc.add(v);
    }
    Ok(acc.total())
}

fn skip_simplex(s: &Simplex, hint: Option<&[(f64, f64)]>) -> bool {
    let Some(hint) = hint else { return false };
    let bbox = s.bbox();
    bbox.iter()
        .zip(hint.iter())
        .any(|(&(lo, hi), &(a, b))| hi < a || lo > b)
}

fn subdivision_levels(max_edge: f64, target: f64, p: usize) -> u32 {
    if p > 3 || max_edge <= target {
        return 0;
    }
    let ratio = max_edge / target;
    (ratio.log2().ceil() as u32).min(MAX_CHAIN_SUBDIV)
}

fn integrate_simplex(
    form: &DifferentialForm,
    s: &Simplex,
    rule: &[(Vec<f64>, f64)],
) -> Result<f64> {
    let v0 = &s.vertices()[0];
    let edges: Vec<Vec<f64>> = s.vertices()[1..]
        .iter()
        .map(|v| v.iter().zip(v0.iter()).map(|(a, b)| a - b).collect())
        .collect();
    // oriented minors are constant over the simplex
    let minors: Vec<(&crate::symexpr::ScalarExpr, f64)> = form
        .coeffs()
        .map(|(idx, c)| (c, index_minor(idx.indices(), &edges)))
        .collect();
    if minors.iter().all(|&(_, m)| m == 0.0) {
        return Ok(0.0);
    }
    let mut acc = Kahan::default();
    let mut x = vec![0.0; v0.len()];
    for (lambda, w) in rule {
        for (axis, xv) in x.iter_mut().enumerate() {
            let mut v = v0[axis];
            for (b, l) in lambda.iter().enumerate() {
                v += l * edges[b][axis];
            }
            *xv = v;
        }
        let mut integrand = 0.0;
        for (c, m) in &minors {
            if *m != 0.0 {
                integrand += c.eval(&x).map_err(CoreError::Eval)? * m;
            }
        }
        acc.add(w * integrand);
    }
    Ok(acc.total())
}

// --- simplex refinement --------------------------------------------------------

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Uniform refinement by edge bisection: segments split in two,
/// triangles in four, tetrahedra in eight (corner cells plus the inner
/// octahedron cut along a fixed diagonal). All children inherit the
/// parent's orientation.
pub(crate) fn subdivide(s: &Simplex, levels: u32) -> Vec<Simplex> {
    let mut current = vec![s.clone()];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(current.len() * 8);
        for t in &current {
            split_once(t, &mut next);
        }
        current = next;
    }
    current
}

fn split_once(s: &Simplex, out: &mut Vec<Simplex>) {
    let v = s.vertices();
    match s.degree() {
        1 => {
            let m = midpoint(&v[0], &v[1]);
            out.push(Simplex::new(vec![v[0].clone(), m.clone()]).unwrap());
            out.push(Simplex::new(vec![m, v[1].clone()]).unwrap());
        }
        2 => {
            let m01 = midpoint(&v[0], &v[1]);
            let m02 = midpoint(&v[0], &v[2]);
            let m12 = midpoint(&v[1], &v[2]);
            out.push(Simplex::new(vec![v[0].clone(), m01.clone(), m02.clone()]).unwrap());
            out.push(Simplex::new(vec![m01.clone(), v[1].clone(), m12.clone()]).unwrap());
            out.push(Simplex::new(vec![m02.clone(), m12.clone(), v[2].clone()]).unwrap());
            out.push(Simplex::new(vec![m01, m12, m02]).unwrap());
        }
        3 => {
            let m01 = midpoint(&v[0], &v[1]);
            let m02 = midpoint(&v[0], &v[2]);
            let m03 = midpoint(&v[0], &v[3]);
            let m12 = midpoint(&v[1], &v[2]);
            let m13 = midpoint(&v[1], &v[3]);
            let m23 = midpoint(&v[2], &v[3]);
            let mk = |a: &Vec<f64>, b: &Vec<f64>, c: &Vec<f64>, d: &Vec<f64>| {
                Simplex::new(vec![a.clone(), b.clone(), c.clone(), d.clone()]).unwrap()
            };
            // corner cells
            out.push(mk(&v[0], &m01, &m02, &m03));
            out.push(mk(&m01, &v[1], &m12, &m13));
            out.push(mk(&m02, &m12, &v[2], &m23));
            out.push(mk(&m03, &m13, &m23, &v[3]));
            // octahedron cut along the m02-m13 diagonal
            out.push(mk(&m02, &m13, &m03, &m01));
            out.push(mk(&m02, &m13, &m23, &m03));
            out.push(mk(&m02, &m13, &m12, &m23));
            out.push(mk(&m02, &m13, &m01, &m12));
        }
        _ => out.push(s.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::ScalarExpr;

    fn expr(text: &str, dim: usize) -> ScalarExpr {
        ScalarExpr::parse(text, dim).unwrap()
    }

    fn volume_form(dim: usize, coeff: &str) -> DifferentialForm {
        let idx: Vec<usize> = (1..=dim).collect();
        DifferentialForm::zero(dim, dim)
            .with_coeff(&idx, expr(coeff, dim))
            .unwrap()
    }

    #[test]
    fn gauss_legendre_is_degree_exact() {
        // order g integrates degree <= 2g-1 exactly
        for g in 1..=12usize {
            let (nodes, weights) = gauss_legendre(g);
            for deg in 0..=(2 * g - 1) {
                let quad: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| w * x.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 0 {
                    2.0 / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                assert!(
                    (quad - exact).abs() <= 1e-12,
                    "g={g} deg={deg}: {quad} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn grundmann_moller_matches_monomial_integrals() {
        // exact value of ∫_{T_p} prod x_i^{a_i} = prod(a_i!) / (p + sum a_i)!
        for p in 1..=3usize {
            for s in 0..=4usize {
                let rule = grundmann_moller(p, s);
                let degree_cap = 2 * s + 1;
                let mut exps = vec![0usize; p];
                loop {
                    let total: usize = exps.iter().sum();
                    if total <= degree_cap {
                        let quad: f64 = rule
                            .iter()
                            .map(|(node, w)| {
                                w * node
                                    .iter()
                                    .zip(&exps)
                                    .map(|(&x, &a)| x.powi(a as i32))
                                    .product::<f64>()
                            })
                            .sum();
                        let exact = exps.iter().map(|&a| factorial(a)).product::<f64>()
                            / factorial(p + total);
                        assert!(
                            (quad - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                            "p={p} s={s} exps={exps:?}: {quad} vs {exact}"
                        );
                    }
                    // next exponent tuple, capped per-axis at degree_cap
                    let mut carry = true;
                    for e in exps.iter_mut() {
                        if carry {
                            *e += 1;
                            if *e > degree_cap {
                                *e = 0;
                            } else {
                                carry = false;
                            }
                        }
                    }
                    if carry {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn box_integration_basics() {
        let spec = QuadratureSpec::new(4, 6, vec![]).unwrap();
        let region = Region::bounding_box(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]).unwrap();
        let one = volume_form(3, "1");
        let v = integrate_region(&one, &region, &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
        let xyz = volume_form(3, "x*y*z");
        let v = integrate_region(&xyz, &region, &spec).unwrap();
        assert!((v - 0.125).abs() < 1e-13, "got {v}");
    }

    #[test]
    fn clipped_cells_cut_exactly() {
        let spec = QuadratureSpec::new(3, 8, vec![]).unwrap();
        // clip plane at an irrational spot inside a cell
        let region = Region::bounding_box(&[(0.0, 1.0), (0.0, 1.0)])
            .unwrap()
            .clip_ge(1, 0.123456789)
            .unwrap();
        let form = volume_form(2, "x");
        let v = integrate_region(&form, &region, &spec).unwrap();
        let a: f64 = 0.123456789;
        let exact = 0.5 * (1.0 - a * a);
        assert!((v - exact).abs() < 1e-14, "{v} vs {exact}");
    }

    #[test]
    fn empty_clip_returns_zero() {
        let spec = QuadratureSpec::new(3, 4, vec![]).unwrap();
        let region = Region::bounding_box(&[(0.0, 1.0)])
            .unwrap()
            .clip_ge(1, 2.0)
            .unwrap();
        let form = volume_form(1, "1");
        assert_eq!(integrate_region(&form, &region, &spec).unwrap(), 0.0);
    }

    #[test]
    fn puncture_ladder_converges_for_inverse_distance() {
        // integrand ~ C/rho: ladder error is O(eps), so the linear model
        // extrapolates cleanly
        let ladder = QuadratureSpec::halving_ladder(0.25, 6);
        let spec = QuadratureSpec::new(48, 8, ladder.clone()).unwrap();
        let region = Region::cube(2, 1.0).puncture(&[(1, 0.0), (2, 0.0)], 0.25).unwrap();
        let form = volume_form(2, "bump(0.8; x, y)/sqrt(x^2 + y^2)");
        let (raw, extrapolated) = integrate_region_ladder(&form, &region, &spec).unwrap();
        assert_eq!(raw.len(), 6);
        // successive extrapolations agree to 1e-4 relative
        let prev = richardson_linear(&ladder[..5], &raw[..5]);
        assert!(
            (extrapolated - prev).abs() <= 1e-4 * extrapolated.abs(),
            "{extrapolated} vs {prev}"
        );
        // oracle: 2*pi * ∫_0^0.8 bump(0.8; r) dr by fine 1-D quadrature
        let bump = expr("bump(0.8; x)", 1);
        let (nodes, weights) = gauss_legendre(40);
        let mut oracle = 0.0;
        for (&t, &w) in nodes.iter().zip(&weights) {
            let r = 0.4 + 0.4 * t;
            oracle += 0.4 * w * bump.eval(&[r]).unwrap();
        }
        oracle *= 2.0 * std::f64::consts::PI;
        assert!(
            (extrapolated - oracle).abs() <= 2e-4 * oracle.abs(),
            "{extrapolated} vs oracle {oracle}"
        );
    }

    #[test]
    fn chain_integration_area_and_orientation() {
        let spec = QuadratureSpec::new(8, 4, vec![]).unwrap();
        let dxdy = DifferentialForm::basis(2, &[1, 2]).unwrap();
        let tri = Simplex::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = Chain::new(vec![(1.0, tri)]).unwrap();
        let v = integrate_chain(&dxdy, &c, &spec).unwrap();
        assert!((v - 0.5).abs() < 1e-13, "area {v}");

        let flipped = Simplex::new(vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let c = Chain::new(vec![(1.0, flipped)]).unwrap();
        let v = integrate_chain(&dxdy, &c, &spec).unwrap();
        assert!((v + 0.5).abs() < 1e-13, "flipped area {v}");
    }

    #[test]
    fn greens_theorem_on_unit_square_boundary() {
        // ∮ x dy around the CCW unit square = enclosed area = 1
        let spec = QuadratureSpec::new(8, 6, vec![]).unwrap();
        let form = DifferentialForm::zero(2, 1)
            .with_coeff(&[2], expr("x", 2))
            .unwrap();
        let corners = [
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let mut terms = Vec::new();
        for i in 0..4 {
            let a = corners[i].clone();
            let b = corners[(i + 1) % 4].clone();
            terms.push((1.0, Simplex::new(vec![a, b]).unwrap()));
        }
        let c = Chain::new(terms).unwrap();
        let v = integrate_chain(&form, &c, &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "circulation {v}");
    }

    #[test]
    fn subdivision_is_an_oriented_partition() {
        // children tile the parent and keep its orientation: the integral
        // of a smooth form is unchanged, and signed volumes add up
        let tet = Simplex::new(vec![
            vec![0.1, 0.0, 0.2],
            vec![1.3, 0.1, 0.0],
            vec![0.2, 1.1, 0.3],
            vec![-0.1, 0.2, 0.9],
        ])
        .unwrap();
        let parent_vol = signed_volume(&tet);
        let children = subdivide(&tet, 2);
        assert_eq!(children.len(), 64);
        let mut total = 0.0;
        for c in &children {
            let v = signed_volume(c);
            assert!(
                v * parent_vol > 0.0,
                "child volume {v} flips against parent {parent_vol}"
            );
            total += v;
        }
        assert!((total - parent_vol).abs() < 1e-12 * parent_vol.abs());

        fn signed_volume(s: &Simplex) -> f64 {
            let v = s.vertices();
            let e: Vec<Vec<f64>> = (1..4)
                .map(|i| v[i].iter().zip(&v[0]).map(|(a, b)| a - b).collect())
                .collect();
            index_minor(&[0, 1, 2], &e) / 6.0
        }
    }

    #[test]
    fn chain_stokes_against_region_side() {
        // ∫_s dφ = ∫_{∂s} φ for a triangle and a smooth 1-form
        let spec = QuadratureSpec::new(16, 6, vec![]).unwrap();
        let phi = DifferentialForm::zero(2, 1)
            .with_coeff(&[1], expr("x^2*y", 2))
            .unwrap()
            .with_coeff(&[2], expr("sin(x) + y^3", 2))
            .unwrap();
        let tri = Simplex::new(vec![vec![0.1, 0.2], vec![0.9, 0.3], vec![0.4, 0.8]]).unwrap();
        let c = Chain::new(vec![(1.0, tri)]).unwrap();
        let lhs = integrate_chain(&phi.d(), &c, &spec).unwrap();
        let rhs = integrate_chain(&phi, &c.boundary().unwrap(), &spec).unwrap();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn determinism_across_thread_pools() {
        let spec = QuadratureSpec::new(12, 6, QuadratureSpec::halving_ladder(0.25, 5)).unwrap();
        let region = Region::cube(2, 1.0).puncture(&[(1, 0.0), (2, 0.0)], 0.25).unwrap();
        let form = volume_form(2, "bump(0.9; x, y)/sqrt(x^2 + y^2 + 0.001)");
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| integrate_region(&form, &region, &spec).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
