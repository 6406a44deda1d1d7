//! Defect analysis: probe-sweep closedness scans, dislocation-line
//! localization with strength estimates, and weak Frobenius checks.
//!
//! All verdicts use the mass-normalized residual `|T[φ]| / ‖φ‖₁`: a
//! genuine concentrated boundary shows up at order `1/r`, quadrature
//! noise sits many decades below the `1e-6` threshold.

use rayon::prelude::*;
use serde::Serialize;

use crate::currents::{Current, TestForm};
use crate::defaults::Defaults;
use crate::error::{CoreError, Result};
use crate::exterior::{halton_points, DifferentialForm, MultiIndex};
use crate::geometry::QuadratureSpec;
use crate::symexpr::ScalarExpr;

/// Deterministic grid of bump probes over a region: one probe per
/// (center, increasing multi-index of the target degree).
#[derive(Debug, Clone)]
pub struct ProbeFamily {
    region: Vec<(f64, f64)>,
    degree: usize,
    radius: f64,
    pitch: f64,
    probes: Vec<Probe>,
    /// Shared L1 mass of the bump coefficient (probes are translates).
    mass: f64,
}

#[derive(Debug, Clone)]
pub struct Probe {
    pub center: Vec<f64>,
    pub index: MultiIndex,
    pub form: TestForm,
}

impl ProbeFamily {
    /// Probes of the given degree on a symmetric grid with spacing
    /// `pitch`, keeping only centers whose support ball stays strictly
    /// inside `region`.
    pub fn grid(region: &[(f64, f64)], degree: usize, pitch: f64, radius: f64) -> Result<Self> {
        let dim = region.len();
        if degree > dim {
            return Err(CoreError::DegreeMismatch {
                context: "probe family",
                expected: dim,
                got: degree,
            });
        }
        if !(pitch > 0.0) || !(radius > 0.0) {
            return Err(CoreError::Invalid(
                "probe pitch and radius must be positive".into(),
            ));
        }
        let mut axis_centers: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for &(lo, hi) in region {
            let mid = 0.5 * (lo + hi);
            let max_offset = 0.5 * (hi - lo) - radius - 1e-9;
            if max_offset < 0.0 {
                return Err(CoreError::Invalid(format!(
                    "probe radius {radius} does not fit inside [{lo}, {hi}]"
                )));
            }
            let k = (max_offset / pitch).floor() as i64;
            axis_centers.push((-k..=k).map(|j| mid + j as f64 * pitch).collect());
        }
        let indices = MultiIndex::all(dim, degree);
        let mut probes = Vec::new();
        let mut counters = vec![0usize; dim];
        'outer: loop {
            let center: Vec<f64> = counters
                .iter()
                .enumerate()
                .map(|(axis, &i)| axis_centers[axis][i])
                .collect();
            for index in &indices {
                let one_based: Vec<usize> = index.indices().iter().map(|&i| i + 1).collect();
                let form = TestForm::bump_probe(&center, radius, &one_based)?;
                probes.push(Probe {
                    center: center.clone(),
                    index: index.clone(),
                    form,
                });
            }
            // odometer over centers, last axis fastest
            let mut axis = dim;
            while axis > 0 {
                axis -= 1;
                counters[axis] += 1;
                if counters[axis] < axis_centers[axis].len() {
                    continue 'outer;
                }
                counters[axis] = 0;
            }
            break;
        }
        if probes.is_empty() {
            return Err(CoreError::Invalid("probe family is empty".into()));
        }
        let mass = probes[0].form.l1_mass()?;
        Ok(ProbeFamily {
            region: region.to_vec(),
            degree,
            radius,
            pitch,
            probes,
            mass,
        })
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn region(&self) -> &[(f64, f64)] {
        &self.region
    }

    /// Shared probe scale: the L1 mass of the bump coefficient.
    pub fn probe_mass(&self) -> f64 {
        self.mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Closed,
    Defective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrobeniusVerdict {
    Strong,
    WeakIntegrable,
    NonIntegrable,
}

/// One row of a probe sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeSample {
    pub center: Vec<f64>,
    pub index: String,
    pub value: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineFit {
    pub polyline: Vec<Vec<f64>>,
    pub stations: Vec<StationStrength>,
    pub mean_strength: f64,
    pub constant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationStrength {
    pub center: Vec<f64>,
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrobeniusReport {
    pub verdict: FrobeniusVerdict,
    /// max normalized |∂T[ψ] − (β⌟T)[ψ]| over the probes
    pub max_residual: f64,
    /// max normalized |∂T[ψ]| (the closedness side of the same sweep)
    pub closedness_residual: f64,
    /// sampled max |dβ| coefficient (0 when β is closed)
    pub beta_closed_residual: f64,
    pub threshold: f64,
}

/// Probe-sweep verdicts for one current.
#[derive(Debug, Clone, Serialize)]
pub struct DefectReport {
    pub verdict: Verdict,
    /// Largest mass-normalized |∂T[φ]| seen.
    pub max_residual: f64,
    pub threshold: f64,
    /// Probes above threshold (the support estimate is the union of
    /// their radius-balls).
    pub localization: Vec<ProbeSample>,
    pub support_ball_radius: f64,
    /// Full sweep, in probe order.
    pub sweep: Vec<ProbeSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_fit: Option<LineFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frobenius: Option<FrobeniusReport>,
}

/// Evaluates `∂T` on every probe and decides closedness.
pub fn closedness_scan(
    current: &Current,
    probes: &ProbeFamily,
    spec: &QuadratureSpec,
) -> Result<DefectReport> {
    if current.degree() == 0 || probes.degree() != current.degree() - 1 {
        return Err(CoreError::DegreeMismatch {
            context: "closedness scan probes",
            expected: current.degree().saturating_sub(1),
            got: probes.degree(),
        });
    }
    let boundary = current.boundary()?;
    let sweep = sweep_current(&boundary, probes, spec)?;
    Ok(assemble_report(sweep, probes))
}

fn sweep_current(
    functional: &Current,
    probes: &ProbeFamily,
    spec: &QuadratureSpec,
) -> Result<Vec<ProbeSample>> {
    let mass = probes.probe_mass();
    probes
        .probes()
        .par_iter()
        .map(|p| -> Result<ProbeSample> {
            let value = functional.evaluate(&p.form, spec)?;
            Ok(ProbeSample {
                center: p.center.clone(),
                index: p.index.to_string(),
                value,
                normalized: value.abs() / mass,
            })
        })
        .collect()
}

fn assemble_report(sweep: Vec<ProbeSample>, probes: &ProbeFamily) -> DefectReport {
    let threshold = Defaults::get().closedness_threshold;
    let max_residual = sweep.iter().fold(0.0f64, |m, s| m.max(s.normalized));
    let localization: Vec<ProbeSample> = sweep
        .iter()
        .filter(|s| s.normalized > threshold)
        .cloned()
        .collect();
    DefectReport {
        verdict: if max_residual <= threshold {
            Verdict::Closed
        } else {
            Verdict::Defective
        },
        max_residual,
        threshold,
        localization,
        support_ball_radius: probes.radius(),
        sweep,
        line_fit: None,
        frobenius: None,
    }
}

/// Chains flagged probe centers into a polyline by nearest-neighbour
/// hops (within twice the grid pitch).
pub fn chain_centers(centers: &[Vec<f64>], pitch: f64) -> Vec<Vec<f64>> {
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for c in centers {
        if !unique.contains(c) {
            unique.push(c.clone());
        }
    }
    if unique.is_empty() {
        return unique;
    }
    unique.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut chain = vec![unique.remove(0)];
    while !unique.is_empty() {
        let last = chain.last().unwrap();
        let (best, dist) = unique
            .iter()
            .enumerate()
            .map(|(i, c)| (i, euclid(last, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if dist > 2.0 * pitch + 1e-12 {
            break;
        }
        chain.push(unique.remove(best));
    }
    chain
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Estimates the line strength `u` at stations along a polyline:
/// `u(c_j) ≈ ∂T[α_j] / T_L[α_j]` with `α_j` a bump-modulated tangent
/// covector at station `c_j`.
pub fn line_strength_fit(
    current: &Current,
    polyline: &[Vec<f64>],
    stations: usize,
    radius: f64,
    spec: &QuadratureSpec,
) -> Result<LineFit> {
    if polyline.len() < 2 {
        return Err(CoreError::Invalid(
            "line fit needs a polyline with at least two points".into(),
        ));
    }
    if stations == 0 {
        return Err(CoreError::Invalid("need at least one station".into()));
    }
    let defaults = Defaults::get();
    let boundary = current.boundary()?;
    let line_current = polyline_current(polyline, None)?;

    let station_points = stations_along(polyline, stations, 2.0 * radius);
    let mut fits = Vec::with_capacity(station_points.len());
    for (center, tangent) in &station_points {
        let probe = tangent_probe(center, tangent, radius)?;
        let numerator = boundary.evaluate(&probe, spec)?;
        let denominator = line_current.evaluate(&probe, spec)?;
        if denominator.abs() < defaults.denominator_floor {
            return Err(CoreError::Invalid(format!(
                "line-fit probe at {center:?} misses the line (denominator {denominator:e})"
            )));
        }
        fits.push(StationStrength {
            center: center.clone(),
            strength: numerator / denominator,
        });
    }
    let mean = fits.iter().map(|s| s.strength).sum::<f64>() / fits.len() as f64;
    let spread = fits
        .iter()
        .map(|s| (s.strength - mean).abs())
        .fold(0.0f64, f64::max);
    Ok(LineFit {
        polyline: polyline.to_vec(),
        stations: fits,
        mean_strength: mean,
        constant: spread <= Defaults::get().strength_constancy_tol * mean.abs().max(1.0),
    })
}

/// The current `T_L` (degree 1) of a polyline, optionally weighted.
pub fn polyline_current(polyline: &[Vec<f64>], weight: Option<ScalarExpr>) -> Result<Current> {
    let mut terms = Vec::with_capacity(polyline.len().saturating_sub(1));
    for pair in polyline.windows(2) {
        terms.push((
            1.0,
            crate::geometry::Simplex::new(vec![pair[0].clone(), pair[1].clone()])?,
        ));
    }
    Current::from_chain(crate::geometry::Chain::new(terms)?, weight)
}

fn stations_along(polyline: &[Vec<f64>], count: usize, margin: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    // cumulative arc length
    let mut lengths = vec![0.0];
    for pair in polyline.windows(2) {
        let l = euclid(&pair[0], &pair[1]);
        lengths.push(lengths.last().unwrap() + l);
    }
    let total = *lengths.last().unwrap();
    let lo = margin.min(total / 2.0);
    let hi = (total - margin).max(total / 2.0);
    (0..count)
        .map(|j| {
            let t = if count == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * j as f64 / (count - 1) as f64
            };
            let seg = lengths
                .windows(2)
                .position(|w| t <= w[1])
                .unwrap_or(polyline.len() - 2);
            let seg_len = (lengths[seg + 1] - lengths[seg]).max(1e-300);
            let local = (t - lengths[seg]) / seg_len;
            let a = &polyline[seg];
            let b = &polyline[seg + 1];
            let center: Vec<f64> = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| x + local * (y - x))
                .collect();
            let tangent: Vec<f64> = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (y - x) / seg_len)
                .collect();
            (center, tangent)
        })
        .collect()
}

fn tangent_probe(center: &[f64], tangent: &[f64], radius: f64) -> Result<TestForm> {
    let dim = center.len();
    let bump = ScalarExpr::bump_at(radius, center);
    let mut form = DifferentialForm::zero(dim, 1);
    for (i, &t) in tangent.iter().enumerate() {
        if t != 0.0 {
            form = form.with_coeff(&[i + 1], bump.scale(t))?;
        }
    }
    TestForm::new(
        form,
        center.iter().map(|&c| (c - radius, c + radius)).collect(),
    )
}

/// Verifies `∂T = β⌟T` on the probe family (the weak Frobenius
/// condition; `β⌟T` uses the contraction sign convention).
pub fn weak_frobenius_check(
    current: &Current,
    beta: &DifferentialForm,
    probes: &ProbeFamily,
    spec: &QuadratureSpec,
) -> Result<FrobeniusReport> {
    if beta.degree() != 1 {
        return Err(CoreError::DegreeMismatch {
            context: "weak Frobenius multiplier",
            expected: 1,
            got: beta.degree(),
        });
    }
    if current.degree() == 0 || probes.degree() != current.degree() - 1 {
        return Err(CoreError::DegreeMismatch {
            context: "weak Frobenius probes",
            expected: current.degree().saturating_sub(1),
            got: probes.degree(),
        });
    }
    let threshold = Defaults::get().closedness_threshold;
    let boundary = current.boundary()?;
    let contracted = current.contract(beta)?;
    let mass = probes.probe_mass();

    let rows: Vec<(f64, f64)> = probes
        .probes()
        .par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let lhs = boundary.evaluate(&p.form, spec)?;
            let rhs = contracted.evaluate(&p.form, spec)?;
            Ok(((lhs - rhs).abs() / mass, lhs.abs() / mass))
        })
        .collect::<Result<_>>()?;

    let max_residual = rows.iter().fold(0.0f64, |m, r| m.max(r.0));
    let closedness_residual = rows.iter().fold(0.0f64, |m, r| m.max(r.1));

    // optional stronger flag: is β itself closed? (sampled)
    let defaults = Defaults::get();
    let beta_closed_residual = beta
        .d()
        .max_abs_on_sample(probes.region(), defaults.zero_sample_count)?;

    let verdict = if closedness_residual <= threshold {
        FrobeniusVerdict::Strong
    } else if max_residual <= threshold {
        FrobeniusVerdict::WeakIntegrable
    } else {
        FrobeniusVerdict::NonIntegrable
    };
    Ok(FrobeniusReport {
        verdict,
        max_residual,
        closedness_residual,
        beta_closed_residual,
        threshold,
    })
}

/// One pointwise solve outcome of `β∧ω = dω`.
#[derive(Debug, Clone, Serialize)]
pub struct BetaSample {
    pub point: Vec<f64>,
    /// Solved covector components; `None` when `ω∧dω ≠ 0` at the point.
    pub beta: Option<Vec<f64>>,
    pub residual: f64,
}

/// Solves `β∧ω = dω` for a 1-form `ω` at each sample point, returning
/// the minimal-Euclidean-norm representative (the one orthogonal to
/// `ω`), or a failure record where no solution exists.
pub fn solve_beta_pointwise(
    omega: &DifferentialForm,
    points: &[Vec<f64>],
) -> Result<Vec<BetaSample>> {
    if omega.degree() != 1 {
        return Err(CoreError::DegreeMismatch {
            context: "beta solve",
            expected: 1,
            got: omega.degree(),
        });
    }
    let n = omega.dim();
    let domega = omega.d();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let mut w = vec![0.0; n];
        for (idx, c) in omega.coeffs() {
            w[idx.indices()[0]] = c.eval(p).map_err(CoreError::Eval)?;
        }
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        if norm2 == 0.0 {
            return Err(CoreError::Invalid(format!(
                "layering form vanishes at sample point {p:?}"
            )));
        }
        // eta[i][j]: antisymmetric matrix of dω at p
        let mut eta = vec![vec![0.0; n]; n];
        for (idx, c) in domega.coeffs() {
            let (i, j) = (idx.indices()[0], idx.indices()[1]);
            let v = c.eval(p).map_err(CoreError::Eval)?;
            eta[i][j] = v;
            eta[j][i] = -v;
        }
        // minimal representative: β = -(ω♯ ⌟ dω)/|ω|², so β·ω = 0
        let mut beta = vec![0.0; n];
        for (j, b) in beta.iter_mut().enumerate() {
            let contraction: f64 = (0..n).map(|i| w[i] * eta[i][j]).sum();
            *b = -contraction / norm2;
        }
        // residual of β∧ω = dω decides solvability
        let mut residual = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let got = beta[i] * w[j] - beta[j] * w[i];
                residual = residual.max((got - eta[i][j]).abs());
            }
        }
        let scale = norm2.sqrt().max(matrix_scale(&eta)).max(1.0);
        let solvable = residual <= 1e-9 * scale;
        out.push(BetaSample {
            point: p.clone(),
            beta: if solvable { Some(beta) } else { None },
            residual,
        });
    }
    Ok(out)
}

fn matrix_scale(eta: &[Vec<f64>]) -> f64 {
    eta.iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Deterministic low-discrepancy sample points for pointwise solves.
pub fn sample_points(region: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    halton_points(region, count)
}
