//! Integration domains and simplicial chains.
//!
//! Regions are axis-aligned boxes, optionally cut by axis-aligned
//! half-space clips and punctured by epsilon-tubes around axis-aligned
//! affine subspaces (a point in 2D, a coordinate axis in 3D). That is
//! exactly the geometry the worked examples need; anything more general
//! is rejected by construction.

mod quad;

pub use quad::{
    gauss_legendre, grundmann_moller, integrate_chain, integrate_chain_hinted,
    integrate_region, integrate_region_ladder, Kahan,
};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

/// Half-space constraint `x_axis <= threshold` or `x_axis >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clip {
    pub(crate) axis: usize,
    pub(crate) keep_above: bool,
    pub(crate) threshold: f64,
}

/// Remove the epsilon-tube around the affine subspace obtained by
/// fixing the listed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Puncture {
    pub(crate) fixed: Vec<(usize, f64)>,
    pub(crate) radius: f64,
}

impl Puncture {
    /// Distance (in the fixed coordinates) from a point to the subspace.
    pub(crate) fn distance(&self, p: &[f64]) -> f64 {
        self.fixed
            .iter()
            .map(|&(axis, v)| {
                let d = p[axis] - v;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Range of distances over an axis-aligned cell.
    pub(crate) fn distance_range(&self, cell: &[(f64, f64)]) -> (f64, f64) {
        let mut lo2 = 0.0;
        let mut hi2 = 0.0;
        for &(axis, v) in &self.fixed {
            let (a, b) = cell[axis];
            let dlo = if v < a {
                a - v
            } else if v > b {
                v - b
            } else {
                0.0
            };
            let dhi = (v - a).abs().max((b - v).abs());
            lo2 += dlo * dlo;
            hi2 += dhi * dhi;
        }
        (lo2.sqrt(), hi2.sqrt())
    }
}

/// Integration domain: box, clipped by half-spaces, minus puncture tubes.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    base: Vec<(f64, f64)>,
    clips: Vec<Clip>,
    punctures: Vec<Puncture>,
}

impl Region {
    /// Axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
    pub fn bounding_box(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(CoreError::Invalid("region needs at least one axis".into()));
        }
        for &(lo, hi) in bounds {
            if !(lo < hi) {
                return Err(CoreError::Invalid(format!(
                    "degenerate box interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(Region {
            base: bounds.to_vec(),
            clips: Vec::new(),
            punctures: Vec::new(),
        })
    }

    /// The symmetric cube `(-h, h)^dim`.
    pub fn cube(dim: usize, halfwidth: f64) -> Self {
        Region::bounding_box(&vec![(-halfwidth, halfwidth); dim]).unwrap()
    }

    /// Keep `x_axis >= threshold` (axis one-based).
    pub fn clip_ge(mut self, axis: usize, threshold: f64) -> Result<Self> {
        self.check_axis(axis)?;
        self.clips.push(Clip {
            axis: axis - 1,
            keep_above: true,
            threshold,
        });
        Ok(self)
    }

    /// Keep `x_axis <= threshold` (axis one-based).
    pub fn clip_le(mut self, axis: usize, threshold: f64) -> Result<Self> {
        self.check_axis(axis)?;
        self.clips.push(Clip {
            axis: axis - 1,
            keep_above: false,
            threshold,
        });
        Ok(self)
    }

    /// Remove the epsilon-tube around the subspace fixing the one-based
    /// coordinates of `fixed` to the given values.
    pub fn puncture(mut self, fixed: &[(usize, f64)], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(CoreError::Invalid(format!(
                "puncture radius must be positive, got {radius}"
            )));
        }
        if fixed.is_empty() {
            return Err(CoreError::Invalid(
                "puncture must fix at least one coordinate".into(),
            ));
        }
        let mut fixed0 = Vec::with_capacity(fixed.len());
        for &(axis, v) in fixed {
            self.check_axis(axis)?;
            fixed0.push((axis - 1, v));
        }
        self.punctures.push(Puncture {
            fixed: fixed0,
            radius,
        });
        Ok(self)
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis == 0 || axis > self.base.len() {
            return Err(CoreError::Invalid(format!(
                "axis {axis} out of 1..={}",
                self.base.len()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn base_box(&self) -> &[(f64, f64)] {
        &self.base
    }

    pub(crate) fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub(crate) fn punctures(&self) -> &[Puncture] {
        &self.punctures
    }

    /// Shrinks the base box to its intersection with `hint`; returns
    /// `None` when the intersection is empty. Clips and punctures are
    /// kept as-is; integrands vanishing outside `hint` are unaffected.
    pub fn restricted_to(&self, hint: &[(f64, f64)]) -> Option<Region> {
        if hint.len() != self.base.len() {
            return None;
        }
        let mut base = Vec::with_capacity(self.base.len());
        for (&(a, b), &(c, d)) in self.base.iter().zip(hint.iter()) {
            let lo = a.max(c);
            let hi = b.min(d);
            if !(lo < hi) {
                return None;
            }
            base.push((lo, hi));
        }
        Some(Region {
            base,
            clips: self.clips.clone(),
            punctures: self.punctures.clone(),
        })
    }

    /// The same region with every puncture radius replaced by `eps`.
    pub(crate) fn with_puncture_radius(&self, eps: f64) -> Region {
        let mut out = self.clone();
        for p in &mut out.punctures {
            p.radius = eps;
        }
        out
    }
}

/// Affine p-simplex given by p+1 vertices; orientation from the
/// vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    vertices: Vec<Vec<f64>>,
}

impl Simplex {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(CoreError::Invalid("simplex needs vertices".into()));
        }
        let dim = vertices[0].len();
        if dim == 0 || vertices.iter().any(|v| v.len() != dim) {
            return Err(CoreError::Invalid(
                "simplex vertices must share a positive dimension".into(),
            ));
        }
        if vertices.len() > dim + 1 {
            return Err(CoreError::Invalid(format!(
                "a {}-simplex does not fit in dimension {dim}",
                vertices.len() - 1
            )));
        }
        Ok(Simplex { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// Simplex degree p (number of vertices minus one).
    pub fn degree(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub(crate) fn max_edge_length(&self) -> f64 {
        let mut max = 0.0f64;
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                let d: f64 = self.vertices[i]
                    .iter()
                    .zip(&self.vertices[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                max = max.max(d);
            }
        }
        max.sqrt()
    }

    pub(crate) fn bbox(&self) -> Vec<(f64, f64)> {
        let dim = self.dim();
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for v in &self.vertices {
            for (axis, &c) in v.iter().enumerate() {
                out[axis].0 = out[axis].0.min(c);
                out[axis].1 = out[axis].1.max(c);
            }
        }
        out
    }

    /// Alternating-face boundary as (sign, face) pairs.
    pub fn faces(&self) -> Vec<(f64, Simplex)> {
        let mut out = Vec::with_capacity(self.vertices.len());
        for skip in 0..self.vertices.len() {
            let mut verts = self.vertices.clone();
            verts.remove(skip);
            let sign = if skip % 2 == 0 { 1.0 } else { -1.0 };
            out.push((sign, Simplex { vertices: verts }));
        }
        out
    }
}

/// Weighted formal sum of simplices of one degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    degree: usize,
    dim: usize,
    terms: Vec<(f64, Simplex)>,
}

impl Chain {
    pub fn new(terms: Vec<(f64, Simplex)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(CoreError::Invalid(
                "chain needs at least one term; use Chain::empty".into(),
            ));
        }
        let degree = terms[0].1.degree();
        let dim = terms[0].1.dim();
        for (_, s) in &terms {
            if s.degree() != degree {
                return Err(CoreError::DegreeMismatch {
                    context: "chain term",
                    expected: degree,
                    got: s.degree(),
                });
            }
            if s.dim() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
        }
        Ok(Chain { degree, dim, terms })
    }

    pub fn empty(dim: usize, degree: usize) -> Self {
        Chain {
            degree,
            dim,
            terms: Vec::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(f64, Simplex)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Standard alternating-face boundary; identical faces (up to vertex
    /// permutation) are merged and cancelled.
    pub fn boundary(&self) -> Result<Chain> {
        if self.degree == 0 {
            return Err(CoreError::DegreeMismatch {
                context: "chain boundary",
                expected: 1,
                got: 0,
            });
        }
        let mut merged: Vec<(Vec<Vec<f64>>, f64)> = Vec::new();
        for (weight, simplex) in &self.terms {
            for (sign, face) in simplex.faces() {
                let (canon, parity) = canonical_vertices(face.vertices());
                let w = weight * sign * parity;
                match merged.iter_mut().find(|(v, _)| *v == canon) {
                    Some((_, acc)) => *acc += w,
                    None => merged.push((canon, w)),
                }
            }
        }
        let terms: Vec<(f64, Simplex)> = merged
            .into_iter()
            .filter(|&(_, w)| w != 0.0)
            .map(|(vertices, w)| (w, Simplex { vertices }))
            .collect()
;
        Ok(Chain {
            degree: self.degree - 1,
            dim: self.dim,
            terms,
        })
    }
}

/// Sorts vertices lexicographically and reports the permutation parity.
fn canonical_vertices(vertices: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let mut order: Vec<usize> = (0..vertices.len()).collect();
    // insertion sort, counting swaps for the parity
    let mut swaps = 0usize;
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && lex_less(&vertices[order[j]], &vertices[order[j - 1]]) {
            order.swap(j, j - 1);
            swaps += 1;
            j -= 1;
        }
    }
    let canon = order.iter().map(|&i| vertices[i].clone()).collect();
    (canon, if swaps % 2 == 0 { 1.0 } else { -1.0 })
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Quadrature parameters. `cells_per_axis` controls both the box mesh
/// and the target edge length for simplex refinement; `epsilon_ladder`
/// drives punctured-region extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub cells_per_axis: usize,
    pub gauss_order: usize,
    pub epsilon_ladder: Vec<f64>,
}

impl QuadratureSpec {
    pub fn new(cells_per_axis: usize, gauss_order: usize, epsilon_ladder: Vec<f64>) -> Result<Self> {
        if cells_per_axis == 0 || gauss_order == 0 {
            return Err(CoreError::Invalid(
                "cells_per_axis and gauss_order must be positive".into(),
            ));
        }
        if epsilon_ladder.iter().any(|&e| !(e > 0.0))
            || epsilon_ladder.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(CoreError::Invalid(
                "epsilon ladder must be positive and strictly decreasing".into(),
            ));
        }
        Ok(QuadratureSpec {
            cells_per_axis,
            gauss_order,
            epsilon_ladder,
        })
    }

    /// The ladder `eps0 * 2^-k`, `k = 0..rungs`.
    pub fn halving_ladder(eps0: f64, rungs: usize) -> Vec<f64> {
        (0..rungs).map(|k| eps0 * 0.5f64.powi(k as i32)).collect()
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        crate::defaults::Defaults::get().quadrature.clone()
    }
}

// --- JSON -------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ClipJson {
    axis: usize,
    sense: String,
    threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct PunctureJson {
    fixed: Vec<(usize, f64)>,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct RegionJson {
    #[serde(rename = "box")]
    base: Vec<(f64, f64)>,
    #[serde(default)]
    clips: Vec<ClipJson>,
    #[serde(default)]
    punctures: Vec<PunctureJson>,
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RegionJson {
            base: self.base.clone(),
            clips: self
                .clips
                .iter()
                .map(|c| ClipJson {
                    axis: c.axis + 1,
                    sense: if c.keep_above { "ge" } else { "le" }.into(),
                    threshold: c.threshold,
                })
                .collect(),
            punctures: self
                .punctures
                .iter()
                .map(|p| PunctureJson {
                    fixed: p.fixed.iter().map(|&(a, v)| (a + 1, v)).collect(),
                    radius: p.radius,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RegionJson::deserialize(deserializer)?;
        let mut region = Region::bounding_box(&raw.base).map_err(D::Error::custom)?;
        for c in raw.clips {
            region = match c.sense.as_str() {
                "ge" => region.clip_ge(c.axis, c.threshold),
                "le" => region.clip_le(c.axis, c.threshold),
                other => Err(CoreError::Invalid(format!(
                    "clip sense must be `ge` or `le`, got `{other}`"
                ))),
            }
            .map_err(D::Error::custom)?;
        }
        for p in raw.punctures {
            region = region
                .puncture(&p.fixed, p.radius)
                .map_err(D::Error::custom)?;
        }
        Ok(region)
    }
}

#[derive(Serialize, Deserialize)]
struct ChainJson {
    degree: usize,
    dim: usize,
    terms: Vec<ChainTermJson>,
}

#[derive(Serialize, Deserialize)]
struct ChainTermJson {
    weight: f64,
    vertices: Vec<Vec<f64>>,
}

impl Serialize for Chain {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ChainJson {
            degree: self.degree,
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(w, s)| ChainTermJson {
                    weight: *w,
                    vertices: s.vertices.clone(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Chain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = ChainJson::deserialize(deserializer)?;
        if raw.terms.is_empty() {
            return Ok(Chain::empty(raw.dim, raw.degree));
        }
        let terms: Vec<(f64, Simplex)> = raw
            .terms
            .into_iter()
            .map(|t| Simplex::new(t.vertices).map(|s| (t.weight, s)))
            .collect::<Result<_>>()
            .map_err(D::Error::custom)?;
        let chain = Chain::new(terms).map_err(D::Error::custom)?;
        if chain.degree != raw.degree || chain.dim != raw.dim {
            return Err(D::Error::custom("chain terms disagree with declared degree/dim"));
        }
        Ok(chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: [f64; 2], b: [f64; 2]) -> Simplex {
        Simplex::new(vec![a.to_vec(), b.to_vec()]).unwrap()
    }

    #[test]
    fn boundary_of_segment() {
        let c = Chain::new(vec![(1.0, seg([0.0, 0.0], [1.0, 2.0]))]).unwrap();
        let b = c.boundary().unwrap();
        assert_eq!(b.terms().len(), 2);
        for (w, s) in b.terms() {
            match s.vertices()[0][0] {
                v if v == 0.0 => assert_eq!(*w, -1.0),
                v if v == 1.0 => assert_eq!(*w, 1.0),
                v => panic!("unexpected vertex {v}"),
            }
        }
    }

    #[test]
    fn boundary_of_triangle_matches_simplicial_formula() {
        let tri = Simplex::new(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let b = Chain::new(vec![(1.0, tri)]).unwrap().boundary().unwrap();
        // (B,C) - (A,C) + (A,B): three faces, all weight ±1
        assert_eq!(b.terms().len(), 3);
        let total: f64 = b.terms().iter().map(|(w, _)| w.abs()).sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn boundary_of_boundary_cancels() {
        let tet = Simplex::new(vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let c = Chain::new(vec![(1.0, tet)]).unwrap();
        let bb = c.boundary().unwrap().boundary().unwrap();
        assert!(bb.is_empty(), "residual terms: {:?}", bb.terms().len());
    }

    #[test]
    fn region_validation() {
        assert!(Region::bounding_box(&[(1.0, 1.0)]).is_err());
        assert!(Region::cube(2, 1.0).puncture(&[(1, 0.0)], 0.0).is_err());
        assert!(Region::cube(2, 1.0).clip_ge(3, 0.0).is_err());
    }

    #[test]
    fn region_restriction() {
        let r = Region::cube(2, 1.0);
        let s = r.restricted_to(&[(0.5, 2.0), (-0.25, 0.25)]).unwrap();
        assert_eq!(s.base_box(), &[(0.5, 1.0), (-0.25, 0.25)]);
        assert!(r.restricted_to(&[(2.0, 3.0), (0.0, 1.0)]).is_none());
    }

    #[test]
    fn quadrature_spec_validation() {
        assert!(QuadratureSpec::new(0, 4, vec![]).is_err());
        assert!(QuadratureSpec::new(4, 4, vec![0.25, 0.5]).is_err());
        assert!(QuadratureSpec::new(4, 4, QuadratureSpec::halving_ladder(0.25, 7)).is_ok());
    }
}
