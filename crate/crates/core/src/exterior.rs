//! Exterior algebra of differential forms with expression coefficients.
//!
//! Coefficients are stored only on strictly increasing multi-indices;
//! every sign is computed at operation time from permutation parity, so
//! two forms are equal exactly when their canonical coefficients agree
//! pointwise. Zero testing is numerical: evaluate on a deterministic
//! low-discrepancy sample and bound the largest coefficient.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};
use crate::symexpr::ScalarExpr;

/// Strictly increasing list of coordinate indices (zero-based). The
/// empty list is the unique degree-0 index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::Invalid(format!(
                "multi-index {indices:?} is not strictly increasing"
            )));
        }
        Ok(MultiIndex(indices))
    }

    /// Builds from one-based coordinate indices.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i == 0) {
            return Err(CoreError::Invalid("multi-index uses index 0".into()));
        }
        Self::new(indices.iter().map(|&i| i - 1).collect())
    }

    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// All increasing multi-indices of the given degree in dimension `dim`.
    pub fn all(dim: usize, degree: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if left == 0 {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for i in start..dim {
                if dim - i < left {
                    break;
                }
                cur.push(i);
                rec(i + 1, dim, left - 1, cur, out);
                cur.pop();
            }
        }
        rec(0, dim, degree, &mut cur, &mut out);
        out
    }

    /// Merges two disjoint increasing index lists, returning the merged
    /// index and the parity sign; `None` when an index repeats.
    fn merge(&self, other: &MultiIndex) -> Option<(MultiIndex, f64)> {
        let mut merged = Vec::with_capacity(self.0.len() + other.0.len());
        let mut inversions = 0usize;
        let (mut a, mut b) = (0usize, 0usize);
        while a < self.0.len() && b < other.0.len() {
            if self.0[a] == other.0[b] {
                return None;
            }
            if self.0[a] < other.0[b] {
                merged.push(self.0[a]);
                a += 1;
            } else {
                // other.0[b] jumps over the remaining entries of self
                inversions += self.0.len() - a;
                merged.push(other.0[b]);
                b += 1;
            }
        }
        merged.extend_from_slice(&self.0[a..]);
        merged.extend_from_slice(&other.0[b..]);
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        Some((MultiIndex(merged), sign))
    }
}

impl fmt::Display for MultiIndex {
    /// One-based, comma separated (`"1,3"`); degree 0 prints empty.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        Ok(())
    }
}

/// Degree-k differential form on R^n. Absent coefficients are zero.
#[derive(Debug, Clone)]
pub struct DifferentialForm {
    dim: usize,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, ScalarExpr>,
}

impl DifferentialForm {
    pub fn zero(dim: usize, degree: usize) -> Self {
        DifferentialForm {
            dim,
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    /// The constant form `dx_I` for one-based indices `I`.
    pub fn basis(dim: usize, one_based: &[usize]) -> Result<Self> {
        DifferentialForm::zero(dim, one_based.len())
            .with_coeff(one_based, ScalarExpr::one(dim))
    }

    /// Adds (replaces) the coefficient on the one-based multi-index.
    pub fn with_coeff(mut self, one_based: &[usize], coeff: ScalarExpr) -> Result<Self> {
        let idx = MultiIndex::from_one_based(one_based)?;
        self.insert(idx, coeff)?;
        Ok(self)
    }

    /// A 0-form from a scalar expression.
    pub fn from_scalar(e: ScalarExpr) -> Self {
        let dim = e.dim();
        let mut coeffs = BTreeMap::new();
        if !e.is_zero_literal() {
            coeffs.insert(MultiIndex::empty(), e);
        }
        DifferentialForm {
            dim,
            degree: 0,
            coeffs,
        }
    }

    fn insert(&mut self, idx: MultiIndex, coeff: ScalarExpr) -> Result<()> {
        if idx.degree() != self.degree {
            return Err(CoreError::DegreeMismatch {
                context: "form coefficient",
                expected: self.degree,
                got: idx.degree(),
            });
        }
        if let Some(m) = idx.max_index() {
            if m >= self.dim {
                return Err(CoreError::Invalid(format!(
                    "multi-index {idx} exceeds dimension {}",
                    self.dim
                )));
            }
        }
        if coeff.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: coeff.dim(),
            });
        }
        if !coeff.is_zero_literal() {
            self.coeffs.insert(idx, coeff);
        }
        Ok(())
    }

    fn accumulate(&mut self, idx: MultiIndex, coeff: ScalarExpr) {
        match self.coeffs.remove(&idx) {
            None => {
                self.coeffs.insert(idx, coeff);
            }
            Some(prev) => {
                self.coeffs.insert(idx, prev.add(&coeff));
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&MultiIndex, &ScalarExpr)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, idx: &MultiIndex) -> Option<&ScalarExpr> {
        self.coeffs.get(idx)
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Wedge product. Degrees add; indices merge with parity signs;
    /// repeated indices drop. Degrees beyond `dim` give the zero form.
    pub fn wedge(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        if self.dim != other.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let degree = self.degree + other.degree;
        let mut out = DifferentialForm::zero(self.dim, degree);
        if degree > self.dim {
            return Ok(out);
        }
        for (ia, ca) in &self.coeffs {
            for (ib, cb) in &other.coeffs {
                if let Some((idx, sign)) = ia.merge(ib) {
                    let term = ca.mul(cb);
                    out.accumulate(idx, if sign < 0.0 { term.neg() } else { term });
                }
            }
        }
        Ok(out)
    }

    /// Exterior derivative via exact symbolic partials.
    pub fn d(&self) -> DifferentialForm {
        let degree = self.degree + 1;
        let mut out = DifferentialForm::zero(self.dim, degree);
        if degree > self.dim {
            return out;
        }
        for (idx, coeff) in &self.coeffs {
            for i in 0..self.dim {
                if idx.indices().contains(&i) {
                    continue;
                }
                let partial = coeff.diff(i + 1);
                if partial.is_zero_literal() {
                    continue;
                }
                let single = MultiIndex(vec![i]);
                let (merged, sign) = single.merge(idx).expect("index not in idx");
                out.accumulate(merged, if sign < 0.0 { partial.neg() } else { partial });
            }
        }
        out
    }

    /// Interior product `X ⌟ a`, contraction in the first slot.
    pub fn interior(&self, field: &VectorField) -> Result<DifferentialForm> {
        if self.dim != field.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: field.dim(),
            });
        }
        if self.degree == 0 {
            return Err(CoreError::DegreeMismatch {
                context: "interior product",
                expected: 1,
                got: 0,
            });
        }
        let mut out = DifferentialForm::zero(self.dim, self.degree - 1);
        for (idx, coeff) in &self.coeffs {
            for (slot, &i) in idx.indices().iter().enumerate() {
                let comp = field.component(i);
                if comp.is_zero_literal() {
                    continue;
                }
                let mut rest = idx.indices().to_vec();
                rest.remove(slot);
                let term = comp.mul(coeff);
                let term = if slot % 2 == 1 { term.neg() } else { term };
                out.accumulate(MultiIndex(rest), term);
            }
        }
        Ok(out)
    }

    /// `ω ∧ dω` for a 1-form; an identically-zero residual certifies
    /// complete integrability of the induced hyperplane distribution.
    pub fn frobenius_residual(&self) -> Result<DifferentialForm> {
        if self.degree != 1 {
            return Err(CoreError::DegreeMismatch {
                context: "frobenius residual",
                expected: 1,
                got: self.degree,
            });
        }
        self.wedge(&self.d())
    }

    /// Sum of two forms of equal dimension and degree.
    pub fn add(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        if self.dim != other.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if self.degree != other.degree {
            return Err(CoreError::DegreeMismatch {
                context: "form addition",
                expected: self.degree,
                got: other.degree,
            });
        }
        let mut out = self.clone();
        for (idx, coeff) in &other.coeffs {
            out.accumulate(idx.clone(), coeff.clone());
        }
        Ok(out)
    }

    /// Multiplies every coefficient by a scalar field.
    pub fn scale_by(&self, factor: &ScalarExpr) -> DifferentialForm {
        let mut out = DifferentialForm::zero(self.dim, self.degree);
        for (idx, coeff) in &self.coeffs {
            out.coeffs.insert(idx.clone(), factor.mul(coeff));
        }
        out
    }

    /// Multiplies every coefficient by a constant.
    pub fn scale(&self, k: f64) -> DifferentialForm {
        if k == 0.0 {
            return DifferentialForm::zero(self.dim, self.degree);
        }
        let mut out = DifferentialForm::zero(self.dim, self.degree);
        for (idx, coeff) in &self.coeffs {
            out.coeffs.insert(idx.clone(), coeff.scale(k));
        }
        out
    }

    /// Evaluates every stored coefficient at a point, in canonical
    /// multi-index order.
    pub fn evaluate_at(&self, p: &[f64]) -> Result<Vec<(MultiIndex, f64)>> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for (idx, coeff) in &self.coeffs {
            out.push((idx.clone(), coeff.eval(p).map_err(CoreError::Eval)?));
        }
        Ok(out)
    }

    /// Multilinear action on `degree` vectors via determinant expansion.
    pub fn apply_to_vectors(&self, p: &[f64], vectors: &[Vec<f64>]) -> Result<f64> {
        if vectors.len() != self.degree {
            return Err(CoreError::DegreeMismatch {
                context: "form applied to vectors",
                expected: self.degree,
                got: vectors.len(),
            });
        }
        let mut total = 0.0;
        for (idx, coeff) in &self.coeffs {
            let c = coeff.eval(p).map_err(CoreError::Eval)?;
            total += c * index_minor(idx.indices(), vectors);
        }
        Ok(total)
    }

    /// Largest absolute coefficient value over a deterministic
    /// low-discrepancy sample of `count` points in `sample_box`.
    pub fn max_abs_on_sample(&self, sample_box: &[(f64, f64)], count: usize) -> Result<f64> {
        let mut max = 0.0f64;
        for p in halton_points(sample_box, count) {
            for (_, coeff) in &self.coeffs {
                let v = coeff.eval(&p).map_err(CoreError::Eval)?;
                max = max.max(v.abs());
            }
        }
        Ok(max)
    }
}

/// Determinant of the rows of `vectors` selected by `indices`
/// (columns are the vectors).
pub fn index_minor(indices: &[usize], vectors: &[Vec<f64>]) -> f64 {
    let k = indices.len();
    if k == 0 {
        return 1.0;
    }
    let mut m = vec![0.0; k * k];
    for (r, &i) in indices.iter().enumerate() {
        for (c, v) in vectors.iter().enumerate() {
            m[r * k + c] = v[i];
        }
    }
    determinant(&mut m, k)
}

fn determinant(m: &mut [f64], k: usize) -> f64 {
    // in-place LU with partial pivoting; k is tiny (<= 4) here
    let mut det = 1.0;
    for col in 0..k {
        let mut pivot = col;
        for r in col + 1..k {
            if m[r * k + col].abs() > m[pivot * k + col].abs() {
                pivot = r;
            }
        }
        if m[pivot * k + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..k {
                m.swap(col * k + c, pivot * k + c);
            }
            det = -det;
        }
        let d = m[col * k + col];
        det *= d;
        for r in col + 1..k {
            let f = m[r * k + col] / d;
            for c in col..k {
                m[r * k + c] -= f * m[col * k + c];
            }
        }
    }
    det
}

/// Vector field on R^n with expression components.
#[derive(Debug, Clone)]
pub struct VectorField {
    dim: usize,
    components: Vec<ScalarExpr>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarExpr>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(CoreError::Invalid("vector field needs components".into()));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        Ok(VectorField { dim, components })
    }

    /// The constant coordinate field `∂/∂x_i` (one-based).
    pub fn basis(dim: usize, i: usize) -> Self {
        let components = (1..=dim)
            .map(|j| {
                if j == i {
                    ScalarExpr::one(dim)
                } else {
                    ScalarExpr::zero(dim)
                }
            })
            .collect();
        VectorField { dim, components }
    }

    /// Constant field with the given component values.
    pub fn constant(values: &[f64]) -> Self {
        let dim = values.len();
        VectorField {
            dim,
            components: values
                .iter()
                .map(|&v| ScalarExpr::constant(v, dim))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component(&self, i: usize) -> &ScalarExpr {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarExpr] {
        &self.components
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.components
            .iter()
            .map(|c| c.eval(p).map_err(CoreError::Eval))
            .collect()
    }
}

/// Deterministic Halton sample of `count` points inside `sample_box`.
pub fn halton_points(sample_box: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let dim = sample_box.len();
    assert!(dim <= PRIMES.len(), "sample box dimension too large");
    (1..=count)
        .map(|k| {
            (0..dim)
                .map(|axis| {
                    let t = radical_inverse(k, PRIMES[axis]);
                    let (lo, hi) = sample_box[axis];
                    lo + t * (hi - lo)
                })
                .collect()
        })
        .collect()
}

fn radical_inverse(mut k: usize, base: usize) -> f64 {
    let mut inv = 0.0;
    let mut denom = 1.0;
    while k > 0 {
        denom *= base as f64;
        inv += (k % base) as f64 / denom;
        k /= base;
    }
    inv
}

// --- JSON ------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FormJson {
    dim: usize,
    degree: usize,
    coeffs: BTreeMap<String, String>,
}

impl Serialize for DifferentialForm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(idx, c)| (idx.to_string(), c.to_string()))
            .collect();
        FormJson {
            dim: self.dim,
            degree: self.degree,
            coeffs,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DifferentialForm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = FormJson::deserialize(deserializer)?;
        let mut form = DifferentialForm::zero(raw.dim, raw.degree);
        for (key, text) in raw.coeffs {
            let one_based = parse_index_key(&key).map_err(D::Error::custom)?;
            let coeff = ScalarExpr::parse(&text, raw.dim).map_err(D::Error::custom)?;
            form = form
                .with_coeff(&one_based, coeff)
                .map_err(D::Error::custom)?;
        }
        Ok(form)
    }
}

pub(crate) fn parse_index_key(key: &str) -> std::result::Result<Vec<usize>, String> {
    let trimmed = key.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad multi-index key `{key}`"))
        })
        .collect()
}

impl Serialize for VectorField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct V {
            dim: usize,
            components: Vec<String>,
        }
        V {
            dim: self.dim,
            components: self.components.iter().map(|c| c.to_string()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VectorField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct V {
            dim: usize,
            components: Vec<String>,
        }
        let raw = V::deserialize(deserializer)?;
        let components: Vec<ScalarExpr> = raw
            .components
            .iter()
            .map(|t| ScalarExpr::parse(t, raw.dim))
            .collect::<std::result::Result<_, _>>()
            .map_err(D::Error::custom)?;
        VectorField::new(components).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expr(text: &str, dim: usize) -> ScalarExpr {
        ScalarExpr::parse(text, dim).unwrap()
    }

    #[test]
    fn wedge_antisymmetry_on_basis() {
        let dx = DifferentialForm::basis(2, &[1]).unwrap();
        let dy = DifferentialForm::basis(2, &[2]).unwrap();
        let xy = dx.wedge(&dy).unwrap();
        let yx = dy.wedge(&dx).unwrap();
        let p = [0.3, 0.7];
        let idx = MultiIndex::from_one_based(&[1, 2]).unwrap();
        assert_eq!(xy.coeff(&idx).unwrap().eval(&p).unwrap(), 1.0);
        assert_eq!(yx.coeff(&idx).unwrap().eval(&p).unwrap(), -1.0);
    }

    #[test]
    fn wedge_repeated_factor_is_zero() {
        let dx = DifferentialForm::basis(2, &[1]).unwrap();
        let dxdy = DifferentialForm::basis(2, &[1, 2]).unwrap();
        let out = dxdy.wedge(&dx).unwrap();
        assert!(out.is_structurally_zero());
        assert_eq!(out.degree(), 3);
    }

    #[test]
    fn wedge_sign_from_even_permutation() {
        // (z dx + dy) ∧ (dz∧dx) = dx∧dy∧dz via dy∧dz∧dx
        let a = DifferentialForm::zero(3, 1)
            .with_coeff(&[1], expr("z", 3))
            .unwrap()
            .with_coeff(&[2], expr("1", 3))
            .unwrap();
        let b = DifferentialForm::zero(3, 2)
            .with_coeff(&[1, 3], expr("-1", 3))
            .unwrap();
        // dz∧dx = -(dx∧dz), so b is the canonical storage of dz∧dx
        let w = a.wedge(&b).unwrap();
        let idx = MultiIndex::from_one_based(&[1, 2, 3]).unwrap();
        let p = [0.2, 0.4, 0.8];
        assert_eq!(w.coeff(&idx).unwrap().eval(&p).unwrap(), 1.0);
        // oracle: determinant-expansion evaluation on basis vectors
        let e1 = vec![1.0, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        let e3 = vec![0.0, 0.0, 1.0];
        let direct = w.apply_to_vectors(&p, &[e1, e2, e3]).unwrap();
        assert_eq!(direct, 1.0);
    }

    #[test]
    fn exterior_derivative_basics() {
        // d(x dy) = dx∧dy
        let a = DifferentialForm::zero(2, 1)
            .with_coeff(&[2], expr("x", 2))
            .unwrap();
        let da = a.d();
        let idx = MultiIndex::from_one_based(&[1, 2]).unwrap();
        assert_eq!(da.coeff(&idx).unwrap().eval(&[0.5, 0.9]).unwrap(), 1.0);
    }

    #[test]
    fn angular_form_is_closed_off_the_axis() {
        let dtheta = DifferentialForm::zero(2, 1)
            .with_coeff(&[1], expr("-y/(x^2+y^2)", 2))
            .unwrap()
            .with_coeff(&[2], expr("x/(x^2+y^2)", 2))
            .unwrap();
        let d = dtheta.d();
        for p in halton_points(&[(0.1, 1.0), (0.1, 1.0)], 64) {
            for (_, c) in d.coeffs() {
                assert!(c.eval(&p).unwrap().abs() < 1e-12, "at {p:?}");
            }
        }
    }

    #[test]
    fn curl_style_cross_derivatives() {
        // d(f dx + g dy + dz) with f = x*y, g = x^2  →  x dx∧dy
        let a = DifferentialForm::zero(3, 1)
            .with_coeff(&[1], expr("x*y", 3))
            .unwrap()
            .with_coeff(&[2], expr("x^2", 3))
            .unwrap()
            .with_coeff(&[3], expr("1", 3))
            .unwrap();
        let da = a.d();
        let idx = MultiIndex::from_one_based(&[1, 2]).unwrap();
        for p in halton_points(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)], 32) {
            let got = da.coeff(&idx).unwrap().eval(&p).unwrap();
            // hand chain rule: g,x - f,y = 2x - x = x
            assert!((got - p[0]).abs() < 1e-12);
            for (i, c) in da.coeffs() {
                if i != &idx {
                    assert_eq!(c.eval(&p).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn interior_product_signs() {
        let dxdy = DifferentialForm::basis(2, &[1, 2]).unwrap();
        let ex = VectorField::basis(2, 1);
        let ey = VectorField::basis(2, 2);
        let p = [0.0, 0.0];
        let dy_idx = MultiIndex::from_one_based(&[2]).unwrap();
        let dx_idx = MultiIndex::from_one_based(&[1]).unwrap();
        assert_eq!(
            dxdy.interior(&ex).unwrap().coeff(&dy_idx).unwrap().eval(&p).unwrap(),
            1.0
        );
        assert_eq!(
            dxdy.interior(&ey).unwrap().coeff(&dx_idx).unwrap().eval(&p).unwrap(),
            -1.0
        );
    }

    #[test]
    fn interior_with_field_coefficient() {
        // (y ∂x) ⌟ dx∧dy∧dz at (1,2,3) = 2 dy∧dz
        let vol = DifferentialForm::basis(3, &[1, 2, 3]).unwrap();
        let field = VectorField::new(vec![expr("y", 3), expr("0", 3), expr("0", 3)]).unwrap();
        let out = vol.interior(&field).unwrap();
        let p = [1.0, 2.0, 3.0];
        let dydz = MultiIndex::from_one_based(&[2, 3]).unwrap();
        assert_eq!(out.coeff(&dydz).unwrap().eval(&p).unwrap(), 2.0);
        // oracle: multilinear evaluation on basis vectors
        let direct = vol
            .apply_to_vectors(&p, &[vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]])
            .unwrap();
        assert_eq!(direct, 2.0);
    }

    #[test]
    fn frobenius_residual_cases() {
        // closed form: residual 0
        let dz = DifferentialForm::basis(3, &[3]).unwrap();
        assert!(dz.frobenius_residual().unwrap().is_structurally_zero());

        // z dx + dy: residual dx∧dy∧dz with coefficient 1
        let w = DifferentialForm::zero(3, 1)
            .with_coeff(&[1], expr("z", 3))
            .unwrap()
            .with_coeff(&[2], expr("1", 3))
            .unwrap();
        let res = w.frobenius_residual().unwrap();
        let idx = MultiIndex::from_one_based(&[1, 2, 3]).unwrap();
        assert_eq!(res.coeff(&idx).unwrap().eval(&[0.4, 0.1, 0.9]).unwrap(), 1.0);

        // horizontal family f(x,y) dx + g(x,y) dy is always integrable
        let flat = DifferentialForm::zero(3, 1)
            .with_coeff(&[1], expr("x*y + 1", 3))
            .unwrap()
            .with_coeff(&[2], expr("x^2 - y", 3))
            .unwrap();
        let res = flat.frobenius_residual().unwrap();
        assert!(
            res.max_abs_on_sample(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)], 256)
                .unwrap()
                <= 1e-12
        );

        // adding dz couples the cross-derivative gap into the residual:
        // ω = f dx + g dy + dz  →  ω∧dω = (g,x − f,y) dx∧dy∧dz
        let tilted = flat
            .add(&DifferentialForm::basis(3, &[3]).unwrap())
            .unwrap();
        let res = tilted.frobenius_residual().unwrap();
        let p = [0.3, -0.4, 0.2];
        let got = res.coeff(&idx).unwrap().eval(&p).unwrap();
        let expect = 2.0 * p[0] - p[0]; // g,x - f,y = 2x - x
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let form = DifferentialForm::zero(3, 1)
            .with_coeff(&[1], expr("-y/(x^2+y^2)", 3))
            .unwrap()
            .with_coeff(&[3], expr("bump(0.5; z)", 3))
            .unwrap();
        let text = serde_json::to_string(&form).unwrap();
        let back: DifferentialForm = serde_json::from_str(&text).unwrap();
        for p in halton_points(&[(0.2, 0.9), (0.2, 0.9), (-0.4, 0.4)], 16) {
            let a = form.evaluate_at(&p).unwrap();
            let b = back.evaluate_at(&p).unwrap();
            assert_eq!(a, b);
        }
    }
}
