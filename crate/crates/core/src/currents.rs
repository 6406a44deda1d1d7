//! De Rham currents as formal sums of atoms, evaluated against
//! compactly supported test forms.
//!
//! A degree-p current accepts degree-p test forms. Atoms:
//!
//! * form-over-region: `T[φ] = ∫_R ω ∧ φ` with `deg ω = n - p`,
//! * weighted chain: `T[φ] = ∫_c u φ` with `deg c = p`,
//! * boundary wrapper: `∂T[φ] = T[dφ]` — lazy, never expanded,
//! * restriction `T⌞α`: `(T⌞α)[φ] = T[α∧φ]`,
//! * vector product `T∧X`: `(T∧X)[φ] = T[X⌟φ]`.
//!
//! Evaluation is linear in the test form and deterministic; atom values
//! are reduced in declaration order with compensated summation.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};
use crate::exterior::{halton_points, DifferentialForm, VectorField};
use crate::geometry::{
    integrate_chain_hinted, integrate_region, Chain, Kahan, QuadratureSpec, Region,
};
use crate::symexpr::ScalarExpr;

/// Compactly supported smooth test form: a differential form together
/// with the box its coefficients vanish outside of.
#[derive(Debug, Clone)]
pub struct TestForm {
    form: DifferentialForm,
    support: Vec<(f64, f64)>,
}

impl TestForm {
    /// Wraps a form and verifies (by deterministic sampling around the
    /// declared box) that its coefficients really vanish outside.
    pub fn new(form: DifferentialForm, support: Vec<(f64, f64)>) -> Result<Self> {
        if support.len() != form.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: form.dim(),
                got: support.len(),
            });
        }
        for &(lo, hi) in &support {
            if !(lo < hi) {
                return Err(CoreError::Invalid(format!(
                    "degenerate support interval [{lo}, {hi}]"
                )));
            }
        }
        let tf = TestForm { form, support };
        tf.check_vanishes_outside()?;
        Ok(tf)
    }

    /// `bump(radius; x - center) dx_I` — the standard probe shape. The
    /// support box is the tight box around the bump ball.
    pub fn bump_probe(center: &[f64], radius: f64, indices_one_based: &[usize]) -> Result<Self> {
        let dim = center.len();
        let bump = ScalarExpr::bump_at(radius, center);
        let form = if indices_one_based.is_empty() {
            DifferentialForm::from_scalar(bump)
        } else {
            DifferentialForm::zero(dim, indices_one_based.len())
                .with_coeff(indices_one_based, bump)?
        };
        let support = center.iter().map(|&c| (c - radius, c + radius)).collect();
        // constructed from a bump: vanishing outside holds exactly
        Ok(TestForm { form, support })
    }

    /// As [`TestForm::bump_probe`] with the bump multiplied by `factor`.
    pub fn modulated_bump_probe(
        center: &[f64],
        radius: f64,
        indices_one_based: &[usize],
        factor: &ScalarExpr,
    ) -> Result<Self> {
        let dim = center.len();
        let bump = ScalarExpr::bump_at(radius, center).mul(factor);
        let form = if indices_one_based.is_empty() {
            DifferentialForm::from_scalar(bump)
        } else {
            DifferentialForm::zero(dim, indices_one_based.len())
                .with_coeff(indices_one_based, bump)?
        };
        let support = center.iter().map(|&c| (c - radius, c + radius)).collect();
        Ok(TestForm { form, support })
    }

    fn check_vanishes_outside(&self) -> Result<()> {
        // sample a shell around the support box; every coefficient must
        // evaluate to (numerical) zero there
        let shell: Vec<(f64, f64)> = self
            .support
            .iter()
            .map(|&(lo, hi)| {
                let w = hi - lo;
                (lo - 0.5 * w, hi + 0.5 * w)
            })
            .collect();
        for p in halton_points(&shell, 128) {
            let outside = p
                .iter()
                .zip(&self.support)
                .any(|(&x, &(lo, hi))| x < lo || x > hi);
            if !outside {
                continue;
            }
            for (idx, c) in self.form.coeffs() {
                let v = c.eval(&p).map_err(CoreError::Eval)?;
                if v.abs() > 1e-12 {
                    return Err(CoreError::Invalid(format!(
                        "coefficient {idx} = {v:e} at {p:?}, outside the declared support"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Re-declares the support box (it must still contain the true
    /// support; this is re-verified by sampling). Useful to put several
    /// probes on one grid so evaluation is exactly linear across them.
    pub fn with_support(self, support: Vec<(f64, f64)>) -> Result<Self> {
        TestForm::new(self.form, support)
    }

    pub fn form(&self) -> &DifferentialForm {
        &self.form
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn degree(&self) -> usize {
        self.form.degree()
    }

    /// Exterior derivative; support can only shrink.
    pub fn d(&self) -> TestForm {
        TestForm {
            form: self.form.d(),
            support: self.support.clone(),
        }
    }

    /// `α ∧ φ` with `α` smooth; compact support is inherited from `φ`.
    pub fn wedge_front(&self, alpha: &DifferentialForm) -> Result<TestForm> {
        Ok(TestForm {
            form: alpha.wedge(&self.form)?,
            support: self.support.clone(),
        })
    }

    /// `X ⌟ φ`.
    pub fn interior(&self, field: &VectorField) -> Result<TestForm> {
        Ok(TestForm {
            form: self.form.interior(field)?,
            support: self.support.clone(),
        })
    }

    pub fn scale(&self, k: f64) -> TestForm {
        TestForm {
            form: self.form.scale(k),
            support: self.support.clone(),
        }
    }

    pub fn add(&self, other: &TestForm) -> Result<TestForm> {
        let support = self
            .support
            .iter()
            .zip(&other.support)
            .map(|(&(a, b), &(c, d))| (a.min(c), b.max(d)))
            .collect();
        Ok(TestForm {
            form: self.form.add(&other.form)?,
            support,
        })
    }

    /// L1 mass of the coefficients over the support box; the probe
    /// scale used to normalize residuals.
    pub fn l1_mass(&self) -> Result<f64> {
        let (nodes, weights) = crate::geometry::gauss_legendre(8);
        let cells = 8usize;
        let n = self.dim();
        let mut acc = Kahan::default();
        let total = cells.pow(n as u32);
        let mut point = vec![0.0; n];
        for cell_idx in 0..total {
            let mut rem = cell_idx;
            let mut cell = Vec::with_capacity(n);
            for axis in 0..n {
                let i = rem % cells;
                rem /= cells;
                let (lo, hi) = self.support[axis];
                let h = (hi - lo) / cells as f64;
                cell.push((lo + i as f64 * h, lo + (i + 1) as f64 * h));
            }
            let mut jac = 1.0;
            for &(lo, hi) in &cell {
                jac *= 0.5 * (hi - lo);
            }
            for node_idx in 0..nodes.len().pow(n as u32) {
                let mut rem = node_idx;
                let mut w = jac;
                for axis in 0..n {
                    let k = rem % nodes.len();
                    rem /= nodes.len();
                    let (lo, hi) = cell[axis];
                    point[axis] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes[k];
                    w *= weights[k];
                }
                let mut mag = 0.0;
                for (_, c) in self.form.coeffs() {
                    mag += c.eval(&point).map_err(CoreError::Eval)?.abs();
                }
                acc.add(w * mag);
            }
        }
        Ok(acc.total())
    }
}

/// One atom of a current, with its scalar multiplier applied by the
/// owning [`Current`].
#[derive(Debug, Clone)]
pub enum Atom {
    Form {
        form: DifferentialForm,
        region: Region,
    },
    Chain {
        chain: Chain,
        weight: Option<ScalarExpr>,
    },
    Boundary {
        inner: Box<Current>,
    },
    Restrict {
        inner: Box<Current>,
        alpha: DifferentialForm,
    },
    Vector {
        inner: Box<Current>,
        field: VectorField,
    },
}

/// Formal linear combination of atoms; a continuous linear functional
/// on compactly supported degree-p test forms.
#[derive(Debug, Clone)]
pub struct Current {
    dim: usize,
    degree: usize,
    ambient: Option<Vec<(f64, f64)>>,
    atoms: Vec<(f64, Atom)>,
}

impl Current {
    /// The zero current: no atoms, evaluates to 0 on everything.
    pub fn zero(dim: usize, degree: usize) -> Self {
        Current {
            dim,
            degree,
            ambient: None,
            atoms: Vec::new(),
        }
    }

    /// Current of a smooth form: `T[φ] = ∫_R ω ∧ φ`, degree `n - deg ω`.
    pub fn from_form(form: DifferentialForm, region: Region) -> Result<Self> {
        let n = region.dim();
        if form.dim() != n {
            return Err(CoreError::DimensionMismatch {
                expected: n,
                got: form.dim(),
            });
        }
        if form.degree() > n {
            return Err(CoreError::DegreeMismatch {
                context: "form atom",
                expected: n,
                got: form.degree(),
            });
        }
        let degree = n - form.degree();
        Ok(Current {
            dim: n,
            degree,
            ambient: Some(region.base_box().to_vec()),
            atoms: vec![(
                1.0,
                Atom::Form {
                    form,
                    region,
                },
            )],
        })
    }

    /// Current of a weighted chain: `T[φ] = ∫_c u φ`, degree of the chain.
    pub fn from_chain(chain: Chain, weight: Option<ScalarExpr>) -> Result<Self> {
        if let Some(u) = &weight {
            if u.dim() != chain.dim() {
                return Err(CoreError::DimensionMismatch {
                    expected: chain.dim(),
                    got: u.dim(),
                });
            }
        }
        Ok(Current {
            dim: chain.dim(),
            degree: chain.degree(),
            ambient: None,
            atoms: vec![(1.0, Atom::Chain { chain, weight })],
        })
    }

    pub fn with_ambient(mut self, ambient: &[(f64, f64)]) -> Self {
        self.ambient = Some(ambient.to_vec());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ambient(&self) -> Option<&[(f64, f64)]> {
        self.ambient.as_deref()
    }

    pub fn atoms(&self) -> &[(f64, Atom)] {
        &self.atoms
    }

    /// The boundary `∂T[φ] = T[dφ]` — a lazy wrapper, degree drops by 1.
    pub fn boundary(&self) -> Result<Current> {
        if self.degree == 0 {
            return Err(CoreError::DegreeMismatch {
                context: "current boundary",
                expected: 1,
                got: 0,
            });
        }
        Ok(Current {
            dim: self.dim,
            degree: self.degree - 1,
            ambient: self.ambient.clone(),
            atoms: vec![(
                1.0,
                Atom::Boundary {
                    inner: Box::new(self.clone()),
                },
            )],
        })
    }

    /// Restriction `T⌞α`: `(T⌞α)[φ] = T[α∧φ]`, degree drops by `deg α`.
    pub fn restrict(&self, alpha: &DifferentialForm) -> Result<Current> {
        if alpha.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: alpha.dim(),
            });
        }
        if alpha.degree() > self.degree {
            return Err(CoreError::DegreeMismatch {
                context: "current restriction",
                expected: self.degree,
                got: alpha.degree(),
            });
        }
        Ok(Current {
            dim: self.dim,
            degree: self.degree - alpha.degree(),
            ambient: self.ambient.clone(),
            atoms: vec![(
                1.0,
                Atom::Restrict {
                    inner: Box::new(self.clone()),
                    alpha: alpha.clone(),
                },
            )],
        })
    }

    /// Contraction `α ⌟ T = (-1)^{(n-p)q} T⌞α`.
    pub fn contract(&self, alpha: &DifferentialForm) -> Result<Current> {
        let exponent = (self.dim - self.degree) * alpha.degree();
        let sign = if exponent % 2 == 0 { 1.0 } else { -1.0 };
        Ok(self.restrict(alpha)?.scale(sign))
    }

    /// Vector product `T ∧ X`: `(T∧X)[φ] = T[X⌟φ]`, degree rises by 1.
    pub fn vector_product(&self, field: &VectorField) -> Result<Current> {
        if field.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: field.dim(),
            });
        }
        if self.degree + 1 > self.dim {
            return Err(CoreError::DegreeMismatch {
                context: "vector product",
                expected: self.dim - 1,
                got: self.degree,
            });
        }
        Ok(Current {
            dim: self.dim,
            degree: self.degree + 1,
            ambient: self.ambient.clone(),
            atoms: vec![(
                1.0,
                Atom::Vector {
                    inner: Box::new(self.clone()),
                    field: field.clone(),
                },
            )],
        })
    }

    pub fn scale(mut self, k: f64) -> Current {
        for (s, _) in &mut self.atoms {
            *s *= k;
        }
        self
    }

    /// Weighted sum of currents of one dimension and degree.
    pub fn linear_combine(parts: &[(f64, Current)]) -> Result<Current> {
        let Some((_, first)) = parts.first() else {
            return Err(CoreError::Invalid("linear_combine of nothing".into()));
        };
        let (dim, degree) = (first.dim, first.degree);
        let mut ambient = None;
        let mut atoms = Vec::new();
        for (k, part) in parts {
            if part.dim != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: part.dim,
                });
            }
            if part.degree != degree {
                return Err(CoreError::DegreeMismatch {
                    context: "linear combination",
                    expected: degree,
                    got: part.degree,
                });
            }
            if ambient.is_none() {
                ambient = part.ambient.clone();
            }
            for (s, atom) in &part.atoms {
                atoms.push((k * s, atom.clone()));
            }
        }
        Ok(Current {
            dim,
            degree,
            ambient,
            atoms,
        })
    }

    /// Evaluates the current on a test form. The test form's support
    /// must sit strictly inside the ambient box when one is declared.
    pub fn evaluate(&self, phi: &TestForm, spec: &QuadratureSpec) -> Result<f64> {
        if phi.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: phi.dim(),
            });
        }
        if phi.degree() != self.degree {
            return Err(CoreError::DegreeMismatch {
                context: "current evaluation",
                expected: self.degree,
                got: phi.degree(),
            });
        }
        if let Some(ambient) = &self.ambient {
            let inside = phi
                .support()
                .iter()
                .zip(ambient.iter())
                .all(|(&(lo, hi), &(a, b))| lo > a && hi < b);
            if !inside {
                return Err(CoreError::SupportEscapesRegion);
            }
        }
        let mut acc = Kahan::default();
        for (scale, atom) in &self.atoms {
            if *scale == 0.0 {
                continue;
            }
            acc.add(scale * atom.evaluate(phi, spec)?);
        }
        Ok(acc.total())
    }
}

impl Atom {
    fn evaluate(&self, phi: &TestForm, spec: &QuadratureSpec) -> Result<f64> {
        match self {
            Atom::Form { form, region } => {
                let wedged = form.wedge(phi.form())?;
                if wedged.is_structurally_zero() {
                    return Ok(0.0);
                }
                // the test form vanishes outside its support box, so the
                // integral may be restricted to it
                match region.restricted_to(phi.support()) {
                    None => Ok(0.0),
                    Some(r) => integrate_region(&wedged, &r, spec),
                }
            }
            Atom::Chain { chain, weight } => {
                let integrand = match weight {
                    None => phi.form().clone(),
                    Some(u) => phi.form().scale_by(u),
                };
                integrate_chain_hinted(&integrand, chain, spec, Some(phi.support()))
            }
            Atom::Boundary { inner } => inner.evaluate(&phi.d(), spec),
            Atom::Restrict { inner, alpha } => inner.evaluate(&phi.wedge_front(alpha)?, spec),
            Atom::Vector { inner, field } => inner.evaluate(&phi.interior(field)?, spec),
        }
    }
}

// --- JSON -------------------------------------------------------------------

fn default_scale() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum AtomJson {
    Form {
        #[serde(default = "default_scale")]
        scale: f64,
        form: DifferentialForm,
        region: Region,
    },
    Chain {
        #[serde(default = "default_scale")]
        scale: f64,
        chain: Chain,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<String>,
    },
    Boundary {
        #[serde(default = "default_scale")]
        scale: f64,
        inner: Box<CurrentJson>,
    },
    Restrict {
        #[serde(default = "default_scale")]
        scale: f64,
        inner: Box<CurrentJson>,
        alpha: DifferentialForm,
    },
    Vector {
        #[serde(default = "default_scale")]
        scale: f64,
        inner: Box<CurrentJson>,
        field: VectorField,
    },
}

#[derive(Serialize, Deserialize)]
struct CurrentJson {
    dim: usize,
    degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ambient: Option<Vec<(f64, f64)>>,
    atoms: Vec<AtomJson>,
}

impl Current {
    fn to_json(&self) -> CurrentJson {
        CurrentJson {
            dim: self.dim,
            degree: self.degree,
            ambient: self.ambient.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|(scale, atom)| match atom {
                    Atom::Form { form, region } => AtomJson::Form {
                        scale: *scale,
                        form: form.clone(),
                        region: region.clone(),
                    },
                    Atom::Chain { chain, weight } => AtomJson::Chain {
                        scale: *scale,
                        chain: chain.clone(),
                        weight: weight.as_ref().map(|u| u.to_string()),
                    },
                    Atom::Boundary { inner } => AtomJson::Boundary {
                        scale: *scale,
                        inner: Box::new(inner.to_json()),
                    },
                    Atom::Restrict { inner, alpha } => AtomJson::Restrict {
                        scale: *scale,
                        inner: Box::new(inner.to_json()),
                        alpha: alpha.clone(),
                    },
                    Atom::Vector { inner, field } => AtomJson::Vector {
                        scale: *scale,
                        inner: Box::new(inner.to_json()),
                        field: field.clone(),
                    },
                })
                .collect(),
        }
    }

    fn from_json(raw: CurrentJson) -> Result<Current> {
        let mut current = Current::zero(raw.dim, raw.degree);
        current.ambient = raw.ambient;
        for atom in raw.atoms {
            let (scale, built, atom_degree) = match atom {
                AtomJson::Form {
                    scale,
                    form,
                    region,
                } => {
                    let c = Current::from_form(form, region)?;
                    let d = c.degree;
                    (scale, c.atoms.into_iter().next().unwrap().1, d)
                }
                AtomJson::Chain {
                    scale,
                    chain,
                    weight,
                } => {
                    let weight = weight
                        .map(|t| ScalarExpr::parse(&t, chain.dim()))
                        .transpose()?;
                    let c = Current::from_chain(chain, weight)?;
                    let d = c.degree;
                    (scale, c.atoms.into_iter().next().unwrap().1, d)
                }
                AtomJson::Boundary { scale, inner } => {
                    let inner = Current::from_json(*inner)?;
                    let c = inner.boundary()?;
                    let d = c.degree;
                    (scale, c.atoms.into_iter().next().unwrap().1, d)
                }
                AtomJson::Restrict {
                    scale,
                    inner,
                    alpha,
                } => {
                    let inner = Current::from_json(*inner)?;
                    let c = inner.restrict(&alpha)?;
                    let d = c.degree;
                    (scale, c.atoms.into_iter().next().unwrap().1, d)
                }
                AtomJson::Vector {
                    scale,
                    inner,
                    field,
                } => {
                    let inner = Current::from_json(*inner)?;
                    let c = inner.vector_product(&field)?;
                    let d = c.degree;
                    (scale, c.atoms.into_iter().next().unwrap().1, d)
                }
            };
            if atom_degree != raw.degree {
                return Err(CoreError::DegreeMismatch {
                    context: "current atom",
                    expected: raw.degree,
                    got: atom_degree,
                });
            }
            current.atoms.push((scale, built));
        }
        Ok(current)
    }
}

impl Serialize for Current {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Current {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = CurrentJson::deserialize(deserializer)?;
        Current::from_json(raw).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct TestFormJson {
    support: Vec<(f64, f64)>,
    form: DifferentialForm,
}

impl Serialize for TestForm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TestFormJson {
            support: self.support.clone(),
            form: self.form.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TestForm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = TestFormJson::deserialize(deserializer)?;
        TestForm::new(raw.form, raw.support).map_err(D::Error::custom)
    }
}
