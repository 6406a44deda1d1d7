//! Exterior calculus and de Rham current engine for layering defects.
//!
//! The crate builds up in layers:
//!
//! * [`symexpr`] — a small expression language for scalar coefficient
//!   fields with exact symbolic differentiation and deterministic
//!   point evaluation,
//! * [`exterior`] — differential forms over those coefficients (wedge,
//!   exterior derivative, interior product),
//! * [`geometry`] — integration domains and deterministic quadrature
//!   (boxes with clips and punctures, simplicial chains),
//! * [`currents`] — currents as formal sums of atoms evaluated against
//!   compactly supported test forms, with the lazy boundary operator,
//! * [`defects`] — probe sweeps deciding closedness, locating
//!   dislocation lines, estimating their strength and verifying the
//!   weak Frobenius condition,
//! * [`franks`] — conservation rules for dislocation-line networks,
//! * [`scenarios`] — prebuilt worked examples with their analytic
//!   boundary values for golden testing.
//!
//! All numerical routines are deterministic: fixed summation orders,
//! compensated sums, and seedless low-discrepancy sampling. Parallel
//! evaluation never changes results.

pub mod currents;
pub mod defaults;
pub mod defects;
pub mod error;
pub mod exterior;
pub mod franks;
pub mod geometry;
pub mod scenarios;
pub mod symexpr;

pub use currents::{Current, TestForm};
pub use defects::{DefectReport, ProbeFamily};
pub use error::{CoreError, Result};
pub use exterior::{DifferentialForm, MultiIndex, VectorField};
pub use franks::{DislocationNetwork, RuleReport};
pub use geometry::{Chain, QuadratureSpec, Region, Simplex};
pub use scenarios::Scenario;
pub use symexpr::ScalarExpr;
