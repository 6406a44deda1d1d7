//! Scalar coefficient fields: parsing, exact symbolic partial
//! differentiation, deterministic point evaluation.
//!
//! Expressions are immutable trees shared through `Arc`, so a
//! `ScalarExpr` can be cloned cheaply and evaluated from many threads.
//! The one non-standard primitive is `bump(r; e1, ..., em)`, the
//! compactly supported mollifier
//!
//! ```text
//! bump(r; e) = exp(1 - 1/(1 - s))   with s = (e1^2 + ... + em^2)/r^2,
//!            = 0                    for s >= 1,
//! ```
//!
//! which is C-infinity everywhere. Its derivatives are kept in the
//! closed form `bump * factor`, evaluated with the bump short-circuit
//! first so the rational factor (which has a pole at s = 1) is never
//! touched outside the open support.

mod parser;

use std::fmt;
use std::sync::Arc;

pub use parser::ParseError;

/// Expression tree node. Coordinates are stored zero-based.
#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    /// Integer power; keeps differentiation closed-form.
    Pow(Arc<Expr>, i32),
    Neg(Arc<Expr>),
    Exp(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Sqrt(Arc<Expr>),
    Atan2(Arc<Expr>, Arc<Expr>),
    /// `bump(radius; args) * factor`; `factor = None` is the plain bump.
    Bump {
        radius: f64,
        args: Vec<Arc<Expr>>,
        factor: Option<Arc<Expr>>,
    },
}

/// A scalar field on R^n: expression tree plus ambient dimension.
#[derive(Debug, Clone)]
pub struct ScalarExpr {
    node: Arc<Expr>,
    dim: usize,
}

/// Domain error during evaluation, annotated with the offending
/// subexpression.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalError {
    pub kind: EvalErrorKind,
    /// Printed form of the subexpression that failed.
    pub location: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    SqrtOfNegative,
    WrongPointDimension,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::SqrtOfNegative => "square root of a negative value",
            EvalErrorKind::WrongPointDimension => "point has the wrong number of components",
        };
        write!(f, "{what} in `{}`", self.location)
    }
}

impl std::error::Error for EvalError {}

impl ScalarExpr {
    /// Parses `text` as an expression over `x1..x_dim` (aliases
    /// `x, y, z` when `dim <= 3`).
    pub fn parse(text: &str, dim: usize) -> Result<Self, ParseError> {
        parser::parse(text, dim)
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        ScalarExpr {
            node: Arc::new(Expr::Const(value)),
            dim,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(0.0, dim)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(1.0, dim)
    }

    /// The coordinate `x_i`, one-based.
    pub fn coord(i: usize, dim: usize) -> Self {
        assert!(i >= 1 && i <= dim, "coordinate index {i} out of 1..={dim}");
        ScalarExpr {
            node: Arc::new(Expr::Coord(i - 1)),
            dim,
        }
    }

    /// `bump(radius; x1 - c1, ..., xn - cn)` centered at `center`.
    pub fn bump_at(radius: f64, center: &[f64]) -> Self {
        let dim = center.len();
        let args = center
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c == 0.0 {
                    Arc::new(Expr::Coord(i))
                } else {
                    Arc::new(Expr::Sub(
                        Arc::new(Expr::Coord(i)),
                        Arc::new(Expr::Const(c)),
                    ))
                }
            })
            .collect();
        ScalarExpr {
            node: Arc::new(Expr::Bump {
                radius,
                args,
                factor: None,
            }),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn from_node(node: Arc<Expr>, dim: usize) -> Self {
        ScalarExpr { node, dim }
    }

    /// True for the literal constant zero (used to keep forms sparse).
    pub fn is_zero_literal(&self) -> bool {
        matches!(*self.node, Expr::Const(c) if c == 0.0)
    }

    pub fn add(&self, other: &ScalarExpr) -> ScalarExpr {
        assert_eq!(self.dim, other.dim);
        ScalarExpr::from_node(
            Arc::new(Expr::Add(self.node.clone(), other.node.clone())),
            self.dim,
        )
    }

    pub fn sub(&self, other: &ScalarExpr) -> ScalarExpr {
        assert_eq!(self.dim, other.dim);
        ScalarExpr::from_node(
            Arc::new(Expr::Sub(self.node.clone(), other.node.clone())),
            self.dim,
        )
    }

    pub fn mul(&self, other: &ScalarExpr) -> ScalarExpr {
        assert_eq!(self.dim, other.dim);
        ScalarExpr::from_node(
            Arc::new(Expr::Mul(self.node.clone(), other.node.clone())),
            self.dim,
        )
    }

    pub fn scale(&self, k: f64) -> ScalarExpr {
        if k == 1.0 {
            return self.clone();
        }
        ScalarExpr::from_node(
            Arc::new(Expr::Mul(Arc::new(Expr::Const(k)), self.node.clone())),
            self.dim,
        )
    }

    pub fn neg(&self) -> ScalarExpr {
        ScalarExpr::from_node(Arc::new(Expr::Neg(self.node.clone())), self.dim)
    }

    /// Exact symbolic partial derivative with respect to `x_i` (one-based).
    pub fn diff(&self, i: usize) -> ScalarExpr {
        assert!(
            i >= 1 && i <= self.dim,
            "coordinate index {i} out of 1..={}",
            self.dim
        );
        ScalarExpr::from_node(diff_node(&self.node, i - 1), self.dim)
    }

    /// Deterministic point evaluation. Identical input bits give
    /// identical output bits.
    pub fn eval(&self, p: &[f64]) -> Result<f64, EvalError> {
        if p.len() != self.dim {
            return Err(EvalError {
                kind: EvalErrorKind::WrongPointDimension,
                location: self.to_string(),
            });
        }
        eval_node(&self.node, p)
    }
}

fn diff_node(node: &Arc<Expr>, i: usize) -> Arc<Expr> {
    use Expr::*;
    match &**node {
        Const(_) => Arc::new(Const(0.0)),
        Coord(j) => Arc::new(Const(if *j == i { 1.0 } else { 0.0 })),
        Add(a, b) => Arc::new(Add(diff_node(a, i), diff_node(b, i))),
        Sub(a, b) => Arc::new(Sub(diff_node(a, i), diff_node(b, i))),
        Mul(a, b) => Arc::new(Add(
            Arc::new(Mul(diff_node(a, i), b.clone())),
            Arc::new(Mul(a.clone(), diff_node(b, i))),
        )),
        Div(a, b) => {
            // (a/b)' = (a' b - a b') / b^2
            let num = Arc::new(Sub(
                Arc::new(Mul(diff_node(a, i), b.clone())),
                Arc::new(Mul(a.clone(), diff_node(b, i))),
            ));
            Arc::new(Div(num, Arc::new(Pow(b.clone(), 2))))
        }
        Pow(a, k) => {
            if *k == 0 {
                return Arc::new(Const(0.0));
            }
            let lowered = Arc::new(Pow(a.clone(), k - 1));
            Arc::new(Mul(
                Arc::new(Mul(Arc::new(Const(f64::from(*k))), lowered)),
                diff_node(a, i),
            ))
        }
        Neg(a) => Arc::new(Neg(diff_node(a, i))),
        Exp(a) => Arc::new(Mul(node.clone(), diff_node(a, i))),
        Sin(a) => Arc::new(Mul(Arc::new(Cos(a.clone())), diff_node(a, i))),
        Cos(a) => Arc::new(Neg(Arc::new(Mul(Arc::new(Sin(a.clone())), diff_node(a, i))))),
        Sqrt(a) => Arc::new(Div(
            diff_node(a, i),
            Arc::new(Mul(Arc::new(Const(2.0)), node.clone())),
        )),
        Atan2(y, x) => {
            // d atan2(y, x) = (x dy - y dx) / (x^2 + y^2)
            let num = Arc::new(Sub(
                Arc::new(Mul(x.clone(), diff_node(y, i))),
                Arc::new(Mul(y.clone(), diff_node(x, i))),
            ));
            let den = Arc::new(Add(
                Arc::new(Pow(x.clone(), 2)),
                Arc::new(Pow(y.clone(), 2)),
            ));
            Arc::new(Div(num, den))
        }
        Bump {
            radius,
            args,
            factor,
        } => {
            // d/dxi [g(s) F] = g(s) * (F' - F s_i/(1-s)^2),
            // s = sum(e_j^2)/r^2,  s_i = 2/r^2 * sum(e_j e_j').
            let mut s_i: Option<Arc<Expr>> = None;
            for e in args {
                let de = diff_node(e, i);
                if matches!(*de, Const(c) if c == 0.0) {
                    continue;
                }
                let term = Arc::new(Mul(e.clone(), de));
                s_i = Some(match s_i {
                    None => term,
                    Some(acc) => Arc::new(Add(acc, term)),
                });
            }
            let s_i = match s_i {
                None => Arc::new(Const(0.0)),
                Some(sum) => Arc::new(Mul(
                    Arc::new(Const(2.0 / (radius * radius))),
                    sum,
                )),
            };
            let s = sum_of_squares(args, *radius);
            let one_minus_s = Arc::new(Sub(Arc::new(Const(1.0)), s));
            let pole_term = Arc::new(Div(s_i, Arc::new(Pow(one_minus_s, 2))));
            let f = factor.clone().unwrap_or_else(|| Arc::new(Const(1.0)));
            let new_factor = Arc::new(Sub(
                diff_node(&f, i),
                Arc::new(Mul(f, pole_term)),
            ));
            Arc::new(Bump {
                radius: *radius,
                args: args.clone(),
                factor: Some(new_factor),
            })
        }
    }
}

fn sum_of_squares(args: &[Arc<Expr>], radius: f64) -> Arc<Expr> {
    let mut acc: Option<Arc<Expr>> = None;
    for e in args {
        let sq = Arc::new(Expr::Pow(e.clone(), 2));
        acc = Some(match acc {
            None => sq,
            Some(a) => Arc::new(Expr::Add(a, sq)),
        });
    }
    let total = acc.unwrap_or_else(|| Arc::new(Expr::Const(0.0)));
    Arc::new(Expr::Div(
        total,
        Arc::new(Expr::Const(radius * radius)),
    ))
}

fn eval_node(node: &Arc<Expr>, p: &[f64]) -> Result<f64, EvalError> {
    use Expr::*;
    Ok(match &**node {
        Const(c) => *c,
        Coord(j) => p[*j],
        Add(a, b) => eval_node(a, p)? + eval_node(b, p)?,
        Sub(a, b) => eval_node(a, p)? - eval_node(b, p)?,
        Mul(a, b) => eval_node(a, p)? * eval_node(b, p)?,
        Div(a, b) => {
            let den = eval_node(b, p)?;
            if den == 0.0 {
                return Err(EvalError {
                    kind: EvalErrorKind::DivisionByZero,
                    location: print_node(node),
                });
            }
            eval_node(a, p)? / den
        }
        Pow(a, k) => {
            let base = eval_node(a, p)?;
            if *k < 0 && base == 0.0 {
                return Err(EvalError {
                    kind: EvalErrorKind::DivisionByZero,
                    location: print_node(node),
                });
            }
            base.powi(*k)
        }
        Neg(a) => -eval_node(a, p)?,
        Exp(a) => eval_node(a, p)?.exp(),
        Sin(a) => eval_node(a, p)?.sin(),
        Cos(a) => eval_node(a, p)?.cos(),
        Sqrt(a) => {
            let v = eval_node(a, p)?;
            if v < 0.0 {
                return Err(EvalError {
                    kind: EvalErrorKind::SqrtOfNegative,
                    location: print_node(node),
                });
            }
            v.sqrt()
        }
        Atan2(y, x) => eval_node(y, p)?.atan2(eval_node(x, p)?),
        Bump {
            radius,
            args,
            factor,
        } => {
            let mut s = 0.0;
            for e in args {
                let v = eval_node(e, p)?;
                s += v * v;
            }
            s /= radius * radius;
            if s >= 1.0 {
                // Short-circuit: the rational factor is never evaluated
                // outside the open support, where it may have a pole.
                0.0
            } else {
                let g = (1.0 - 1.0 / (1.0 - s)).exp();
                match factor {
                    None => g,
                    Some(f) => g * eval_node(f, p)?,
                }
            }
        }
    })
}

// --- printing ------------------------------------------------------------

fn precedence(node: &Expr) -> u8 {
    use Expr::*;
    match node {
        Add(..) | Sub(..) => 1,
        Mul(..) | Div(..) => 2,
        Neg(..) => 3,
        Pow(..) => 4,
        _ => 5,
    }
}

fn print_into(node: &Expr, out: &mut String) {
    use Expr::*;
    let prec = precedence(node);
    let child = |c: &Expr, min_prec: u8, out: &mut String| {
        if precedence(c) < min_prec {
            out.push('(');
            print_into(c, out);
            out.push(')');
        } else {
            print_into(c, out);
        }
    };
    match node {
        Const(c) => {
            if *c < 0.0 {
                out.push_str(&format!("({c})"));
            } else {
                out.push_str(&format!("{c}"));
            }
        }
        Coord(j) => out.push_str(&format!("x{}", j + 1)),
        Add(a, b) => {
            child(a, prec, out);
            out.push_str(" + ");
            child(b, prec + 1, out);
        }
        Sub(a, b) => {
            child(a, prec, out);
            out.push_str(" - ");
            child(b, prec + 1, out);
        }
        Mul(a, b) => {
            child(a, prec, out);
            out.push('*');
            child(b, prec + 1, out);
        }
        Div(a, b) => {
            child(a, prec, out);
            out.push('/');
            child(b, prec + 1, out);
        }
        Pow(a, k) => {
            child(a, prec + 1, out);
            if *k < 0 {
                out.push_str(&format!("^({k})"));
            } else {
                out.push_str(&format!("^{k}"));
            }
        }
        Neg(a) => {
            out.push('-');
            child(a, prec + 1, out);
        }
        Exp(a) => fn_call("exp", &[a], out),
        Sin(a) => fn_call("sin", &[a], out),
        Cos(a) => fn_call("cos", &[a], out),
        Sqrt(a) => fn_call("sqrt", &[a], out),
        Atan2(y, x) => fn_call("atan2", &[y, x], out),
        Bump {
            radius,
            args,
            factor,
        } => {
            let print_bump = |out: &mut String| {
                out.push_str(&format!("bump({radius}; "));
                for (i, e) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    print_into(e, out);
                }
                out.push(')');
            };
            match factor {
                None => print_bump(out),
                Some(f) => {
                    print_bump(out);
                    out.push_str("*(");
                    print_into(f, out);
                    out.push(')');
                }
            }
        }
    }
}

fn fn_call(name: &str, args: &[&Arc<Expr>], out: &mut String) {
    out.push_str(name);
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        print_into(a, out);
    }
    out.push(')');
}

fn print_node(node: &Arc<Expr>) -> String {
    let mut s = String::new();
    print_into(node, &mut s);
    s
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_node(&self.node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, dim: usize) -> ScalarExpr {
        ScalarExpr::parse(text, dim).unwrap()
    }

    fn ev(e: &ScalarExpr, pt: &[f64]) -> f64 {
        e.eval(pt).unwrap()
    }

    #[test]
    fn polynomial_arithmetic() {
        assert_eq!(ev(&p("x*y + 2", 2), &[3.0, 4.0]), 14.0);
    }

    #[test]
    fn dtheta_dx_coefficient() {
        let e = p("(-y/(x^2+y^2))", 2);
        assert_eq!(ev(&e, &[1.0, 0.0]), 0.0);
        assert_eq!(ev(&e, &[0.0, 1.0]), -1.0);
    }

    #[test]
    fn bump_values() {
        let e = p("bump(1; x, y)", 2);
        // closed form: exp(1 - 1/(1-s)), s = (x^2+y^2), zero for s >= 1
        assert_eq!(ev(&e, &[0.0, 0.0]), 1.0);
        assert_eq!(ev(&e, &[1.0, 0.0]), 0.0);
        assert_eq!(ev(&e, &[2.0, 0.0]), 0.0);
        let s: f64 = 0.25;
        let expect = (1.0 - 1.0 / (1.0 - s)).exp();
        assert!((ev(&e, &[0.5, 0.0]) - expect).abs() < 1e-15);
    }

    #[test]
    fn simple_partials() {
        let e = p("x*y^2", 2);
        assert_eq!(ev(&e.diff(2), &[2.0, 3.0]), 12.0);
    }

    #[test]
    fn mixed_partials_of_atan2_commute() {
        let e = p("atan2(y, x)", 2);
        let dxy = e.diff(1).diff(2);
        let dyx = e.diff(2).diff(1);
        let v = ev(&dxy, &[1.0, 1.0]) - ev(&dyx, &[1.0, 1.0]);
        assert!(v.abs() < 1e-12, "mixed partial gap {v:e}");
    }

    #[test]
    fn bump_derivative_at_max_and_outside() {
        let e = p("bump(1; x)", 1);
        let de = e.diff(1);
        assert_eq!(ev(&de, &[0.0]), 0.0);
        assert_eq!(ev(&de, &[1.5]), 0.0);
        // finite-difference oracle at a regular point
        let h = 1e-6;
        let x = 0.5;
        let fd = (ev(&e, &[x + h]) - ev(&e, &[x - h])) / (2.0 * h);
        let sym = ev(&de, &[x]);
        assert!(
            (sym - fd).abs() <= 1e-5 * sym.abs().max(1.0),
            "sym {sym} vs fd {fd}"
        );
    }

    #[test]
    fn bump_derivatives_vanish_across_support_edge() {
        // All derivatives up to order 3 are 0 for s >= 1 and continuous
        // across s = 1.
        let e = p("bump(1; x)", 1);
        let mut d = e.clone();
        for _ in 0..3 {
            d = d.diff(1);
            for x in [1.0, 1.0 + 1e-8, 1.5, 7.0] {
                assert_eq!(ev(&d, &[x]), 0.0, "order at x={x}");
            }
            let inside = ev(&d, &[1.0 - 1e-8]);
            assert!(inside.abs() <= 1e-6, "straddle value {inside:e}");
        }
    }

    #[test]
    fn evaluate_basics() {
        assert_eq!(ev(&p("exp(0*x)", 1), &[5.0]), 1.0);
        let v = ev(&p("atan2(y, x)", 2), &[0.0, 1.0]);
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let err = p("1/x", 1).eval(&[0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
        assert!(err.location.contains("1/x"), "location: {}", err.location);
    }

    #[test]
    fn diff_against_finite_differences_on_random_polynomials() {
        // 200 random polynomial expressions, relative error <= 1e-5 at
        // step 1e-6.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..200 {
            let dim = 1 + (next() % 3) as usize;
            let n_terms = 1 + (next() % 4) as usize;
            let mut text = String::new();
            for t in 0..n_terms {
                if t > 0 {
                    text.push_str(" + ");
                }
                let c = (next() % 9) as f64 - 4.0;
                text.push_str(&format!("({c})"));
                for v in 0..dim {
                    let k = next() % 4;
                    if k > 0 {
                        text.push_str(&format!("*x{}^{}", v + 1, k));
                    }
                }
            }
            let e = p(&text, dim);
            let pt: Vec<f64> = (0..dim)
                .map(|_| ((next() % 2000) as f64 / 1000.0) - 1.0)
                .collect();
            for i in 1..=dim {
                let h = 1e-6;
                let mut hi = pt.clone();
                let mut lo = pt.clone();
                hi[i - 1] += h;
                lo[i - 1] -= h;
                let fd = (ev(&e, &hi) - ev(&e, &lo)) / (2.0 * h);
                let sym = ev(&e.diff(i), &pt);
                let scale = sym.abs().max(fd.abs()).max(1.0);
                assert!(
                    (sym - fd).abs() <= 1e-5 * scale,
                    "trial {trial} `{text}` d{i}: sym {sym} fd {fd}"
                );
            }
        }
    }

    #[test]
    fn print_parse_round_trip() {
        let cases = [
            ("x*y + 2", 2),
            ("(-y/(x^2+y^2))", 2),
            ("bump(0.25; x - 0.5, y)", 2),
            ("atan2(y, x) + sqrt(x^2 + 1)", 2),
            ("sin(x)*cos(y) - exp(x*y)/(1 + x^2)", 2),
            ("2^3 + x^(-2)", 1),
            ("-x^2", 1),
        ];
        let mut state = 0x51ed2701u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state
        };
        for (text, dim) in cases {
            let e = p(text, dim);
            let reparsed = p(&e.to_string(), dim);
            for _ in 0..50 {
                let pt: Vec<f64> = (0..dim)
                    .map(|_| ((next() >> 16) % 1600) as f64 / 1000.0 + 0.2)
                    .collect();
                let a = ev(&e, &pt);
                let b = ev(&reparsed, &pt);
                assert_eq!(a.to_bits(), b.to_bits(), "`{text}` printed `{e}` at {pt:?}");
            }
        }
    }

    #[test]
    fn differentiated_bump_round_trips_at_regular_points() {
        let e = p("bump(0.5; x, y)", 2).diff(1).diff(2);
        let reparsed = p(&e.to_string(), 2);
        for pt in [[0.1, 0.2], [0.3, -0.1], [0.9, 0.9], [0.0, 0.0]] {
            assert_eq!(
                ev(&e, &pt).to_bits(),
                ev(&reparsed, &pt).to_bits(),
                "at {pt:?}"
            );
        }
    }

    #[test]
    fn schwarz_symmetry_by_sampling() {
        let e = p("bump(0.8; x, y)*sin(x*y) + x^3*y", 2);
        let dxy = e.diff(1).diff(2);
        let dyx = e.diff(2).diff(1);
        for ix in 0..7 {
            for iy in 0..7 {
                let pt = [ix as f64 * 0.1 - 0.3, iy as f64 * 0.1 - 0.3];
                let a = ev(&dxy, &pt);
                let b = ev(&dyx, &pt);
                assert!(
                    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0),
                    "at {pt:?}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert!(ScalarExpr::parse("z", 2).is_err());
        assert!(ScalarExpr::parse("x3", 2).is_err());
        assert!(ScalarExpr::parse("x1 + x2", 2).is_ok());
    }
}
