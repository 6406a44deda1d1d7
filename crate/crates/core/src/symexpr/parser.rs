//! Recursive-descent parser for the expression grammar.
//!
//! Precedence, loosest to tightest: `+ -`, `* /`, unary minus, `^`
//! (integer exponent, right operand parsed as a unary expression and
//! required to be a constant integer). Function calls use the usual
//! `name(arg, ...)` syntax; `bump` uses `bump(radius; e1, ..., em)`.

use std::fmt;
use std::sync::Arc;

use super::{eval_node, Expr, ScalarExpr};

/// Syntax error with a byte position into the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub message: String,
    pub position: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Semi,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, message: impl Into<String>, position: usize) -> ParseError {
        ParseError {
            message: message.into(),
            position,
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let start = self.pos;
            let c = self.src[self.pos];
            match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    self.pos += 1;
                }
                b'+' => {
                    out.push((Tok::Plus, start));
                    self.pos += 1;
                }
                b'-' => {
                    out.push((Tok::Minus, start));
                    self.pos += 1;
                }
                b'*' => {
                    out.push((Tok::Star, start));
                    self.pos += 1;
                }
                b'/' => {
                    out.push((Tok::Slash, start));
                    self.pos += 1;
                }
                b'^' => {
                    out.push((Tok::Caret, start));
                    self.pos += 1;
                }
                b'(' => {
                    out.push((Tok::LParen, start));
                    self.pos += 1;
                }
                b')' => {
                    out.push((Tok::RParen, start));
                    self.pos += 1;
                }
                b',' => {
                    out.push((Tok::Comma, start));
                    self.pos += 1;
                }
                b';' => {
                    out.push((Tok::Semi, start));
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if self.pos < self.src.len() && self.src[self.pos] == b'.' {
                        self.pos += 1;
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    }
                    if self.pos < self.src.len()
                        && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E')
                    {
                        let mark = self.pos;
                        self.pos += 1;
                        if self.pos < self.src.len()
                            && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
                        {
                            self.pos += 1;
                        }
                        if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit()
                            {
                                self.pos += 1;
                            }
                        } else {
                            // not an exponent after all ("e" belongs to an identifier?)
                            self.pos = mark;
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    let value: f64 = text
                        .parse()
                        .map_err(|_| self.error(format!("bad number literal `{text}`"), start))?;
                    out.push((Tok::Num(value), start));
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                    {
                        self.pos += 1;
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    out.push((Tok::Ident(text.to_string()), start));
                }
                _ => {
                    return Err(self.error(format!("unexpected character `{}`", c as char), start));
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    end: usize,
}

pub fn parse(text: &str, dim: usize) -> Result<ScalarExpr, ParseError> {
    if dim == 0 {
        return Err(ParseError {
            message: "ambient dimension must be at least 1".into(),
            position: 0,
        });
    }
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        dim,
        end: text.len(),
    };
    let node = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(ParseError {
            message: "trailing input after expression".into(),
            position: p.toks[p.pos].1,
        });
    }
    Ok(ScalarExpr::from_node(node, dim))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn bump_tok(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let at = self.here();
        match self.bump_tok() {
            Some(t) if t == want => Ok(()),
            _ => Err(ParseError {
                message: format!("expected {what}"),
                position: at,
            }),
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Arc::new(Expr::Add(lhs, rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Arc::new(Expr::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Arc::new(Expr::Mul(lhs, rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Arc::new(Expr::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Arc<Expr>, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Arc::new(Expr::Neg(inner)));
        }
        self.power()
    }

    // power := atom ('^' unary)?   with the exponent a constant integer
    fn power(&mut self) -> Result<Arc<Expr>, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            let at = self.here();
            let exp_node = self.unary()?;
            let k = constant_integer(&exp_node).ok_or(ParseError {
                message: "exponent must be a constant integer".into(),
                position: at,
            })?;
            return Ok(Arc::new(Expr::Pow(base, k)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Arc<Expr>, ParseError> {
        let at = self.here();
        match self.bump_tok() {
            Some(Tok::Num(v)) => Ok(Arc::new(Expr::Const(v))),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => self.ident(name, at),
            _ => Err(ParseError {
                message: "expected a number, coordinate, function call, or `(`".into(),
                position: at,
            }),
        }
    }

    fn ident(&mut self, name: String, at: usize) -> Result<Arc<Expr>, ParseError> {
        if let Some(idx) = self.coordinate_index(&name) {
            if idx >= self.dim {
                return Err(ParseError {
                    message: format!(
                        "coordinate `{name}` is outside x1..x{} (dim = {})",
                        self.dim, self.dim
                    ),
                    position: at,
                });
            }
            return Ok(Arc::new(Expr::Coord(idx)));
        }
        match name.as_str() {
            "exp" | "sin" | "cos" | "sqrt" => {
                let args = self.call_args()?;
                if args.len() != 1 {
                    return Err(ParseError {
                        message: format!("`{name}` takes exactly 1 argument, got {}", args.len()),
                        position: at,
                    });
                }
                let a = args.into_iter().next().unwrap();
                Ok(Arc::new(match name.as_str() {
                    "exp" => Expr::Exp(a),
                    "sin" => Expr::Sin(a),
                    "cos" => Expr::Cos(a),
                    _ => Expr::Sqrt(a),
                }))
            }
            "atan2" => {
                let args = self.call_args()?;
                if args.len() != 2 {
                    return Err(ParseError {
                        message: format!("`atan2` takes exactly 2 arguments, got {}", args.len()),
                        position: at,
                    });
                }
                let mut it = args.into_iter();
                let y = it.next().unwrap();
                let x = it.next().unwrap();
                Ok(Arc::new(Expr::Atan2(y, x)))
            }
            "bump" => self.bump_call(at),
            _ => Err(ParseError {
                message: format!("unknown identifier `{name}`"),
                position: at,
            }),
        }
    }

    fn coordinate_index(&self, name: &str) -> Option<usize> {
        if self.dim <= 3 {
            match name {
                "x" => return Some(0),
                "y" => return Some(1),
                "z" => return Some(2),
                _ => {}
            }
        }
        let rest = name.strip_prefix('x')?;
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let n: usize = rest.parse().ok()?;
        if n == 0 {
            return None;
        }
        Some(n - 1)
    }

    fn call_args(&mut self) -> Result<Vec<Arc<Expr>>, ParseError> {
        self.expect(Tok::LParen, "`(` after function name")?;
        let mut args = vec![self.expr()?];
        while matches!(self.peek(), Some(Tok::Comma)) {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "closing `)`")?;
        Ok(args)
    }

    // bump(radius; e1, ..., em): radius is a constant expression > 0
    fn bump_call(&mut self, at: usize) -> Result<Arc<Expr>, ParseError> {
        self.expect(Tok::LParen, "`(` after `bump`")?;
        let r_at = self.here();
        let r_node = self.expr()?;
        let radius = constant_value(&r_node).ok_or(ParseError {
            message: "bump radius must be a constant".into(),
            position: r_at,
        })?;
        if !(radius > 0.0) {
            return Err(ParseError {
                message: format!("bump radius must be positive, got {radius}"),
                position: r_at,
            });
        }
        self.expect(Tok::Semi, "`;` after the bump radius")?;
        let mut args = vec![self.expr()?];
        while matches!(self.peek(), Some(Tok::Comma)) {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "closing `)`")?;
        if args.is_empty() {
            return Err(ParseError {
                message: "bump needs at least one argument after the radius".into(),
                position: at,
            });
        }
        Ok(Arc::new(Expr::Bump {
            radius,
            args,
            factor: None,
        }))
    }
}

/// Value of a coordinate-free subtree, if it is one.
fn constant_value(node: &Arc<Expr>) -> Option<f64> {
    fn has_coord(node: &Expr) -> bool {
        use Expr::*;
        match node {
            Const(_) => false,
            Coord(_) => true,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Atan2(a, b) => {
                has_coord(a) || has_coord(b)
            }
            Pow(a, _) | Neg(a) | Exp(a) | Sin(a) | Cos(a) | Sqrt(a) => has_coord(a),
            Bump { args, factor, .. } => {
                args.iter().any(|a| has_coord(a))
                    || factor.as_ref().is_some_and(|f| has_coord(f))
            }
        }
    }
    if has_coord(node) {
        return None;
    }
    eval_node(node, &[]).ok()
}

fn constant_integer(node: &Arc<Expr>) -> Option<i32> {
    let v = constant_value(node)?;
    if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
        return None;
    }
    Some(v as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_error_positions() {
        let err = parse("x + ", 1).unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse("x + $", 1).unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse("foo(x)", 1).unwrap_err();
        assert!(err.message.contains("unknown identifier"));
        let err = parse("atan2(x)", 1).unwrap_err();
        assert!(err.message.contains("2 arguments"));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse("-x^2", 1).unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0);
        let e = parse("2 - 3 - 4", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), -5.0);
        let e = parse("2*x^2 + 1", 1).unwrap();
        assert_eq!(e.eval(&[2.0]).unwrap(), 9.0);
        let e = parse("x^(-2)", 1).unwrap();
        assert_eq!(e.eval(&[2.0]).unwrap(), 0.25);
    }

    #[test]
    fn rejects_non_integer_exponents() {
        assert!(parse("x^0.5", 1).is_err());
        assert!(parse("x^y", 2).is_err());
        assert!(parse("x^(1+1)", 1).is_ok());
    }

    #[test]
    fn bump_grammar() {
        assert!(parse("bump(1; x, y)", 2).is_ok());
        assert!(parse("bump(0.5; x - 0.25)", 1).is_ok());
        assert!(parse("bump(x; x)", 1).is_err());
        assert!(parse("bump(-1; x)", 1).is_err());
        assert!(parse("bump(1)", 1).is_err());
    }

    #[test]
    fn high_dimensional_coordinates() {
        let e = parse("x4^2 + x1", 5).unwrap();
        assert_eq!(e.eval(&[1.0, 0.0, 0.0, 3.0, 0.0]).unwrap(), 10.0);
        // aliases only exist for dim <= 3
        assert!(parse("x", 4).is_err());
        assert!(parse("x1", 4).is_ok());
    }
}
