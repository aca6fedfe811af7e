//! A small expression language over one real variable `x`.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp
//! ```
//!
//! Exponents must fold to integer constants so that every expression stays in
//! the polynomial/trigonometric class and has an exact symbolic derivative.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Powi(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { s: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input at byte {} in {src:?}",
                p.pos
            )));
        }
        Ok(e)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Powi(a, n) => a.eval(x).powi(*n),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn derivative(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::X => Expr::Const(1.0),
            Expr::Neg(a) => neg(a.derivative()),
            Expr::Add(a, b) => add(a.derivative(), b.derivative()),
            Expr::Sub(a, b) => sub(a.derivative(), b.derivative()),
            Expr::Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Expr::Div(a, b) => {
                let num = sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                );
                div(num, powi((**b).clone(), 2))
            }
            Expr::Powi(a, n) => {
                let inner = mul(Expr::Const(*n as f64), powi((**a).clone(), n - 1));
                mul(inner, a.derivative())
            }
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.derivative()),
            Expr::Cos(a) => mul(neg(Expr::Sin(a.clone())), a.derivative()),
            Expr::Exp(a) => mul(Expr::Exp(a.clone()), a.derivative()),
        }
    }

    /// `self + sum_i coeffs[i] * terms[i]`, used to assemble corrected perturbations.
    pub fn linear_combination(&self, coeffs: &[f64], terms: &[Expr]) -> Expr {
        let mut out = self.clone();
        for (t, e) in coeffs.iter().zip(terms) {
            out = add(out, mul(Expr::Const(*t), e.clone()));
        }
        out
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Const(x / y),
        (Some(x), _) if x == 0.0 => Expr::Const(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn powi(a: Expr, n: i32) -> Expr {
    match (a.as_const(), n) {
        (_, 0) => Expr::Const(1.0),
        (_, 1) => a,
        (Some(x), _) => Expr::Const(x.powi(n)),
        _ => Expr::Powi(Box::new(a), n),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::X => write!(f, "x"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Div(a, b) => write!(f, "{a}/{b}"),
            Expr::Powi(a, n) => write!(f, "{a}^{n}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Expr(format!("{msg} at byte {}", self.pos)))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = add(lhs, self.term()?);
            } else if self.eat(b'-') {
                lhs = sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = mul(lhs, self.unary()?);
            } else if self.eat(b'/') {
                lhs = div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(neg(self.unary()?));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            let Some(n) = exp.as_const() else {
                return self.err("exponent must be a constant integer");
            };
            if n.fract() != 0.0 || n.abs() > 64.0 {
                return self.err("exponent must be an integer in [-64, 64]");
            }
            return Ok(powi(base, n as i32));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                match word {
                    "x" => Ok(Expr::X),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    "sin" | "cos" | "exp" => {
                        if !self.eat(b'(') {
                            return self.err("expected '(' after function name");
                        }
                        let arg = self.expr()?;
                        if !self.eat(b')') {
                            return self.err("expected ')'");
                        }
                        Ok(match (word, arg.as_const()) {
                            ("sin", Some(c)) => Expr::Const(c.sin()),
                            ("cos", Some(c)) => Expr::Const(c.cos()),
                            ("exp", Some(c)) => Expr::Const(c.exp()),
                            ("sin", None) => Expr::Sin(Box::new(arg)),
                            ("cos", None) => Expr::Cos(Box::new(arg)),
                            _ => Expr::Exp(Box::new(arg)),
                        })
                    }
                    other => Err(Error::Expr(format!("unknown identifier {other:?}"))),
                }
            }
            Some(c) => self.err(&format!("unexpected character {:?}", c as char)),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.s.len() && (self.s[self.pos] == b'e' || self.s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.s.len() && (self.s[self.pos] == b'+' || self.s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                // a bare `e` after a number is the constant, not an exponent
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::Expr(format!("bad number {text:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn parses_polynomials() {
        let e = Expr::parse("x*(1-x)").unwrap();
        assert!(close(e.eval(0.25), 0.1875));
        let e = Expr::parse("2x").err();
        assert!(e.is_some());
        let e = Expr::parse("x^3 - 2*x^2 + 1e-1").unwrap();
        assert!(close(e.eval(2.0), 0.1));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-x^2").unwrap();
        assert!(close(e.eval(3.0), -9.0));
        let e = Expr::parse("1 - 2 - 3").unwrap();
        assert!(close(e.eval(0.0), -4.0));
        let e = Expr::parse("8 / 2 / 2").unwrap();
        assert!(close(e.eval(0.0), 2.0));
    }

    #[test]
    fn trig_and_constants() {
        let e = Expr::parse("sin(pi*x)").unwrap();
        assert!(close(e.eval(0.5), 1.0));
        let d = e.derivative();
        assert!(close(d.eval(0.0), std::f64::consts::PI));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for src in ["x*(1-x)", "x^3*(1-x)", "cos(2*x)*x", "exp(x)/(1+x^2)", "sin(pi*x)^2"] {
            let e = Expr::parse(src).unwrap();
            let d = e.derivative();
            let dd = d.derivative();
            for &x in &[0.1, 0.37, 0.8] {
                let h = 1e-5;
                let fd = (e.eval(x + h) - e.eval(x - h)) / (2.0 * h);
                assert!((fd - d.eval(x)).abs() < 1e-7, "{src} at {x}");
                let fd2 = (d.eval(x + h) - d.eval(x - h)) / (2.0 * h);
                assert!((fd2 - dd.eval(x)).abs() < 1e-6, "{src}'' at {x}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        for src in ["", "x +", "foo(x)", "x^0.5", "x^x", "(x", "x)"] {
            assert!(Expr::parse(src).is_err(), "{src}");
        }
    }

    #[test]
    fn constant_derivative_is_zero() {
        assert!(Expr::parse("3.5").unwrap().derivative().is_zero());
        assert!(Expr::parse("2*pi").unwrap().derivative().is_zero());
    }
}
