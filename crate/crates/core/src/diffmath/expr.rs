//! Small expression language for closed-form charts, e.g. `"0.1*sin(3*u)"`.
//!
//! Variables are `u` (ξ¹) and `v` (ξ²). Any identifier followed by a
//! parenthesised argument parses as a call; only the engine's primitives
//! (`sin`, `cos`, `sqrt`, `recip`) evaluate, anything else is a capability
//! error at evaluation time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::jet::Jet;
use super::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(String, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { s: src.as_bytes(), pos: 0, src };
        let e = p.sum()?;
        p.ws();
        if p.pos != p.s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    pub fn eval<S: Scalar>(&self, xi: &[Jet<S>; 2]) -> Result<Jet<S>> {
        Ok(match self {
            Expr::Const(c) => Jet::constant(S::from_f64(*c)),
            Expr::Var(i) => xi[*i],
            Expr::Add(a, b) => a.eval(xi)? + b.eval(xi)?,
            Expr::Sub(a, b) => a.eval(xi)? - b.eval(xi)?,
            Expr::Mul(a, b) => a.eval(xi)? * b.eval(xi)?,
            Expr::Div(a, b) => a.eval(xi)? * b.eval(xi)?.recip_jet(),
            Expr::Neg(a) => -a.eval(xi)?,
            Expr::Call(name, arg) => {
                let x = arg.eval(xi)?;
                match name.as_str() {
                    "sin" => x.sin_jet(),
                    "cos" => x.cos_jet(),
                    "sqrt" => x.sqrt_jet(),
                    "recip" => x.recip_jet(),
                    other => return Err(Error::Unsupported(other.to_string())),
                }
            }
        })
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, why: &str) -> Error {
        Error::parse(format!("expression `{}` at {}", self.src, self.pos), why)
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'-' || c == b'+')
                        && self.pos > start
                        && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text = &self.src[start..self.pos];
                text.parse::<f64>().map(Expr::Const).map_err(|_| self.err("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len()
                    && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    let arg = self.sum()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected `)` after call argument"));
                    }
                    self.pos += 1;
                    return Ok(Expr::Call(name.to_string(), Box::new(arg)));
                }
                match name {
                    "u" => Ok(Expr::Var(0)),
                    "v" => Ok(Expr::Var(1)),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    _ => Err(self.err("unknown identifier")),
                }
            }
            _ => Err(self.err("unexpected token")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(u: f64, v: f64) -> [Jet<f64>; 2] {
        [Jet::variable(u, 0), Jet::variable(v, 1)]
    }

    #[test]
    fn parses_and_differentiates() {
        let e = Expr::parse("0.5*u*u + sin(2*v) - 1e-1/ (1+u)").unwrap();
        let j = e.eval(&at(1.0, 0.25)).unwrap();
        let expect = 0.5 + (0.5f64).sin() - 0.1 / 2.0;
        assert!((j.v - expect).abs() < 1e-15);
        assert!((j.d[0] - (1.0 + 0.1 / 4.0)).abs() < 1e-15);
        assert!((j.dd[2] + 4.0 * (0.5f64).sin()).abs() < 1e-14);
    }

    #[test]
    fn unknown_function_is_capability_error() {
        let e = Expr::parse("exp(u)").unwrap();
        match e.eval(&at(0.0, 0.0)) {
            Err(Error::Unsupported(name)) => assert_eq!(name, "exp"),
            other => panic!("expected capability error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("u +").is_err());
        assert!(Expr::parse("w").is_err());
        assert!(Expr::parse("(u").is_err());
    }
}
