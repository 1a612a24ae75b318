//! Polynomial expression grammar used in system files.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | '+' unary | power
//! power := atom ('^' integer)?
//! atom  := number | name | '(' expr ')'
//! ```
//! Numbers accept decimals and exponents (`1.5e-3`); `a/b` needs a constant
//! divisor. Names are `tau`, `rhoK`, `etaK` or constants from the file.

use std::collections::BTreeMap;

use crate::poly::{Polynomial, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub col: usize,
    pub msg: String,
    pub unknown: Option<String>,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    constants: &'a BTreeMap<String, f64>,
    allowed: &'a dyn Fn(Var) -> bool,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            col: self.pos + 1,
            msg: msg.into(),
            unknown: None,
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Polynomial, ExprError> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == b'+' { acc.add(&rhs) } else { acc.sub(&rhs) };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, ExprError> {
        let mut acc = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let at = self.pos;
            let rhs = self.unary()?;
            if c == b'*' {
                acc = acc.mul(&rhs);
            } else {
                match rhs.as_constant() {
                    Some(d) if d != 0.0 => acc = acc.scale(1.0 / d),
                    Some(_) => {
                        self.pos = at;
                        return self.err("division by zero");
                    }
                    None => {
                        self.pos = at;
                        return self.err("divisor must be a constant");
                    }
                }
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let Ok(k) = text.parse::<u32>() else {
                self.pos = start;
                return self.err("expected a nonnegative integer exponent");
            };
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of expression"),
        }
    }

    fn number(&mut self) -> Result<Polynomial, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => Ok(Polynomial::constant(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("malformed number '{text}'"))
            }
        }
    }

    fn name(&mut self) -> Result<Polynomial, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_alphanumeric() || s[self.pos] == b'_') {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        if let Some(&v) = self.constants.get(text) {
            return Ok(Polynomial::constant(v));
        }
        match Var::parse(text) {
            Some(v) if (self.allowed)(v) => Ok(Polynomial::var(v)),
            _ => Err(ExprError {
                col: start + 1,
                msg: format!("unknown variable '{text}'"),
                unknown: Some(text.to_string()),
            }),
        }
    }
}

/// Parses `text` into a polynomial. `allowed` filters which variables may appear.
pub fn parse_expr(
    text: &str,
    constants: &BTreeMap<String, f64>,
    allowed: &dyn Fn(Var) -> bool,
) -> Result<Polynomial, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        constants,
        allowed,
    };
    let out = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(out)
}
