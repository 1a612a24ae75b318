//! Multivariate polynomials with `f64` coefficients over interned variables.
//!
//! Variables are small integer ids. Id `0` is the dwell clock `tau`,
//! ids `1..=127` are the parameters `rho1..rho127` and ids `128..` are the
//! post-jump copies `eta1..`. Terms are kept in graded-lexicographic order and
//! coefficients below [`COEFF_EPS`] are dropped after every operation.

mod matrix;

pub use matrix::PolyMatrix;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use smallvec::SmallVec;
use thiserror::Error;

/// Coefficients with absolute value below this are removed during canonicalization.
pub const COEFF_EPS: f64 = 1e-12;

const ETA_BASE: u16 = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: {op} of {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("variable `{0}` missing from assignment")]
    MissingVariable(String),
}

/// An interned variable id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u16);

impl Var {
    pub const TAU: Var = Var(0);

    /// Parameter `rho{i+1}` (zero-based index).
    pub fn rho(i: usize) -> Var {
        assert!(i < (ETA_BASE - 1) as usize, "too many parameters");
        Var(1 + i as u16)
    }

    /// Post-jump parameter copy `eta{i+1}` (zero-based index).
    pub fn eta(i: usize) -> Var {
        Var(ETA_BASE + i as u16)
    }

    /// Zero-based parameter index for `rho` variables.
    pub fn rho_index(self) -> Option<usize> {
        (self.0 >= 1 && self.0 < ETA_BASE).then(|| (self.0 - 1) as usize)
    }

    pub fn eta_index(self) -> Option<usize> {
        (self.0 >= ETA_BASE).then(|| (self.0 - ETA_BASE) as usize)
    }

    pub fn name(self) -> String {
        match self.0 {
            0 => "tau".to_string(),
            i if i < ETA_BASE => format!("rho{i}"),
            i => format!("eta{}", i - ETA_BASE + 1),
        }
    }

    pub fn parse(name: &str) -> Option<Var> {
        if name == "tau" {
            return Some(Var::TAU);
        }
        let idx = |rest: &str| rest.parse::<usize>().ok().filter(|&i| i >= 1);
        if let Some(i) = name.strip_prefix("rho").and_then(idx) {
            return (i < ETA_BASE as usize).then(|| Var::rho(i - 1));
        }
        if let Some(i) = name.strip_prefix("eta").and_then(idx) {
            return Some(Var::eta(i - 1));
        }
        None
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A monomial: sorted `(variable, exponent)` pairs with no zero exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    powers: SmallVec<[(Var, u32); 4]>,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(v: Var) -> Self {
        Self::from_powers([(v, 1)])
    }

    /// Builds a monomial from arbitrary pairs; repeated variables are merged.
    pub fn from_powers(pairs: impl IntoIterator<Item = (Var, u32)>) -> Self {
        let mut powers: SmallVec<[(Var, u32); 4]> = pairs.into_iter().filter(|p| p.1 > 0).collect();
        powers.sort_by_key(|p| p.0);
        let mut merged: SmallVec<[(Var, u32); 4]> = SmallVec::new();
        for (v, e) in powers {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += e,
                _ => merged.push((v, e)),
            }
        }
        Self { powers: merged }
    }

    pub fn powers(&self) -> &[(Var, u32)] {
        &self.powers
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().map(|p| p.1).sum()
    }

    pub fn exponent(&self, v: Var) -> u32 {
        self.powers
            .iter()
            .find(|p| p.0 == v)
            .map_or(0, |p| p.1)
    }

    pub fn is_one(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.powers.iter().map(|p| p.0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.powers, &other.powers);
        let mut out: SmallVec<[(Var, u32); 4]> = SmallVec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial { powers: out }
    }

    /// Removes `v` entirely, returning its exponent and the remaining monomial.
    pub fn split_off(&self, v: Var) -> (u32, Monomial) {
        let mut rest = self.clone();
        let e = match rest.powers.iter().position(|p| p.0 == v) {
            Some(k) => rest.powers.remove(k).1,
            None => 0,
        };
        (e, rest)
    }

    /// Renames variables through `f`; used to move `rho` into `eta`.
    pub fn rename(&self, f: impl Fn(Var) -> Var) -> Monomial {
        Monomial::from_powers(self.powers.iter().map(|&(v, e)| (f(v), e)))
    }

    pub fn eval(&self, point: &dyn Fn(Var) -> Option<f64>) -> Result<f64, PolyError> {
        let mut acc = 1.0;
        for &(v, e) in &self.powers {
            let x = point(v).ok_or_else(|| PolyError::MissingVariable(v.name()))?;
            acc *= x.powi(e as i32);
        }
        Ok(acc)
    }

    /// All monomials in `vars` with total degree at most `max_degree`, in graded-lex order.
    pub fn all_up_to(vars: &[Var], max_degree: u32) -> Vec<Monomial> {
        fn rec(vars: &[Var], left: u32, cur: &mut Vec<(Var, u32)>, out: &mut Vec<Monomial>) {
            match vars.split_first() {
                None => out.push(Monomial::from_powers(cur.iter().copied())),
                Some((&v, rest)) => {
                    for e in 0..=left {
                        cur.push((v, e));
                        rec(rest, left - e, cur, out);
                        cur.pop();
                    }
                }
            }
        }
        let mut vs = vars.to_vec();
        vs.sort();
        vs.dedup();
        let mut out = Vec::new();
        rec(&vs, max_degree, &mut Vec::new(), &mut out);
        out.sort();
        out
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: total degree first, then lexicographic with lower
    /// variable ids ranking higher.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        let (a, b) = (&self.powers, &other.powers);
        let (mut i, mut j) = (0, 0);
        loop {
            match (a.get(i), b.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va != vb {
                        // the monomial holding the smaller variable id has the larger exponent there
                        return if va < vb { Ordering::Greater } else { Ordering::Less };
                    }
                    if ea != eb {
                        return ea.cmp(&eb);
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.powers.is_empty() {
            return f.write_str("1");
        }
        for (k, &(v, e)) in self.powers.iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            if e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

/// A polynomial as a canonical map from monomials to nonzero coefficients.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms([(Monomial::one(), c)])
    }

    pub fn var(v: Var) -> Self {
        Self::from_terms([(Monomial::var(v), 1.0)])
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            *map.entry(m).or_insert(0.0) += c;
        }
        let mut p = Self { terms: map };
        p.canonicalize();
        p
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| c.abs() >= COEFF_EPS);
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: Var) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    /// Variables appearing with nonzero exponent, sorted by id.
    pub fn variables(&self) -> Vec<Var> {
        let mut vs: Vec<Var> = self.terms.keys().flat_map(|m| m.vars()).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&Monomial::one()).copied(),
            _ => None,
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.axpy(-1.0, other)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Polynomial) -> Polynomial {
        let mut terms = self.terms.clone();
        for (m, &c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += alpha * c;
        }
        let mut p = Polynomial { terms };
        p.canonicalize();
        p
    }

    pub fn scale(&self, alpha: f64) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, &c)| (m.clone(), alpha * c)))
    }

    pub fn neg(&self) -> Polynomial {
        self.scale(-1.0)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                *terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        let mut p = Polynomial { terms };
        p.canonicalize();
        p
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut acc = Polynomial::constant(1.0);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn differentiate(&self, v: Var) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().filter_map(|(m, &c)| {
            let (e, rest) = m.split_off(v);
            (e > 0).then(|| (rest.mul(&Monomial::from_powers([(v, e - 1)])), c * e as f64))
        }))
    }

    pub fn evaluate_with(&self, point: &dyn Fn(Var) -> Option<f64>) -> Result<f64, PolyError> {
        let mut acc = 0.0;
        for (m, &c) in &self.terms {
            acc += c * m.eval(point)?;
        }
        Ok(acc)
    }

    pub fn evaluate(&self, assignment: &BTreeMap<Var, f64>) -> Result<f64, PolyError> {
        self.evaluate_with(&|v| assignment.get(&v).copied())
    }

    /// Replaces `v` by `expr` everywhere.
    pub fn substitute(&self, v: Var, expr: &Polynomial) -> Polynomial {
        self.substitute_all(&[(v, expr.clone())])
    }

    /// Simultaneous substitution: every listed variable is replaced using the
    /// original polynomial, so replacement expressions may mention any variable.
    pub fn substitute_all(&self, subs: &[(Var, Polynomial)]) -> Polynomial {
        if subs.is_empty() {
            return self.clone();
        }
        let mut power_cache: BTreeMap<(Var, u32), Polynomial> = BTreeMap::new();
        let mut out: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, &c) in &self.terms {
            let mut kept = Vec::new();
            let mut factor = Polynomial::constant(c);
            for &(v, e) in m.powers() {
                match subs.iter().find(|s| s.0 == v) {
                    Some((_, expr)) => {
                        let pw = power_cache.entry((v, e)).or_insert_with(|| expr.pow(e));
                        factor = factor.mul(pw);
                    }
                    None => kept.push((v, e)),
                }
            }
            let kept = Monomial::from_powers(kept);
            for (fm, fc) in &factor.terms {
                *out.entry(fm.mul(&kept)).or_insert(0.0) += fc;
            }
        }
        let mut p = Polynomial { terms: out };
        p.canonicalize();
        p
    }

    pub fn rename(&self, f: impl Fn(Var) -> Var + Copy) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, &c)| (m.rename(f), c)))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }
}

impl From<f64> for Polynomial {
    fn from(c: f64) -> Self {
        Polynomial::constant(c)
    }
}

impl fmt::Display for Polynomial {
    /// Writes the polynomial in the text grammar accepted by the system-file parser.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let mag = c.abs();
            let sign = if c < 0.0 { "-" } else { "+" };
            match (k, c < 0.0) {
                (0, false) => {}
                (0, true) => f.write_str("-")?,
                _ => write!(f, " {sign} ")?,
            }
            if m.is_one() {
                write!(f, "{mag:?}")?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag:?}*{m}")?;
            }
        }
        Ok(())
    }
}
