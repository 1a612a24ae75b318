//! Polynomial matrices whose coefficients are affine in SDP scalar unknowns.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::poly::{Monomial, PolyError, PolyMatrix, Polynomial, Var, COEFF_EPS};

/// One scalar SDP unknown: entry `(i, j)`, `i <= j`, of block `block`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scalar {
    pub block: u32,
    pub i: u32,
    pub j: u32,
}

impl Scalar {
    pub fn new(block: usize, i: usize, j: usize) -> Self {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        Self {
            block: block as u32,
            i: i as u32,
            j: j as u32,
        }
    }

    pub fn value(&self, blocks: &[DMatrix<f64>]) -> f64 {
        blocks[self.block as usize][(self.i as usize, self.j as usize)]
    }
}

/// `constant + Σ coef · scalar`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: BTreeMap<Scalar, f64>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(s: Scalar) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(s, 1.0);
        Self { constant: 0.0, terms }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    pub fn axpy(&mut self, alpha: f64, other: &LinExpr) {
        self.constant += alpha * other.constant;
        for (s, c) in &other.terms {
            *self.terms.entry(*s).or_insert(0.0) += alpha * c;
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.abs() > COEFF_EPS);
        if self.constant.abs() <= COEFF_EPS {
            self.constant = 0.0;
        }
    }

    pub fn value(&self, blocks: &[DMatrix<f64>]) -> f64 {
        self.constant + self.terms.iter().map(|(s, c)| c * s.value(blocks)).sum::<f64>()
    }
}

/// Polynomial with [`LinExpr`] coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffinePoly {
    pub terms: BTreeMap<Monomial, LinExpr>,
}

impl AffinePoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = Self::zero();
        for (m, c) in p.terms() {
            out.terms.insert(m.clone(), LinExpr::constant(c));
        }
        out
    }

    pub fn add_term(&mut self, m: Monomial, alpha: f64, e: &LinExpr) {
        self.terms.entry(m).or_default().axpy(alpha, e);
    }

    pub fn axpy(&mut self, alpha: f64, other: &AffinePoly) {
        for (m, e) in &other.terms {
            self.add_term(m.clone(), alpha, e);
        }
    }

    pub fn prune(&mut self) {
        for e in self.terms.values_mut() {
            e.prune();
        }
        self.terms.retain(|_, e| !e.is_zero());
    }

    pub fn mul_poly(&self, p: &Polynomial) -> AffinePoly {
        let mut out = AffinePoly::zero();
        for (m1, e) in &self.terms {
            for (m2, c) in p.terms() {
                out.add_term(m1.mul(m2), c, e);
            }
        }
        out.prune();
        out
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn differentiate(&self, v: Var) -> AffinePoly {
        let mut out = AffinePoly::zero();
        for (m, e) in &self.terms {
            let (k, rest) = m.split_off(v);
            if k > 0 {
                let lowered = rest.mul(&Monomial::from_powers([(v, k - 1)]));
                out.add_term(lowered, k as f64, e);
            }
        }
        out.prune();
        out
    }

    pub fn substitute_all(&self, subs: &[(Var, Polynomial)]) -> AffinePoly {
        let mut out = AffinePoly::zero();
        for (m, e) in &self.terms {
            let expanded = Polynomial::from_terms([(m.clone(), 1.0)]).substitute_all(subs);
            for (m2, c) in expanded.terms() {
                out.add_term(m2.clone(), c, e);
            }
        }
        out.prune();
        out
    }

    /// Replaces every unknown by its value.
    pub fn resolve(&self, blocks: &[DMatrix<f64>]) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, e)| (m.clone(), e.value(blocks))))
    }

    pub fn variables(&self) -> Vec<Var> {
        let mut vs: Vec<Var> = self.terms.keys().flat_map(|m| m.vars().collect::<Vec<_>>()).collect();
        vs.sort();
        vs.dedup();
        vs
    }
}

/// Dense matrix of [`AffinePoly`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<AffinePoly>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![AffinePoly::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> AffinePoly) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn from_poly(m: &PolyMatrix) -> Self {
        Self::from_fn(m.rows(), m.cols(), |i, j| AffinePoly::from_poly(m.get(i, j)))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &AffinePoly {
        &self.entries[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut AffinePoly {
        &mut self.entries[i * self.cols + j]
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(AffinePoly::degree).max().unwrap_or(0)
    }

    pub fn variables(&self) -> Vec<Var> {
        let mut vs: Vec<Var> = self.entries.iter().flat_map(|p| p.variables()).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    fn check(&self, other: (usize, usize), op: &'static str) -> Result<(), PolyError> {
        if self.dims() != other {
            return Err(PolyError::DimensionMismatch {
                op,
                lhs: self.dims(),
                rhs: other,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(&AffinePoly) -> AffinePoly) -> AffineMatrix {
        AffineMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    /// `self + alpha · other`.
    pub fn axpy(&self, alpha: f64, other: &AffineMatrix) -> Result<AffineMatrix, PolyError> {
        self.check(other.dims(), "axpy")?;
        let mut out = self.clone();
        for (a, b) in out.entries.iter_mut().zip(&other.entries) {
            a.axpy(alpha, b);
            a.prune();
        }
        Ok(out)
    }

    pub fn add(&self, other: &AffineMatrix) -> Result<AffineMatrix, PolyError> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &AffineMatrix) -> Result<AffineMatrix, PolyError> {
        self.axpy(-1.0, other)
    }

    pub fn add_poly(&self, alpha: f64, other: &PolyMatrix) -> Result<AffineMatrix, PolyError> {
        self.axpy(alpha, &AffineMatrix::from_poly(other))
    }

    pub fn scale_poly(&self, p: &Polynomial) -> AffineMatrix {
        self.map(|e| e.mul_poly(p))
    }

    /// `self · m` for a known polynomial matrix.
    pub fn mul_poly_matrix(&self, m: &PolyMatrix) -> Result<AffineMatrix, PolyError> {
        if self.cols != m.rows() {
            return Err(PolyError::DimensionMismatch {
                op: "mul",
                lhs: self.dims(),
                rhs: m.dims(),
            });
        }
        Ok(AffineMatrix::from_fn(self.rows, m.cols(), |i, j| {
            let mut acc = AffinePoly::zero();
            for k in 0..self.cols {
                let p = m.get(k, j);
                if !p.is_zero() {
                    acc.axpy(1.0, &self.get(i, k).mul_poly(p));
                }
            }
            acc.prune();
            acc
        }))
    }

    pub fn transpose(&self) -> AffineMatrix {
        AffineMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// `M + Mᵀ`.
    pub fn he(&self) -> Result<AffineMatrix, PolyError> {
        self.add(&self.transpose())
    }

    pub fn differentiate(&self, v: Var) -> AffineMatrix {
        self.map(|p| p.differentiate(v))
    }

    pub fn substitute_all(&self, subs: &[(Var, Polynomial)]) -> AffineMatrix {
        self.map(|p| p.substitute_all(subs))
    }

    pub fn resolve(&self, blocks: &[DMatrix<f64>]) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).resolve(blocks))
    }

    /// Largest coefficient mismatch between `(i, j)` and `(j, i)`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                let mut d = self.get(i, j).clone();
                d.axpy(-1.0, self.get(j, i));
                for e in d.terms.values() {
                    worst = worst.max(e.constant.abs());
                    for c in e.terms.values() {
                        worst = worst.max(c.abs());
                    }
                }
            }
        }
        worst
    }
}
