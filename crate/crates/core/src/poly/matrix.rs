use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{PolyError, Polynomial, Var};

/// Dense matrix of polynomials, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Polynomial::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Polynomial::constant(1.0)
            } else {
                Polynomial::zero()
            }
        })
    }

    pub fn scalar(p: Polynomial) -> Self {
        Self {
            rows: 1,
            cols: 1,
            entries: vec![p],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Polynomial) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn from_rows(rows: Vec<Vec<Polynomial>>) -> Result<Self, PolyError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(PolyError::DimensionMismatch {
                op: "from_rows",
                lhs: (r, c),
                rhs: (1, bad.len()),
            });
        }
        Ok(Self {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_constant(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| Polynomial::constant(m[(i, j)]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        self.entries[i * self.cols + j] = p;
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn variables(&self) -> Vec<Var> {
        let mut vs: Vec<Var> = self.entries.iter().flat_map(|p| p.variables()).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn check_same(&self, other: &PolyMatrix, op: &'static str) -> Result<(), PolyError> {
        if self.dims() != other.dims() {
            return Err(PolyError::DimensionMismatch {
                op,
                lhs: self.dims(),
                rhs: other.dims(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_same(other, "add")?;
        Ok(self.zip(other, |a, b| a.add(b)))
    }

    pub fn sub(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_same(other, "sub")?;
        Ok(self.zip(other, |a, b| a.sub(b)))
    }

    fn zip(&self, other: &PolyMatrix, f: impl Fn(&Polynomial, &Polynomial) -> Polynomial) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn mul(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        if self.cols != other.rows {
            return Err(PolyError::DimensionMismatch {
                op: "mul",
                lhs: self.dims(),
                rhs: other.dims(),
            });
        }
        Ok(PolyMatrix::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(Polynomial::zero(), |acc, k| {
                acc.add(&self.get(i, k).mul(other.get(k, j)))
            })
        }))
    }

    pub fn scale(&self, alpha: f64) -> PolyMatrix {
        self.map(|p| p.scale(alpha))
    }

    pub fn scale_poly(&self, p: &Polynomial) -> PolyMatrix {
        self.map(|e| e.mul(p))
    }

    pub fn transpose(&self) -> PolyMatrix {
        PolyMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// `M + Mᵀ`.
    pub fn he(&self) -> Result<PolyMatrix, PolyError> {
        self.add(&self.transpose())
    }

    pub fn differentiate(&self, v: Var) -> PolyMatrix {
        self.map(|p| p.differentiate(v))
    }

    pub fn substitute(&self, v: Var, expr: &Polynomial) -> PolyMatrix {
        self.map(|p| p.substitute(v, expr))
    }

    pub fn substitute_all(&self, subs: &[(Var, Polynomial)]) -> PolyMatrix {
        self.map(|p| p.substitute_all(subs))
    }

    pub fn rename(&self, f: impl Fn(Var) -> Var + Copy) -> PolyMatrix {
        self.map(|p| p.rename(f))
    }

    pub fn evaluate_with(&self, point: &dyn Fn(Var) -> Option<f64>) -> Result<DMatrix<f64>, PolyError> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.get(i, j).evaluate_with(point)?;
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, assignment: &BTreeMap<Var, f64>) -> Result<DMatrix<f64>, PolyError> {
        self.evaluate_with(&|v| assignment.get(&v).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho() -> Polynomial {
        Polynomial::var(Var::rho(0))
    }

    fn c(x: f64) -> Polynomial {
        Polynomial::constant(x)
    }

    /// A(ρ) of the two-state benchmark: [[0, 1], [-2-ρ, -1]].
    fn a1() -> PolyMatrix {
        PolyMatrix::from_rows(vec![vec![c(0.0), c(1.0)], vec![c(-2.0).sub(&rho()), c(-1.0)]]).unwrap()
    }

    #[test]
    fn telescoping_sum() {
        let tau = Polynomial::var(Var::TAU);
        let a = PolyMatrix::scalar(tau.clone());
        let b = PolyMatrix::scalar(c(2.0).sub(&tau));
        assert_eq!(a.add(&b).unwrap(), PolyMatrix::scalar(c(2.0)));
    }

    #[test]
    fn identities() {
        let a = a1();
        assert_eq!(a.add(&PolyMatrix::zeros(2, 2)).unwrap(), a);
        assert_eq!(PolyMatrix::identity(2).mul(&a).unwrap(), a);
        let s = PolyMatrix::scalar(rho());
        assert_eq!(s.mul(&s).unwrap(), PolyMatrix::scalar(rho().mul(&rho())));
    }

    #[test]
    fn he_of_identity_times_a() {
        let he = PolyMatrix::identity(2).mul(&a1()).unwrap().he().unwrap();
        let off = c(-1.0).sub(&rho());
        let expected = PolyMatrix::from_rows(vec![vec![c(0.0), off.clone()], vec![off, c(-2.0)]]).unwrap();
        assert_eq!(he, expected);
        assert!(he.is_symmetric());
    }

    #[test]
    fn evaluate_at_zero() {
        let mut at = BTreeMap::new();
        at.insert(Var::rho(0), 0.0);
        let m = a1().evaluate(&at).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -1.0]));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            PolyMatrix::zeros(2, 3).mul(&PolyMatrix::zeros(2, 3)),
            Err(PolyError::DimensionMismatch { op: "mul", .. })
        ));
        assert!(PolyMatrix::zeros(2, 2).add(&PolyMatrix::zeros(3, 2)).is_err());
    }
}
