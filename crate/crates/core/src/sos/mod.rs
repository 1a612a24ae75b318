//! Sum-of-squares matrix constraints on top of [`crate::sdp`].
//!
//! A symmetric polynomial matrix `Θ(v)` of size `n` is SOS when
//! `Θ = (b ⊗ I_n)ᵀ G (b ⊗ I_n)` for a monomial vector `b` and some `G ⪰ 0`.
//! Row `a·n + r` of the Gram block belongs to basis monomial `a`, matrix row `r`.

mod affine;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

pub use affine::{AffineMatrix, AffinePoly, LinExpr, Scalar};

use crate::poly::{Monomial, PolyError, PolyMatrix, Polynomial, Var};
use crate::sdp::{BlockKind, Entry, SdpProblem, SdpSolution};

#[derive(Debug, Error)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("target of constraint '{label}' is not symmetric (mismatch {mismatch:.3e})")]
    NotSymmetric { label: String, mismatch: f64 },
    #[error("Gram block of '{label}' is indefinite (min eigenvalue {min_eig:.3e})")]
    Indefinite { label: String, min_eig: f64 },
    #[error("unknown constraint handle {0}")]
    BadHandle(usize),
}

/// Handle to an SOS constraint of a program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GramId(pub usize);

#[derive(Clone, Debug)]
pub struct SosConstraint {
    pub label: String,
    pub target: AffineMatrix,
    pub basis: Vec<Monomial>,
    pub block: usize,
    /// `(monomial, r, c)` matched by each equality row, in row order.
    pub rows: Vec<(Monomial, usize, usize)>,
    pub first_row: usize,
}

/// `Θ ≈ Ξᵀ Ξ` recovered from a Gram block.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// `rank × n` polynomial factor.
    pub xi: PolyMatrix,
    /// Largest coefficient of `target − ΞᵀΞ`.
    pub residual: f64,
    pub min_gram_eig: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SosProgram {
    pub problem: SdpProblem,
    pub constraints: Vec<SosConstraint>,
    /// Labels of declared unknown polynomial matrices, for diagnostics.
    pub unknowns: Vec<String>,
}

/// Products of basis pairs grouped by resulting monomial.
fn pair_table(basis: &[Monomial]) -> HashMap<Monomial, Vec<(usize, usize)>> {
    let mut table: HashMap<Monomial, Vec<(usize, usize)>> = HashMap::new();
    for (a, ma) in basis.iter().enumerate() {
        for (b, mb) in basis.iter().enumerate() {
            table.entry(ma.mul(mb)).or_default().push((a, b));
        }
    }
    table
}

/// `(b ⊗ I)ᵀ G (b ⊗ I)` as an affine matrix in the entries of Gram block `block`.
fn gram_form(block: usize, basis: &[Monomial], n: usize) -> AffineMatrix {
    let mut out = AffineMatrix::zeros(n, n);
    for (a, ma) in basis.iter().enumerate() {
        for (b, mb) in basis.iter().enumerate() {
            let m = ma.mul(mb);
            for r in 0..n {
                for c in 0..n {
                    let s = Scalar::new(block, a * n + r, b * n + c);
                    out.get_mut(r, c).add_term(m.clone(), 1.0, &LinExpr::scalar(s));
                }
            }
        }
    }
    out
}

impl SosProgram {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            problem: SdpProblem::new(name),
            ..Default::default()
        }
    }

    /// Symmetric `n × n` matrix with all monomials of `vars` up to `degree`,
    /// each coefficient matrix a fresh free-symmetric block.
    pub fn declare_unknown(&mut self, label: &str, n: usize, vars: &[Var], degree: u32) -> AffineMatrix {
        self.unknowns.push(label.to_string());
        let mut out = AffineMatrix::zeros(n, n);
        for m in Monomial::all_up_to(vars, degree) {
            let block = self.problem.add_block(n, BlockKind::FreeSymmetric);
            for r in 0..n {
                for c in 0..n {
                    out.get_mut(r, c)
                        .add_term(m.clone(), 1.0, &LinExpr::scalar(Scalar::new(block, r, c)));
                }
            }
        }
        out
    }

    /// Free symmetric multiplier (no cone constraint); same shape as [`Self::declare_unknown`].
    pub fn add_symmetric_multiplier(&mut self, label: &str, n: usize, vars: &[Var], degree: u32) -> AffineMatrix {
        self.declare_unknown(label, n, vars, degree)
    }

    /// SOS multiplier of even degree `degree`, parametrized directly by its
    /// Gram block so it needs no extra equality rows.
    pub fn add_sos_multiplier(&mut self, label: &str, n: usize, vars: &[Var], degree: u32) -> AffineMatrix {
        self.unknowns.push(label.to_string());
        let basis = Monomial::all_up_to(vars, degree / 2);
        let block = self.problem.add_block(basis.len() * n, BlockKind::Psd);
        gram_form(block, &basis, n)
    }

    /// Requires `target` to be an SOS matrix. The Gram basis holds every
    /// monomial in the target's variables up to half its degree, raised to
    /// `min_half_degree` when given.
    pub fn add_sos_matrix_constraint(
        &mut self,
        label: &str,
        target: &AffineMatrix,
        min_half_degree: Option<u32>,
    ) -> Result<GramId, SosError> {
        let (n, cols) = target.dims();
        if n != cols {
            return Err(PolyError::DimensionMismatch {
                op: "sos",
                lhs: (n, cols),
                rhs: (cols, n),
            }
            .into());
        }
        let mismatch = target.asymmetry();
        if mismatch > 1e-9 {
            return Err(SosError::NotSymmetric {
                label: label.to_string(),
                mismatch,
            });
        }
        let vars = target.variables();
        let half = target.degree().div_ceil(2).max(min_half_degree.unwrap_or(0));
        let basis = Monomial::all_up_to(&vars, half);
        let block = self.problem.add_block(basis.len() * n, BlockKind::Psd);
        let table = pair_table(&basis);

        // every monomial reachable by the Gram form plus any stray target monomial
        let mut monos: Vec<Monomial> = table.keys().cloned().collect();
        for r in 0..n {
            for c in r..n {
                monos.extend(target.get(r, c).terms.keys().cloned());
            }
        }
        monos.sort();
        monos.dedup();

        let first_row = self.problem.constraints.len();
        let mut rows = Vec::new();
        for m in &monos {
            let pairs = table.get(m).map(Vec::as_slice).unwrap_or(&[]);
            for r in 0..n {
                for c in r..n {
                    let mut coefs: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
                    for &(a, b) in pairs {
                        let (p, q) = (a * n + r, b * n + c);
                        let key = (block, p.min(q), p.max(q));
                        *coefs.entry(key).or_insert(0.0) += 1.0;
                    }
                    let t = target.get(r, c).terms.get(m);
                    if let Some(t) = t {
                        for (s, v) in &t.terms {
                            *coefs.entry((s.block as usize, s.i as usize, s.j as usize)).or_insert(0.0) -= v;
                        }
                    }
                    let rhs = t.map_or(0.0, |t| t.constant);
                    let entries: Vec<Entry> = coefs
                        .into_iter()
                        .filter(|&(_, v)| v != 0.0)
                        .map(|((block, i, j), coef)| Entry { block, i, j, coef })
                        .collect();
                    self.problem.add_constraint(entries, rhs);
                    rows.push((m.clone(), r, c));
                }
            }
        }
        self.constraints.push(SosConstraint {
            label: label.to_string(),
            target: target.clone(),
            basis,
            block,
            rows,
            first_row,
        });
        Ok(GramId(self.constraints.len() - 1))
    }

    pub fn constraint(&self, id: GramId) -> Result<&SosConstraint, SosError> {
        self.constraints.get(id.0).ok_or(SosError::BadHandle(id.0))
    }

    /// Factor `Ξ` with `ΞᵀΞ = (b ⊗ I)ᵀ G (b ⊗ I)` and the coefficient residual
    /// against the target evaluated at the solution.
    pub fn extract_decomposition(
        &self,
        solution: &SdpSolution,
        id: GramId,
        tol: f64,
    ) -> Result<Decomposition, SosError> {
        let con = self.constraint(id)?;
        let n = con.target.dims().0;
        let g = &solution.blocks[con.block];
        let eig = SymmetricEigen::new((g + g.transpose()) * 0.5);
        let min_eig = eig.eigenvalues.min();
        let scale = eig.eigenvalues.amax().max(1.0);
        if min_eig < -tol * scale {
            return Err(SosError::Indefinite {
                label: con.label.clone(),
                min_eig,
            });
        }
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&k| eig.eigenvalues[k] > 0.0)
            .collect();
        let xi = PolyMatrix::from_fn(keep.len(), n, |row, c| {
            let k = keep[row];
            let w = eig.eigenvalues[k].sqrt();
            Polynomial::from_terms(
                con.basis
                    .iter()
                    .enumerate()
                    .map(|(a, m)| (m.clone(), w * eig.eigenvectors[(a * n + c, k)])),
            )
        });
        let target = con.target.resolve(&solution.blocks);
        let diff = target.sub(&xi.transpose().mul(&xi)?)?;
        let residual = diff.entries().iter().map(Polynomial::max_abs_coeff).fold(0.0, f64::max);
        Ok(Decomposition {
            xi,
            residual,
            min_gram_eig: min_eig,
        })
    }

    /// Re-expands `(b ⊗ I)ᵀ G (b ⊗ I)` for a given Gram value.
    pub fn gram_polynomial(&self, id: GramId, g: &DMatrix<f64>) -> Result<PolyMatrix, SosError> {
        let con = self.constraint(id)?;
        let n = con.target.dims().0;
        let form = gram_form(0, &con.basis, n);
        Ok(form.resolve(std::slice::from_ref(g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declare_unknown_counts() {
        let mut p = SosProgram::new("t");
        let theta = Var::rho(0);
        let s = p.declare_unknown("a", 1, &[theta], 2);
        assert_eq!(s.get(0, 0).terms.len(), 3);
        assert_eq!(p.problem.num_free_entries(), 3);

        let mut p = SosProgram::new("t");
        p.declare_unknown("s", 2, &[Var::TAU, theta], 1);
        assert_eq!(p.problem.blocks.len(), 3);
        assert_eq!(p.problem.num_free_entries(), 9);

        let mut p = SosProgram::new("t");
        let c = p.declare_unknown("c", 3, &[theta], 0);
        assert_eq!(c.degree(), 0);
        assert_eq!(p.problem.blocks.len(), 1);
    }

    #[test]
    fn gram_rows_cover_target() {
        let x = Polynomial::var(Var::rho(0));
        let t = x.pow(4).sub(&x).add(&Polynomial::constant(3.0));
        let mut p = SosProgram::new("t");
        let id = p
            .add_sos_matrix_constraint("t", &AffineMatrix::from_poly(&PolyMatrix::scalar(t.clone())), None)
            .unwrap();
        let con = p.constraint(id).unwrap();
        for (m, _) in t.terms() {
            assert!(con.rows.iter().any(|r| &r.0 == m));
        }
        // basis 1, x, x² reaches degrees 0..4
        assert_eq!(con.rows.len(), 5);
    }
}
