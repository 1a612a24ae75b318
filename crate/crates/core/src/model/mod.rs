//! LPV system description: `ẋ = A(ρ) x` with `ρ` in a semialgebraic set and
//! derivative bounds between jumps.

mod expr;
mod format;
mod sample;

use std::collections::BTreeMap;

use thiserror::Error;

pub use expr::{parse_expr, ExprError};
pub use format::{parse_system, parse_system_with, print_system};
pub use sample::{sample_parameter, sample_parameter_seeded, SAMPLE_ATTEMPTS};

use crate::poly::{PolyMatrix, Polynomial, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: unknown variable '{name}'")]
    UnknownVariable { line: usize, col: usize, name: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter set appears empty or thin ({0})")]
    EmptySet(String),
    #[error("invalid system: {0}")]
    Invalid(String),
}

/// `{θ : g_i(θ) ≥ 0, h_j(θ) = 0}` together with a bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
    pub box_hull: Vec<(f64, f64)>,
}

impl ParameterSet {
    pub fn dim(&self) -> usize {
        self.box_hull.len()
    }

    pub fn vars(&self) -> Vec<Var> {
        (0..self.dim()).map(Var::rho).collect()
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        let at = |v: Var| v.rho_index().and_then(|i| theta.get(i).copied());
        self.inequalities
            .iter()
            .all(|g| g.evaluate_with(&at).is_ok_and(|x| x >= -tol))
            && self
                .equalities
                .iter()
                .all(|h| h.evaluate_with(&at).is_ok_and(|x| x.abs() <= tol))
    }
}

/// Bounds on `ρ̇` between jumps.
#[derive(Clone, Debug, PartialEq)]
pub enum DerivativeModel {
    /// `ρ̇_i ∈ [lo_i, hi_i]`; vertices are the box corners.
    Box(Vec<(f64, f64)>),
    /// `ρ̇ ∈ conv{μ_j(ρ)}` for polynomial maps `μ_j`.
    Maps(Vec<Vec<Polynomial>>),
}

impl DerivativeModel {
    /// Distinct vertex derivative vectors as polynomials in `ρ`; degenerate box
    /// sides and repeated maps collapse.
    pub fn vertices(&self) -> Vec<Vec<Polynomial>> {
        let mut out: Vec<Vec<Polynomial>> = Vec::new();
        for v in self.raw_vertices() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    fn raw_vertices(&self) -> Vec<Vec<Polynomial>> {
        match self {
            DerivativeModel::Maps(maps) => maps.clone(),
            DerivativeModel::Box(iv) => {
                let mut out: Vec<Vec<f64>> = vec![Vec::new()];
                for &(lo, hi) in iv {
                    let ends: Vec<f64> = if lo == hi { vec![lo] } else { vec![lo, hi] };
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            ends.iter().map(move |&e| {
                                let mut q = p.clone();
                                q.push(e);
                                q
                            })
                        })
                        .collect();
                }
                out.into_iter()
                    .map(|v| v.into_iter().map(Polynomial::constant).collect())
                    .collect()
            }
        }
    }

    /// True when every vertex is the zero vector (piecewise constant parameters).
    pub fn is_zero(&self) -> bool {
        self.vertices().iter().all(|v| v.iter().all(Polynomial::is_zero))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpvSystem {
    pub label: String,
    pub n: usize,
    pub a: PolyMatrix,
    pub params: ParameterSet,
    pub derivs: DerivativeModel,
    /// Named constants the file was evaluated with.
    pub constants: BTreeMap<String, f64>,
}

impl LpvSystem {
    pub fn num_params(&self) -> usize {
        self.params.dim()
    }

    /// `A(θ)` at a numeric parameter value.
    pub fn a_at(&self, theta: &[f64]) -> nalgebra::DMatrix<f64> {
        self.a
            .evaluate_with(&|v| v.rho_index().and_then(|i| theta.get(i).copied()))
            .expect("A references only parameters")
    }

    /// Vertex derivative vectors evaluated at `θ`.
    pub fn derivative_vertices_at(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let at = |v: Var| v.rho_index().and_then(|i| theta.get(i).copied());
        self.derivs
            .vertices()
            .iter()
            .map(|m| m.iter().map(|p| p.evaluate_with(&at).unwrap_or(0.0)).collect())
            .collect()
    }

    /// Checks the structural invariants; called by the parser.
    pub fn validate(&self) -> Result<(), ModelError> {
        let np = self.num_params();
        if self.a.dims() != (self.n, self.n) {
            return Err(ModelError::Dimension(format!(
                "A is {}x{}, expected {n}x{n}",
                self.a.rows(),
                self.a.cols(),
                n = self.n
            )));
        }
        if self.n == 0 {
            return Err(ModelError::Invalid("state dimension must be positive".into()));
        }
        let param_only = |vs: Vec<Var>| vs.into_iter().all(|v| v.rho_index().is_some_and(|i| i < np));
        if !param_only(self.a.variables()) {
            return Err(ModelError::Invalid("A may only reference parameters".into()));
        }
        for p in self.params.inequalities.iter().chain(&self.params.equalities) {
            if !param_only(p.variables()) {
                return Err(ModelError::Invalid(format!("set description '{p}' references unknown variables")));
            }
        }
        for (i, &(lo, hi)) in self.params.box_hull.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::Invalid(format!("box interval of rho{} is empty", i + 1)));
            }
        }
        match &self.derivs {
            DerivativeModel::Box(iv) => {
                if iv.len() != np {
                    return Err(ModelError::Dimension(format!(
                        "{} derivative intervals for {np} parameters",
                        iv.len()
                    )));
                }
                if iv.iter().any(|&(lo, hi)| !(lo <= hi)) {
                    return Err(ModelError::Invalid("derivative interval with lo > hi".into()));
                }
            }
            DerivativeModel::Maps(maps) => {
                if maps.is_empty() {
                    return Err(ModelError::Invalid("no derivative maps".into()));
                }
                for m in maps {
                    if m.len() != np {
                        return Err(ModelError::Dimension(format!(
                            "derivative map has {} components for {np} parameters",
                            m.len()
                        )));
                    }
                    if !m.iter().all(|p| param_only(p.variables())) {
                        return Err(ModelError::Invalid("derivative map references unknown variables".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

pub const EXAMPLE1: &str = include_str!("../../systems/example1.lpv");
pub const EXAMPLE2: &str = include_str!("../../systems/example2.lpv");
pub const EXAMPLE2_FIXED: &str = include_str!("../../systems/example2_fixed.lpv");

fn with_constants(text: &str, pairs: &[(&str, f64)]) -> LpvSystem {
    let overrides = pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    parse_system_with(text, &overrides).expect("bundled system parses")
}

/// Two-state benchmark: `A = [[0, 1], [-2 - ρ, -1]]`, `ρ ∈ [0, ρ̄]`, `|ρ̇| ≤ ν`.
pub fn example1(rho_max: f64, nu: f64) -> LpvSystem {
    with_constants(EXAMPLE1, &[("rho_max", rho_max), ("nu", nu)])
}

/// Four-state benchmark with `ρ` on the unit circle and `|β̇| ≤ ν`.
pub fn example2(nu: f64) -> LpvSystem {
    with_constants(EXAMPLE2, &[("nu", nu)])
}

/// [`example2`] with the signs of `a11` and `a42` flipped; the plain version
/// is singular for every `ρ`.
pub fn example2_fixed(nu: f64) -> LpvSystem {
    with_constants(EXAMPLE2_FIXED, &[("nu", nu)])
}
