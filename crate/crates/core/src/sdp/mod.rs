//! Block-diagonal semidefinite feasibility problems.
//!
//! A problem is a list of symmetric matrix blocks, each either positive
//! semidefinite or unconstrained ("free symmetric"), and a list of linear
//! equalities. A constraint entry `(block, i, j, c)` with `i <= j` contributes
//! `c * X_block[i][j]`: off-diagonal entries are treated as a single scalar
//! unknown, not as the trace inner product with a symmetric matrix.
//!
//! [`solve`] runs a homogeneous self-dual interior-point method with
//! Nesterov–Todd scaling. Entries of free-symmetric blocks are eliminated from
//! the equality system before iterating, and every answer goes through an
//! independent residual/eigenvalue check in [`verify`].

mod ipm;
pub(crate) mod linalg;
mod preprocess;
mod structure;

pub use preprocess::preprocess;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("constraint {constraint}: block index {block} out of range")]
    BadBlock { constraint: usize, block: usize },
    #[error("constraint {constraint}: entry ({i},{j}) invalid for block {block} of size {size}")]
    BadEntry {
        constraint: usize,
        block: usize,
        i: usize,
        j: usize,
        size: usize,
    },
    #[error("block {0} has size zero")]
    EmptyBlock(usize),
    #[error("non-finite coefficient in constraint {0}")]
    NonFinite(usize),
    #[error("inconsistent equality constraints (row {row}, mismatch {mismatch:.3e})")]
    Inconsistent { row: usize, mismatch: f64, ray: Vec<f64> },
    #[error("constraint rows are numerically rank deficient after elimination")]
    RankDeficient,
    #[error("dump parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Psd,
    FreeSymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub size: usize,
    pub kind: BlockKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Constraint {
    pub entries: Vec<Entry>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub name: String,
    pub blocks: Vec<Block>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_block(&mut self, size: usize, kind: BlockKind) -> usize {
        self.blocks.push(Block { size, kind });
        self.blocks.len() - 1
    }

    pub fn add_constraint(&mut self, entries: Vec<Entry>, rhs: f64) -> usize {
        self.constraints.push(Constraint { entries, rhs });
        self.constraints.len() - 1
    }

    pub fn num_psd_entries(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::Psd)
            .map(|b| b.size * (b.size + 1) / 2)
            .sum()
    }

    pub fn num_free_entries(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::FreeSymmetric)
            .map(|b| b.size * (b.size + 1) / 2)
            .sum()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        for (b, blk) in self.blocks.iter().enumerate() {
            if blk.size == 0 {
                return Err(SdpError::EmptyBlock(b));
            }
        }
        for (c, con) in self.constraints.iter().enumerate() {
            if !con.rhs.is_finite() {
                return Err(SdpError::NonFinite(c));
            }
            for e in &con.entries {
                let blk = self.blocks.get(e.block).ok_or(SdpError::BadBlock {
                    constraint: c,
                    block: e.block,
                })?;
                if e.i > e.j || e.j >= blk.size {
                    return Err(SdpError::BadEntry {
                        constraint: c,
                        block: e.block,
                        i: e.i,
                        j: e.j,
                        size: blk.size,
                    });
                }
                if !e.coef.is_finite() {
                    return Err(SdpError::NonFinite(c));
                }
            }
        }
        Ok(())
    }

    /// Sparse text dump:
    ///
    /// ```text
    /// # name <label>
    /// blocks <count>
    /// <index> <size> psd|free
    /// constraints <count>
    /// <constraint> <block> <i> <j> <coefficient>     (one line per entry)
    /// rhs
    /// <constraint> <value>                            (one line per constraint)
    /// ```
    ///
    /// Indices are zero-based; coefficients use Rust's shortest round-trip formatting.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# name {}", self.name);
        let _ = writeln!(s, "blocks {}", self.blocks.len());
        for (b, blk) in self.blocks.iter().enumerate() {
            let kind = match blk.kind {
                BlockKind::Psd => "psd",
                BlockKind::FreeSymmetric => "free",
            };
            let _ = writeln!(s, "{b} {} {kind}", blk.size);
        }
        let _ = writeln!(s, "constraints {}", self.constraints.len());
        for (c, con) in self.constraints.iter().enumerate() {
            for e in &con.entries {
                let _ = writeln!(s, "{c} {} {} {} {:?}", e.block, e.i, e.j, e.coef);
            }
        }
        let _ = writeln!(s, "rhs");
        for (c, con) in self.constraints.iter().enumerate() {
            let _ = writeln!(s, "{c} {:?}", con.rhs);
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self, SdpError> {
        let err = |line: usize, msg: &str| SdpError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let mut p = SdpProblem::default();
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = || lines.next();
        let (ln, first) = next().ok_or_else(|| err(0, "empty dump"))?;
        let mut header = first;
        if let Some(name) = first.strip_prefix("# name") {
            p.name = name.trim().to_string();
            header = next().ok_or_else(|| err(ln, "missing blocks header"))?.1;
        }
        let nb: usize = header
            .strip_prefix("blocks ")
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| err(ln, "expected `blocks <count>`"))?;
        for _ in 0..nb {
            let (l, line) = next().ok_or_else(|| err(ln, "truncated block table"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err(l, "expected `<index> <size> <kind>`"));
            }
            let size = f[1].parse().map_err(|_| err(l, "bad block size"))?;
            let kind = match f[2] {
                "psd" => BlockKind::Psd,
                "free" => BlockKind::FreeSymmetric,
                _ => return Err(err(l, "block kind must be psd or free")),
            };
            p.add_block(size, kind);
        }
        let (l, line) = next().ok_or_else(|| err(ln, "missing constraints header"))?;
        let nc: usize = line
            .strip_prefix("constraints ")
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| err(l, "expected `constraints <count>`"))?;
        p.constraints = vec![Constraint::default(); nc];
        loop {
            let (l, line) = next().ok_or_else(|| err(l, "missing rhs section"))?;
            if line.trim() == "rhs" {
                break;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(err(l, "expected `<c> <block> <i> <j> <coef>`"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| err(l, "bad index"));
            let c = num(f[0])?;
            let entry = Entry {
                block: num(f[1])?,
                i: num(f[2])?,
                j: num(f[3])?,
                coef: f[4].parse().map_err(|_| err(l, "bad coefficient"))?,
            };
            p.constraints
                .get_mut(c)
                .ok_or_else(|| err(l, "constraint index out of range"))?
                .entries
                .push(entry);
        }
        while let Some((l, line)) = next() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(err(l, "expected `<c> <rhs>`"));
            }
            let c: usize = f[0].parse().map_err(|_| err(l, "bad index"))?;
            let v: f64 = f[1].parse().map_err(|_| err(l, "bad rhs"))?;
            p.constraints
                .get_mut(c)
                .ok_or_else(|| err(l, "constraint index out of range"))?
                .rhs = v;
        }
        Ok(p)
    }

    /// Row activity `a_c · X` for the given block values.
    pub fn row_value(&self, c: usize, blocks: &[DMatrix<f64>]) -> f64 {
        self.constraints[c]
            .entries
            .iter()
            .map(|e| e.coef * blocks[e.block][(e.i, e.j)])
            .sum()
    }

    fn row_norm(&self, c: usize) -> f64 {
        self.constraints[c]
            .entries
            .iter()
            .map(|e| e.coef * e.coef)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            gap_tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Farkas ray for an infeasible problem: `y` over the original constraints with
/// `bᵀy = -1`, `Σ y_c A_c ⪰ 0` on psd blocks and `= 0` on free blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasibilityRay {
    pub y: Vec<f64>,
    /// Smallest eigenvalue of the dual slack over psd blocks (should be ≥ -feas_tol).
    pub min_slack_eig: f64,
    /// Largest absolute entry of the dual slack on free blocks (should be ≈ 0).
    pub free_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub blocks: Vec<DMatrix<f64>>,
    /// Largest `|a_c·X - b_c| / max(1, |a_c|)` over constraints.
    pub max_eq_violation: f64,
    /// Smallest eigenvalue over psd blocks.
    pub min_psd_eig: f64,
    pub iterations: usize,
    pub ray: Option<InfeasibilityRay>,
    pub message: String,
}

impl SdpSolution {
    fn empty(p: &SdpProblem, status: SdpStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            blocks: p.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect(),
            max_eq_violation: f64::INFINITY,
            min_psd_eig: f64::NEG_INFINITY,
            iterations: 0,
            ray: None,
            message: message.into(),
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Feasible
    }
}

/// Independent check of a candidate primal point: equality residuals and psd eigenvalues.
pub fn verify(p: &SdpProblem, blocks: &[DMatrix<f64>]) -> (f64, f64) {
    let viol = (0..p.constraints.len())
        .map(|c| (p.row_value(c, blocks) - p.constraints[c].rhs).abs() / p.row_norm(c).max(1.0))
        .fold(0.0, f64::max);
    let min_eig = p
        .blocks
        .iter()
        .zip(blocks)
        .filter(|(b, _)| b.kind == BlockKind::Psd)
        .map(|(_, x)| linalg::min_eigenvalue(x))
        .fold(f64::INFINITY, f64::min);
    (viol, min_eig)
}

/// Independent check of a Farkas ray. Returns `(bᵀy, min psd slack eig, max |free slack|)`.
pub fn verify_ray(p: &SdpProblem, y: &[f64]) -> (f64, f64, f64) {
    let mut slack: Vec<DMatrix<f64>> = p.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect();
    let mut by = 0.0;
    for (c, con) in p.constraints.iter().enumerate() {
        by += con.rhs * y[c];
        for e in &con.entries {
            let m = &mut slack[e.block];
            if e.i == e.j {
                m[(e.i, e.i)] += e.coef * y[c];
            } else {
                m[(e.i, e.j)] += 0.5 * e.coef * y[c];
                m[(e.j, e.i)] += 0.5 * e.coef * y[c];
            }
        }
    }
    let mut min_eig = f64::INFINITY;
    let mut free_res = 0.0f64;
    for (b, s) in p.blocks.iter().zip(&slack) {
        match b.kind {
            BlockKind::Psd => min_eig = min_eig.min(linalg::min_eigenvalue(s)),
            BlockKind::FreeSymmetric => free_res = free_res.max(s.amax()),
        }
    }
    (by, min_eig, free_res)
}

/// Solves the feasibility problem `find X : A(X) = b, X_psd ⪰ 0`.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    let pre = match preprocess::reduce(p) {
        Ok(pre) => pre,
        Err(SdpError::Inconsistent { row, mismatch, ray }) => {
            let mut sol = SdpSolution::empty(p, SdpStatus::Infeasible, format!(
                "equality constraints inconsistent at row {row} (mismatch {mismatch:.3e})"
            ));
            let (by, min_eig, free_res) = verify_ray(p, &ray);
            let scale = if by != 0.0 { -1.0 / by } else { 1.0 };
            sol.ray = Some(InfeasibilityRay {
                y: ray.iter().map(|v| v * scale).collect(),
                min_slack_eig: min_eig * scale.abs(),
                free_residual: free_res * scale.abs(),
            });
            return Ok(sol);
        }
        Err(e) => return Err(e),
    };
    let out = ipm::run(&pre, opts);
    let mut sol = SdpSolution::empty(p, out.status, out.message);
    sol.iterations = out.iterations;
    match out.status {
        SdpStatus::Feasible | SdpStatus::NumericalFailure => {
            if let Some(blocks) = out.blocks {
                let (viol, min_eig) = verify(p, &blocks);
                sol.max_eq_violation = viol;
                sol.min_psd_eig = min_eig;
                sol.blocks = blocks;
                let ok = viol <= opts.feas_tol && min_eig >= -opts.feas_tol;
                if sol.status == SdpStatus::Feasible && !ok {
                    sol.status = SdpStatus::NumericalFailure;
                    sol.message = format!(
                        "verification rejected solver point (violation {viol:.2e}, min eig {min_eig:.2e})"
                    );
                } else if sol.status == SdpStatus::NumericalFailure && ok {
                    // the breakdown left a point that meets the tolerances in the original problem
                    sol.status = SdpStatus::Feasible;
                    sol.message = format!("{}; best point passes verification", sol.message);
                }
            }
        }
        SdpStatus::Infeasible => {
            let y = out.ray.unwrap_or_default();
            let (by, min_eig, free_res) = verify_ray(p, &y);
            if by < 0.0 {
                let scale = -1.0 / by;
                let ray = InfeasibilityRay {
                    y: y.iter().map(|v| v * scale).collect(),
                    min_slack_eig: min_eig * scale,
                    free_residual: free_res * scale,
                };
                if ray.min_slack_eig < -opts.feas_tol.sqrt() || ray.free_residual > opts.feas_tol.sqrt() {
                    sol.status = SdpStatus::NumericalFailure;
                    sol.message = format!(
                        "infeasibility ray rejected (slack eig {:.2e}, free residual {:.2e})",
                        ray.min_slack_eig, ray.free_residual
                    );
                }
                sol.ray = Some(ray);
            } else {
                sol.status = SdpStatus::NumericalFailure;
                sol.message = "infeasibility ray has nonnegative objective".into();
            }
        }
    }
    Ok(sol)
}
