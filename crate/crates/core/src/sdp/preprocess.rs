//! Row cleanup before the interior-point loop.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::linalg::PivotedCholesky;
use super::structure::Elimination;
use super::{Constraint, Entry, SdpError, SdpProblem};

const ZERO_RHS_TOL: f64 = 1e-12;
const DEP_TOL: f64 = 1e-11;
const CONSISTENCY_TOL: f64 = 1e-8;

/// Normalized problem plus the bookkeeping to map results back.
pub(crate) struct Reduced {
    pub problem: SdpProblem,
    /// Original row of each kept row.
    pub kept: Vec<usize>,
    /// Norm the original row was divided by.
    pub scale: Vec<f64>,
    pub original_rows: usize,
    pub elim: Elimination,
}

impl Reduced {
    /// Maps a dual vector over kept rows to the original rows.
    pub fn ray_to_original(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.original_rows];
        for (r, &v) in y.iter().enumerate() {
            out[self.kept[r]] = v / self.scale[r];
        }
        out
    }
}

/// Rescales rows to unit norm and drops zero, duplicate and linearly
/// dependent rows. Fails with [`SdpError::Inconsistent`] when the equalities
/// cannot hold simultaneously.
pub fn preprocess(p: &SdpProblem) -> Result<SdpProblem, SdpError> {
    p.validate()?;
    reduce(p).map(|r| r.problem)
}

fn merged(c: &Constraint) -> Vec<Entry> {
    let mut es: Vec<Entry> = c
        .entries
        .iter()
        .map(|e| {
            let (i, j) = if e.i <= e.j { (e.i, e.j) } else { (e.j, e.i) };
            Entry { i, j, ..*e }
        })
        .collect();
    es.sort_by_key(|e| (e.block, e.i, e.j));
    let mut out: Vec<Entry> = Vec::with_capacity(es.len());
    for e in es {
        match out.last_mut() {
            Some(l) if (l.block, l.i, l.j) == (e.block, e.i, e.j) => l.coef += e.coef,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.coef != 0.0);
    out
}

fn inconsistent(row: usize, mismatch: f64, weights: &[(usize, f64)], n: usize) -> SdpError {
    // orient so that bᵀy < 0
    let sign = if mismatch > 0.0 { -1.0 } else { 1.0 };
    let mut ray = vec![0.0; n];
    for &(r, w) in weights {
        ray[r] += sign * w;
    }
    SdpError::Inconsistent { row, mismatch, ray }
}

pub(crate) fn reduce(p: &SdpProblem) -> Result<Reduced, SdpError> {
    let n = p.constraints.len();
    let mut out = SdpProblem {
        name: p.name.clone(),
        blocks: p.blocks.clone(),
        constraints: Vec::new(),
    };
    let mut kept = Vec::new();
    let mut scale = Vec::new();
    let mut seen: HashMap<Vec<(usize, usize, usize, i64)>, usize> = HashMap::new();
    for (r, c) in p.constraints.iter().enumerate() {
        let mut entries = merged(c);
        let norm = entries.iter().map(|e| e.coef * e.coef).sum::<f64>().sqrt();
        if norm == 0.0 {
            if c.rhs.abs() > ZERO_RHS_TOL {
                return Err(inconsistent(r, c.rhs, &[(r, 1.0)], n));
            }
            continue;
        }
        let mut rhs = c.rhs / norm;
        let mut s = norm;
        // canonical sign so that negated duplicates collide
        if entries[0].coef < 0.0 {
            s = -s;
            rhs = -rhs;
        }
        for e in entries.iter_mut() {
            e.coef /= s;
        }
        let key: Vec<_> = entries
            .iter()
            .map(|e| (e.block, e.i, e.j, (e.coef * 1e12).round() as i64))
            .collect();
        if let Some(&k) = seen.get(&key) {
            let other = out.constraints[k].rhs;
            let mismatch = rhs - other;
            if mismatch.abs() > CONSISTENCY_TOL * (1.0 + rhs.abs()) {
                // row_r / s - row_k / scale_k = 0 on the left
                return Err(inconsistent(
                    r,
                    mismatch,
                    &[(r, 1.0 / s), (kept[k], -1.0 / scale[k])],
                    n,
                ));
            }
            continue;
        }
        seen.insert(key, out.constraints.len());
        out.constraints.push(Constraint { entries, rhs });
        kept.push(r);
        scale.push(s);
    }
    if let Some(elim) = Elimination::build(&out) {
        return Ok(Reduced {
            problem: out,
            kept,
            scale,
            original_rows: n,
            elim,
        });
    }
    remove_dependent(out, kept, scale, n)
}

/// Dense rank reveal on the row Gram matrix. Free-block entries count like
/// psd entries here; the elimination afterwards handles them exactly.
fn remove_dependent(
    p: SdpProblem,
    kept: Vec<usize>,
    scale: Vec<f64>,
    n: usize,
) -> Result<Reduced, SdpError> {
    let m = p.constraints.len();
    let mut col_of: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for c in &p.constraints {
        for e in &c.entries {
            let next = col_of.len();
            col_of.entry((e.block, e.i, e.j)).or_insert(next);
        }
    }
    let mut dense = DMatrix::zeros(m, col_of.len());
    for (r, c) in p.constraints.iter().enumerate() {
        for e in &c.entries {
            dense[(r, col_of[&(e.block, e.i, e.j)])] = e.coef;
        }
    }
    let gram = &dense * dense.transpose();
    let pc = PivotedCholesky::new(&gram, DEP_TOL);
    let indep = &pc.perm[..pc.rank];
    for (d, coeffs) in pc.dependent_combinations(&gram) {
        let predicted: f64 = indep
            .iter()
            .zip(coeffs.iter())
            .map(|(&i, &w)| w * p.constraints[i].rhs)
            .sum();
        let mismatch = p.constraints[d].rhs - predicted;
        if mismatch.abs() > CONSISTENCY_TOL * (1.0 + p.constraints[d].rhs.abs()) {
            let mut weights = vec![(kept[d], 1.0 / scale[d])];
            for (&i, &w) in indep.iter().zip(coeffs.iter()) {
                weights.push((kept[i], -w / scale[i]));
            }
            return Err(inconsistent(kept[d], mismatch, &weights, n));
        }
    }
    let mut keep_rows: Vec<usize> = indep.to_vec();
    keep_rows.sort_unstable();
    let problem = SdpProblem {
        name: p.name.clone(),
        blocks: p.blocks.clone(),
        constraints: keep_rows.iter().map(|&r| p.constraints[r].clone()).collect(),
    };
    let kept2: Vec<usize> = keep_rows.iter().map(|&r| kept[r]).collect();
    let scale2: Vec<f64> = keep_rows.iter().map(|&r| scale[r]).collect();
    let elim = Elimination::build(&problem).ok_or(SdpError::RankDeficient)?;
    Ok(Reduced {
        problem,
        kept: kept2,
        scale: scale2,
        original_rows: n,
        elim,
    })
}
