//! Row grouping and free-variable elimination.
//!
//! Rows that share a psd block form a group. Free scalars touched by a single
//! group are eliminated inside it by projecting the group's rows onto the
//! left null space of their free columns; free scalars shared across groups
//! ("global") stay as unknowns and are handled by a second Schur complement.
//! The projections are block diagonal over connected components of the
//! row/free-variable incidence, so the expensive `Pᵀ M P` products only touch
//! small dense pieces.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::linalg::PivotedQr;
use super::{BlockKind, SdpProblem};

pub(crate) const QR_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub(crate) struct Row {
    /// `(psd block id, i, j, coef)` with `i <= j`.
    pub psd: Vec<(usize, usize, usize, f64)>,
    /// `(free scalar id, coef)`.
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Index maps between problem blocks and solver unknowns.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    /// Problem block index of each psd block.
    pub psd_blocks: Vec<usize>,
    pub psd_sizes: Vec<usize>,
    /// For each problem block: psd id, or offset of its first free scalar.
    pub block_slot: Vec<Slot>,
    /// `(problem block, i, j)` of each free scalar.
    pub free_vars: Vec<(usize, usize, usize)>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Slot {
    Psd(usize),
    Free(usize),
}

fn upper_index(i: usize, j: usize, n: usize) -> usize {
    // row-major packed upper triangle, i <= j
    i * n - i * (i + 1) / 2 + j
}

impl Layout {
    pub fn new(p: &SdpProblem) -> Self {
        let mut psd_blocks = Vec::new();
        let mut psd_sizes = Vec::new();
        let mut block_slot = Vec::new();
        let mut free_vars = Vec::new();
        for (b, blk) in p.blocks.iter().enumerate() {
            match blk.kind {
                BlockKind::Psd => {
                    block_slot.push(Slot::Psd(psd_blocks.len()));
                    psd_blocks.push(b);
                    psd_sizes.push(blk.size);
                }
                BlockKind::FreeSymmetric => {
                    block_slot.push(Slot::Free(free_vars.len()));
                    for i in 0..blk.size {
                        for j in i..blk.size {
                            free_vars.push((b, i, j));
                        }
                    }
                }
            }
        }
        Self {
            psd_blocks,
            psd_sizes,
            block_slot,
            free_vars,
        }
    }

    pub fn rows(&self, p: &SdpProblem) -> Vec<Row> {
        p.constraints
            .iter()
            .map(|c| {
                let mut row = Row {
                    psd: Vec::new(),
                    free: Vec::new(),
                    rhs: c.rhs,
                };
                for e in &c.entries {
                    match self.block_slot[e.block] {
                        Slot::Psd(k) => row.psd.push((k, e.i, e.j, e.coef)),
                        Slot::Free(off) => {
                            let n = p.blocks[e.block].size;
                            row.free.push((off + upper_index(e.i, e.j, n), e.coef));
                        }
                    }
                }
                row
            })
            .collect()
    }
}

/// A piece of a group's projection acting on a subset of its rows.
#[derive(Clone, Debug)]
pub(crate) struct Component {
    /// Local row indices within the group.
    pub rows: Vec<usize>,
    pub col_offset: usize,
    pub ncols: usize,
    /// Orthonormal basis (rows × ncols); `None` means identity.
    pub basis: Option<DMatrix<f64>>,
    /// Free scalars eliminated in this component, with the factorization used to recover them.
    pub local_vars: Vec<usize>,
    pub qr: Option<PivotedQr>,
}

#[derive(Clone, Debug)]
pub(crate) struct Group {
    pub rows: Vec<usize>,
    pub comps: Vec<Component>,
    /// Projected dimension.
    pub dim: usize,
    /// Offset of this group in the projected dual vector.
    pub offset: usize,
    /// Projected global free columns, `dim × n_global`.
    pub c: DMatrix<f64>,
}

impl Group {
    /// `Pᵀ v` for a vector over the group's rows.
    pub fn project(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for comp in &self.comps {
            let sub = DVector::from_iterator(comp.rows.len(), comp.rows.iter().map(|&r| v[r]));
            let piece = match &comp.basis {
                Some(b) => b.tr_mul(&sub),
                None => sub,
            };
            out.rows_mut(comp.col_offset, comp.ncols).copy_from(&piece);
        }
        out
    }

    /// `P w` back onto the group's rows.
    pub fn lift(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for comp in &self.comps {
            let sub = DVector::from_column_slice(&w[comp.col_offset..comp.col_offset + comp.ncols]);
            let piece = match &comp.basis {
                Some(b) => b * sub,
                None => sub,
            };
            for (t, &r) in comp.rows.iter().enumerate() {
                out[r] = piece[t];
            }
        }
        out
    }

    /// `Pᵀ B` for a matrix over the group's rows.
    pub fn project_rows(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, b.ncols());
        for comp in &self.comps {
            let sub = b.select_rows(comp.rows.iter());
            let piece = match &comp.basis {
                Some(q) => q.tr_mul(&sub),
                None => sub,
            };
            out.rows_mut(comp.col_offset, comp.ncols).copy_from(&piece);
        }
        out
    }

    /// `Pᵀ M P` for a symmetric matrix over the group's rows.
    pub fn sandwich(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut mp = DMatrix::zeros(m.nrows(), self.dim);
        for comp in &self.comps {
            let sub = m.select_columns(comp.rows.iter());
            let piece = match &comp.basis {
                Some(q) => sub * q,
                None => sub,
            };
            mp.columns_mut(comp.col_offset, comp.ncols).copy_from(&piece);
        }
        let mut out = self.project_rows(&mp);
        // symmetrize against rounding
        for i in 0..out.nrows() {
            for j in 0..i {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Elimination {
    pub layout: Layout,
    pub rows: Vec<Row>,
    pub groups: Vec<Group>,
    /// Free scalars kept as unknowns.
    pub global_vars: Vec<usize>,
    pub dim: usize,
    pub b_proj: DVector<f64>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Builds the rows of `A_g W A_gᵀ` (trace inner products) for one group.
pub(crate) fn group_schur(rows: &[Row], group_rows: &[usize], w: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = group_rows.len();
    let mut out = DMatrix::zeros(m, m);
    let mut scratch: Vec<Option<DMatrix<f64>>> = vec![None; w.len()];
    for (li, &ri) in group_rows.iter().enumerate() {
        let row = &rows[ri];
        let mut touched: Vec<usize> = Vec::new();
        for &(k, p, q, c) in &row.psd {
            let wk = &w[k];
            let t = scratch[k].get_or_insert_with(|| DMatrix::zeros(wk.nrows(), wk.ncols()));
            if !touched.contains(&k) {
                t.fill(0.0);
                touched.push(k);
            }
            if p == q {
                t.ger(c, &wk.column(p), &wk.column(p), 1.0);
            } else {
                t.ger(0.5 * c, &wk.column(p), &wk.column(q), 1.0);
                t.ger(0.5 * c, &wk.column(q), &wk.column(p), 1.0);
            }
        }
        for (lj, &rj) in group_rows.iter().enumerate().skip(li) {
            let mut acc = 0.0;
            for &(k, p, q, c) in &rows[rj].psd {
                if let (true, Some(t)) = (touched.contains(&k), scratch[k].as_ref()) {
                    acc += c * t[(p, q)];
                }
            }
            out[(li, lj)] = acc;
            out[(lj, li)] = acc;
        }
    }
    out
}

impl Elimination {
    /// Returns `None` when the projected rows are linearly dependent.
    pub fn build(p: &SdpProblem) -> Option<Self> {
        let layout = Layout::new(p);
        let rows = layout.rows(p);
        let structured = rows.iter().all(|r| !r.psd.is_empty());
        if structured {
            if let Some(e) = Self::build_with(layout.clone(), rows.clone(), false) {
                return Some(e);
            }
        }
        Self::build_with(layout, rows, true)
    }

    fn build_with(layout: Layout, rows: Vec<Row>, single_group: bool) -> Option<Self> {
        let m = rows.len();
        let nfree = layout.free_vars.len();
        // group rows
        let mut uf = UnionFind::new(m);
        if single_group {
            for r in 1..m {
                uf.union(0, r);
            }
        } else {
            let mut first_row: Vec<Option<usize>> = vec![None; layout.psd_blocks.len()];
            for (r, row) in rows.iter().enumerate() {
                for &(k, ..) in &row.psd {
                    match first_row[k] {
                        Some(f) => uf.union(f, r),
                        None => first_row[k] = Some(r),
                    }
                }
            }
        }
        let mut group_of_root: Vec<Option<usize>> = vec![None; m];
        let mut group_rows: Vec<Vec<usize>> = Vec::new();
        let mut row_group = vec![0usize; m];
        let mut row_local = vec![0usize; m];
        for r in 0..m {
            let root = uf.find(r);
            let g = *group_of_root[root].get_or_insert_with(|| {
                group_rows.push(Vec::new());
                group_rows.len() - 1
            });
            row_group[r] = g;
            row_local[r] = group_rows[g].len();
            group_rows[g].push(r);
        }
        // classify free scalars
        let mut var_group: Vec<Option<usize>> = vec![None; nfree];
        let mut var_shared = vec![false; nfree];
        for (r, row) in rows.iter().enumerate() {
            for &(f, _) in &row.free {
                match var_group[f] {
                    None => var_group[f] = Some(row_group[r]),
                    Some(g) if g != row_group[r] => var_shared[f] = true,
                    _ => {}
                }
            }
        }
        let mut global_candidates: Vec<usize> = (0..nfree).filter(|&f| var_shared[f]).collect();
        let global_pos = |vars: &[usize], f: usize| vars.binary_search(&f).ok();

        let mut groups = Vec::with_capacity(group_rows.len());
        let mut offset = 0;
        for (g, grows) in group_rows.iter().enumerate() {
            let mg = grows.len();
            // components over local free vars
            let mut cuf = UnionFind::new(mg);
            let mut var_first: std::collections::HashMap<usize, usize> = Default::default();
            for (lr, &r) in grows.iter().enumerate() {
                for &(f, _) in &rows[r].free {
                    if var_shared[f] {
                        continue;
                    }
                    match var_first.get(&f) {
                        Some(&lf) => cuf.union(lf, lr),
                        None => {
                            var_first.insert(f, lr);
                        }
                    }
                }
            }
            let mut comp_of_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            let mut identity_rows = Vec::new();
            for (lr, &r) in grows.iter().enumerate() {
                let has_local = rows[r].free.iter().any(|&(f, _)| !var_shared[f]);
                if has_local {
                    comp_of_root.entry(cuf.find(lr)).or_default().push(lr);
                } else {
                    identity_rows.push(lr);
                }
            }
            let mut comps = Vec::new();
            let mut col = 0;
            if !identity_rows.is_empty() {
                let n = identity_rows.len();
                comps.push(Component {
                    rows: identity_rows,
                    col_offset: col,
                    ncols: n,
                    basis: None,
                    local_vars: Vec::new(),
                    qr: None,
                });
                col += n;
            }
            for (_, crow) in comp_of_root {
                let mut local_vars: Vec<usize> = crow
                    .iter()
                    .flat_map(|&lr| rows[grows[lr]].free.iter().map(|x| x.0))
                    .filter(|&f| !var_shared[f])
                    .collect();
                local_vars.sort_unstable();
                local_vars.dedup();
                let mut bmat = DMatrix::zeros(crow.len(), local_vars.len());
                for (t, &lr) in crow.iter().enumerate() {
                    for &(f, c) in &rows[grows[lr]].free {
                        if let Ok(pos) = local_vars.binary_search(&f) {
                            bmat[(t, pos)] += c;
                        }
                    }
                }
                let qr = PivotedQr::new(&bmat, QR_REL_TOL);
                let basis = qr.null_left();
                let n = basis.ncols();
                comps.push(Component {
                    rows: crow,
                    col_offset: col,
                    ncols: n,
                    basis: Some(basis),
                    local_vars,
                    qr: Some(qr),
                });
                col += n;
            }
            let mut group = Group {
                rows: grows.clone(),
                comps,
                dim: col,
                offset,
                c: DMatrix::zeros(0, 0),
            };
            let mut bglob = DMatrix::zeros(mg, global_candidates.len());
            for (lr, &r) in grows.iter().enumerate() {
                for &(f, c) in &rows[r].free {
                    if let Some(pos) = global_pos(&global_candidates, f) {
                        bglob[(lr, pos)] += c;
                    }
                }
            }
            group.c = group.project_rows(&bglob);
            offset += col;
            groups.push(group);
            let _ = g;
        }
        let _ = &row_local;

        // rank check on each group at W = I
        let eye: Vec<DMatrix<f64>> = layout.psd_sizes.iter().map(|&n| DMatrix::identity(n, n)).collect();
        let mut d_factors = Vec::with_capacity(groups.len());
        for g in &groups {
            if g.dim == 0 {
                d_factors.push(None);
                continue;
            }
            let mg = group_schur(&rows, &g.rows, &eye);
            let d = g.sandwich(&mg);
            let scale = d.diagonal().amax().max(1e-300);
            let chol = Cholesky::new(d.clone())?;
            // reject numerically singular pivots
            let lmin = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &x| a.min(x * x));
            if lmin < 1e-13 * scale {
                return None;
            }
            d_factors.push(Some(chol));
        }
        // drop redundant global columns
        if !global_candidates.is_empty() {
            let dim: usize = groups.iter().map(|g| g.dim).sum();
            let mut stacked = DMatrix::zeros(dim, global_candidates.len());
            for (g, chol) in groups.iter().zip(&d_factors) {
                if let Some(ch) = chol {
                    // whiten by D^{-1/2} so rank reflects the Schur complement
                    let w = ch.l().solve_lower_triangular(&g.c).unwrap_or_else(|| g.c.clone());
                    stacked.rows_mut(g.offset, g.dim).copy_from(&w);
                }
            }
            let qr = PivotedQr::new(&stacked, QR_REL_TOL);
            let mut keep: Vec<usize> = qr.perm[..qr.rank].to_vec();
            keep.sort_unstable();
            for g in groups.iter_mut() {
                g.c = g.c.select_columns(keep.iter());
            }
            global_candidates = keep.iter().map(|&i| global_candidates[i]).collect();
        }
        let dim = offset;
        let mut b_proj = DVector::zeros(dim);
        for g in &groups {
            let b: Vec<f64> = g.rows.iter().map(|&r| rows[r].rhs).collect();
            b_proj.rows_mut(g.offset, g.dim).copy_from(&g.project(&b));
        }
        Some(Self {
            layout,
            rows,
            groups,
            global_vars: global_candidates,
            dim,
            b_proj,
        })
    }

    pub fn n_global(&self) -> usize {
        self.global_vars.len()
    }

    /// Row activities `A_psd(X)` over the original (normalized) rows.
    pub fn row_activity(&self, x: &[DMatrix<f64>]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.psd.iter().map(|&(k, p, q, c)| c * x[k][(p, q)]).sum())
            .collect()
    }

    /// `Pᵀ A_psd(X)`.
    pub fn apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let act = self.row_activity(x);
        let mut out = DVector::zeros(self.dim);
        for g in &self.groups {
            let v: Vec<f64> = g.rows.iter().map(|&r| act[r]).collect();
            out.rows_mut(g.offset, g.dim).copy_from(&g.project(&v));
        }
        out
    }

    /// Lifts a projected dual vector back to original rows.
    pub fn lift(&self, y: &DVector<f64>) -> Vec<f64> {
        let mut z = vec![0.0; self.rows.len()];
        for g in &self.groups {
            let piece = g.lift(&y.as_slice()[g.offset..g.offset + g.dim]);
            for (t, &r) in g.rows.iter().enumerate() {
                z[r] = piece[t];
            }
        }
        z
    }

    /// `Σ z_r A_r` on psd blocks for original-row weights `z`.
    pub fn adjoint_rows(&self, z: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.layout.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (row, &zr) in self.rows.iter().zip(z) {
            if zr == 0.0 {
                continue;
            }
            for &(k, p, q, c) in &row.psd {
                if p == q {
                    out[k][(p, p)] += c * zr;
                } else {
                    out[k][(p, q)] += 0.5 * c * zr;
                    out[k][(q, p)] += 0.5 * c * zr;
                }
            }
        }
        out
    }

    /// `A_psdᵀ P y`.
    pub fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.adjoint_rows(&self.lift(y))
    }

    pub fn apply_global(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for g in &self.groups {
            out.rows_mut(g.offset, g.dim).copy_from(&(&g.c * u));
        }
        out
    }

    pub fn adjoint_global(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_global());
        for g in &self.groups {
            out += g.c.tr_mul(&y.rows(g.offset, g.dim));
        }
        out
    }

    /// Recovers every free scalar given psd values and the global unknowns.
    pub fn recover_free(&self, x: &[DMatrix<f64>], u: &DVector<f64>) -> Vec<f64> {
        let mut free = vec![0.0; self.layout.free_vars.len()];
        for (t, &f) in self.global_vars.iter().enumerate() {
            free[f] = u[t];
        }
        let act = self.row_activity(x);
        for g in &self.groups {
            for comp in &g.comps {
                let Some(qr) = &comp.qr else { continue };
                let rhs = DVector::from_iterator(
                    comp.rows.len(),
                    comp.rows.iter().map(|&lr| {
                        let r = g.rows[lr];
                        let glob: f64 = self.rows[r]
                            .free
                            .iter()
                            .filter(|(f, _)| comp.local_vars.binary_search(f).is_err())
                            .map(|&(f, c)| c * free[f])
                            .sum();
                        self.rows[r].rhs - act[r] - glob
                    }),
                );
                let sol = qr.solve_ls(&rhs);
                for (t, &f) in comp.local_vars.iter().enumerate() {
                    free[f] = sol[t];
                }
            }
        }
        free
    }
}
