//! Homogeneous self-dual interior-point loop (NT scaling, Mehrotra corrector).
//!
//! The feasibility problem is embedded with a trace objective `min Σ tr X_k`:
//!   A(X) + C u = b τ,   Aᵀ y + S = I τ,   Cᵀ y = 0,   bᵀ y − tr X = κ,
//! where `A` is the projected psd part, `C` the projected global free columns.
//! Without the objective the feasible set of a homogeneous certificate is an
//! unbounded cone and the iterates drift off along it. `τ > 0` at the limit
//! gives a primal point `X/τ`; `κ > 0` gives a ray with `bᵀy > 0`, `-Aᵀy ⪰ 0`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use super::preprocess::Reduced;
use super::structure::{group_schur, Elimination, Slot};
use super::{SdpOptions, SdpStatus};

const STEP_FACTOR: f64 = 0.99;
const REFINE_STEPS: usize = 2;
/// Relative dual residual at which a breakdown still yields a usable ray.
const RAY_ACCEPT: f64 = 1e-6;
/// Iterations stop once `μ` has fallen this far below its starting value.
const MU_FLOOR: f64 = 1e-14;

pub(crate) struct IpmOutput {
    pub status: SdpStatus,
    pub message: String,
    pub iterations: usize,
    pub blocks: Option<Vec<DMatrix<f64>>>,
    pub ray: Option<Vec<f64>>,
}

struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let l1 = Cholesky::new(x.clone())?.unpack();
    let l2 = Cholesky::new(s.clone())?.unpack();
    let prod = l2.tr_mul(&l1);
    let svd = SVD::new(prod, true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let inv_sqrt = lambda.map(|l| 1.0 / l.sqrt());
    // G = L1 V Λ^{-1/2}, G⁻¹ = Λ^{-1/2} Uᵀ L2ᵀ
    let mut g = &l1 * v;
    for (j, mut col) in g.column_iter_mut().enumerate() {
        col *= inv_sqrt[j];
    }
    let mut g_inv = u.transpose() * l2.transpose();
    for (i, mut row) in g_inv.row_iter_mut().enumerate() {
        row *= inv_sqrt[i];
    }
    let w = &g * g.transpose();
    Some(Scaling { g, g_inv, w, lambda })
}

/// Largest step `α` keeping `diag(λ) + α Z ⪰ 0`.
fn max_step(lambda: &DVector<f64>, z: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let mut m = z.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (z[(i, j)] + z[(j, i)]) / (lambda[i] * lambda[j]).sqrt();
        }
    }
    let lmin = SymmetricEigen::new(m).eigenvalues.min();
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_scalar(v: f64, dv: f64) -> f64 {
    if dv < 0.0 {
        -v / dv
    } else {
        f64::INFINITY
    }
}

fn trace(ms: &[DMatrix<f64>]) -> f64 {
    ms.iter().map(|m| m.trace()).sum()
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Factored `[M C; Cᵀ 0]` with `M` block diagonal over groups.
struct Kkt {
    d: Vec<Option<Cholesky<f64, nalgebra::Dyn>>>,
    e: Vec<DMatrix<f64>>,
    f: Option<Cholesky<f64, nalgebra::Dyn>>,
}

/// Cholesky with a growing diagonal shift when roundoff makes `m` slightly
/// indefinite; iterative refinement absorbs the perturbation.
fn regularized_cholesky(mut m: DMatrix<f64>, what: &str) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Some(ch);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut added = 0.0;
    for k in [1e-14, 1e-12, 1e-10, 1e-8] {
        let reg = k * scale;
        for i in 0..m.nrows() {
            m[(i, i)] += reg - added;
        }
        added = reg;
        if let Some(ch) = Cholesky::new(m.clone()) {
            log::debug!("{what} block needed diagonal shift {k:.0e}");
            return Some(ch);
        }
    }
    log::debug!("{what} block not positive definite (n = {})", m.nrows());
    None
}

impl Kkt {
    fn factor(elim: &Elimination, w: &[DMatrix<f64>]) -> Option<Self> {
        let ng = elim.n_global();
        let mut d = Vec::with_capacity(elim.groups.len());
        let mut e = Vec::with_capacity(elim.groups.len());
        let mut f = DMatrix::zeros(ng, ng);
        for g in &elim.groups {
            if g.dim == 0 {
                d.push(None);
                e.push(DMatrix::zeros(0, ng));
                continue;
            }
            let m = group_schur(&elim.rows, &g.rows, w);
            let dg = g.sandwich(&m);
            let ch = regularized_cholesky(dg, "group")?;
            let eg = ch.solve(&g.c);
            if ng > 0 {
                f += g.c.tr_mul(&eg);
            }
            d.push(Some(ch));
            e.push(eg);
        }
        let f = if ng > 0 { Some(regularized_cholesky(f, "global")?) } else { None };
        Some(Self { d, e, f })
    }

    fn solve(&self, elim: &Elimination, ry: &DVector<f64>, ru: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut t = DVector::zeros(elim.dim);
        for (g, ch) in elim.groups.iter().zip(&self.d) {
            if let Some(ch) = ch {
                let piece = ch.solve(&ry.rows(g.offset, g.dim).into_owned());
                t.rows_mut(g.offset, g.dim).copy_from(&piece);
            }
        }
        let ng = elim.n_global();
        let u = match &self.f {
            Some(f) => {
                let rhs = elim.adjoint_global(&t) - ru;
                f.solve(&rhs)
            }
            None => DVector::zeros(ng),
        };
        if ng > 0 {
            for (g, eg) in elim.groups.iter().zip(&self.e) {
                if g.dim > 0 {
                    let corr = eg * &u;
                    let mut view = t.rows_mut(g.offset, g.dim);
                    view -= corr;
                }
            }
        }
        (t, u)
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    du: DVector<f64>,
    dtau: f64,
    dkappa: f64,
    zx: Vec<DMatrix<f64>>,
    zs: Vec<DMatrix<f64>>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    ru: DVector<f64>,
    rg: f64,
}

struct State<'a> {
    elim: &'a Elimination,
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    u: DVector<f64>,
    tau: f64,
    kappa: f64,
}

impl State<'_> {
    fn residuals(&self) -> Residuals {
        let e = self.elim;
        let rp = e.apply(&self.x) + e.apply_global(&self.u) - &e.b_proj * self.tau;
        let aty = e.adjoint(&self.y);
        let rd = aty
            .iter()
            .zip(&self.s)
            .map(|(a, s)| {
                let mut r = a + s;
                for i in 0..r.nrows() {
                    r[(i, i)] -= self.tau;
                }
                r
            })
            .collect();
        let ru = e.adjoint_global(&self.y);
        let rg = e.b_proj.dot(&self.y) - trace(&self.x) - self.kappa;
        Residuals { rp, rd, ru, rg }
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        sc: &[Scaling],
        kkt: &Kkt,
        res: &Residuals,
        eta: f64,
        q: &[DMatrix<f64>],
        h_tau: f64,
        b_sol: &(DVector<f64>, DVector<f64>),
        a_c: &DVector<f64>,
        ccw: f64,
    ) -> Direction {
        let e = self.elim;
        // GQGᵀ and GQGᵀ + η W Rd W
        let gqg: Vec<DMatrix<f64>> = sc.iter().zip(q).map(|(s, q)| &s.g * q * s.g.transpose()).collect();
        let inner_m: Vec<DMatrix<f64>> = gqg
            .iter()
            .zip(sc)
            .zip(&res.rd)
            .map(|((m, s), rd)| m + (&s.w * rd * &s.w) * eta)
            .collect();
        let r1 = -(&res.rp * eta) - e.apply(&inner_m);
        let ru = -(&res.ru * eta);
        let (yr, ur) = kkt.solve(e, &r1, &ru);
        let (yb, ub) = b_sol;
        let b = &e.b_proj;
        let bc = b - a_c;
        let denom = bc.dot(yb) + ccw + self.kappa / self.tau;
        let dtau = (-eta * res.rg - bc.dot(&yr) + trace(&inner_m) + h_tau / self.tau) / denom;
        let mut dy = yb * dtau + yr;
        let mut du = ub * dtau + ur;
        let build = |dy: &DVector<f64>| {
            let aty = e.adjoint(dy);
            let ds: Vec<DMatrix<f64>> = res
                .rd
                .iter()
                .zip(&aty)
                .map(|(rd, a)| {
                    let mut d = -(rd * eta) - a;
                    for i in 0..d.nrows() {
                        d[(i, i)] += dtau;
                    }
                    d
                })
                .collect();
            let dx: Vec<DMatrix<f64>> = gqg
                .iter()
                .zip(sc)
                .zip(&ds)
                .map(|((m, s), ds)| m - &s.w * ds * &s.w)
                .collect();
            (dx, ds)
        };
        let (mut dx, mut ds) = build(&dy);
        // iterative refinement against the exact operator; the formed Schur
        // complement loses accuracy as the iterates approach the boundary
        let target = res.rp.norm() * eta;
        for _ in 0..REFINE_STEPS {
            let rho = e.apply(&dx) + e.apply_global(&du) - b * dtau + &res.rp * eta;
            let rho_u = e.adjoint_global(&dy) + &res.ru * eta;
            if rho.norm() + rho_u.norm() <= 1e-3 * target.max(1e-300) {
                break;
            }
            let (cy, cu) = kkt.solve(e, &(-rho), &(-rho_u));
            dy += cy;
            du += cu;
            (dx, ds) = build(&dy);
        }
        let dkappa = (h_tau - self.kappa * dtau) / self.tau;
        let zx = sc.iter().zip(&dx).map(|(s, d)| &s.g_inv * d * s.g_inv.transpose()).collect();
        let zs = sc.iter().zip(&ds).map(|(s, d)| s.g.transpose() * d * &s.g).collect();
        Direction {
            dx,
            ds,
            dy,
            du,
            dtau,
            dkappa,
            zx,
            zs,
        }
    }

    fn step_bound(&self, sc: &[Scaling], d: &Direction) -> f64 {
        let mut a = max_step_scalar(self.tau, d.dtau).min(max_step_scalar(self.kappa, d.dkappa));
        for (s, (zx, zs)) in sc.iter().zip(d.zx.iter().zip(&d.zs)) {
            a = a.min(max_step(&s.lambda, zx)).min(max_step(&s.lambda, zs));
        }
        a
    }

    fn primal_point(&self) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let x = self.x.iter().map(|m| m / self.tau).collect();
        (x, &self.u / self.tau)
    }
}

fn assemble(red: &Reduced, x: &[DMatrix<f64>], u: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let e = &red.elim;
    let free = e.recover_free(x, u);
    red.problem
        .blocks
        .iter()
        .zip(&e.layout.block_slot)
        .map(|(blk, slot)| match *slot {
            Slot::Psd(k) => x[k].clone(),
            Slot::Free(off) => {
                let mut m = DMatrix::zeros(blk.size, blk.size);
                let mut t = off;
                for i in 0..blk.size {
                    for j in i..blk.size {
                        m[(i, j)] = free[t];
                        m[(j, i)] = free[t];
                        t += 1;
                    }
                }
                m
            }
        })
        .collect()
}

pub(crate) fn run(red: &Reduced, opts: &SdpOptions) -> IpmOutput {
    let elim = &red.elim;
    let sizes = &elim.layout.psd_sizes;
    let nu: f64 = sizes.iter().sum::<usize>() as f64;
    let mut st = State {
        elim,
        x: sizes.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        s: sizes.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        y: DVector::zeros(elim.dim),
        u: DVector::zeros(elim.n_global()),
        tau: 1.0,
        kappa: 1.0,
    };
    let ptol = 1e-3 * opts.feas_tol;
    let bnorm = elim.b_proj.norm();
    // when the loop breaks down close to a feasible point, hand that point to
    // the independent verification instead of giving up
    let mut best: Option<(f64, Vec<DMatrix<f64>>, DVector<f64>)> = None;
    // likewise for the best Farkas candidate, scored by relative dual residual
    let mut best_ray: Option<(f64, DVector<f64>)> = None;
    let ray_out = |y: &DVector<f64>, it: usize, msg: String| {
        let z = elim.lift(y);
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        IpmOutput {
            status: SdpStatus::Infeasible,
            message: msg,
            iterations: it,
            blocks: None,
            ray: Some(red.ray_to_original(&neg)),
        }
    };
    let fail = |best: &Option<(f64, Vec<DMatrix<f64>>, DVector<f64>)>,
                best_ray: &Option<(f64, DVector<f64>)>,
                st: &State,
                it: usize,
                msg: String| {
        if let Some((r, y)) = best_ray {
            if *r <= RAY_ACCEPT && best.as_ref().is_none_or(|b| b.0 > 0.05 * opts.feas_tol * (1.0 + bnorm)) {
                return ray_out(y, it, format!("{msg}; accepted infeasibility certificate (residual {r:.2e})"));
            }
        }
        let (pres, x, u) = match best {
            Some((p, x, u)) => (*p, x.clone(), u.clone()),
            None => {
                let (x, u) = st.primal_point();
                (f64::INFINITY, x, u)
            }
        };
        let near = pres <= 0.05 * opts.feas_tol * (1.0 + bnorm);
        IpmOutput {
            status: if near { SdpStatus::Feasible } else { SdpStatus::NumericalFailure },
            message: if near {
                format!("{msg}; accepted nearby point (residual {pres:.2e})")
            } else {
                msg
            },
            iterations: it,
            blocks: Some(assemble(red, &x, &u)),
            ray: None,
        }
    };
    let mu0 = (inner(&st.x, &st.s) + st.tau * st.kappa) / (nu + 1.0);
    let mut stalls = 0;
    for it in 0..=opts.max_iter {
        let res = st.residuals();
        let pres = res.rp.norm() / st.tau;
        if pres <= ptol * (1.0 + bnorm) {
            let (x, u) = st.primal_point();
            log::debug!("sdp feasible after {it} iterations (residual {pres:.2e})");
            return IpmOutput {
                status: SdpStatus::Feasible,
                message: format!("feasible point found after {it} iterations"),
                iterations: it,
                blocks: Some(assemble(red, &x, &u)),
                ray: None,
            };
        }
        if best.as_ref().is_none_or(|b| pres < b.0) {
            let (x, u) = st.primal_point();
            best = Some((pres, x, u));
        }
        let by = elim.b_proj.dot(&st.y);
        let ray_res = res
            .rd
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for i in 0..r.nrows() {
                    r[(i, i)] += st.tau;
                }
                r.norm_squared()
            })
            .sum::<f64>()
            .sqrt();
        if by > 0.0 {
            let r = (ray_res / by).max(res.ru.norm() / by);
            if r <= opts.feas_tol {
                return ray_out(&st.y, it, format!("infeasibility certificate found after {it} iterations"));
            }
            if best_ray.as_ref().is_none_or(|b| r < b.0) {
                best_ray = Some((r, st.y.clone()));
            }
        }
        if it == opts.max_iter {
            break;
        }
        let mu = (inner(&st.x, &st.s) + st.tau * st.kappa) / (nu + 1.0);
        if !(mu > MU_FLOOR * mu0) || !mu.is_finite() {
            return fail(&best, &best_ray, &st, it, format!("complementarity collapsed (mu = {mu:.2e})"));
        }
        let Some(sc) = st
            .x
            .iter()
            .zip(&st.s)
            .map(|(x, s)| nt_scaling(x, s))
            .collect::<Option<Vec<_>>>()
        else {
            return fail(&best, &best_ray, &st, it, "iterate left the cone".into());
        };
        let w: Vec<DMatrix<f64>> = sc.iter().map(|s| s.w.clone()).collect();
        let Some(kkt) = Kkt::factor(elim, &w) else {
            return fail(&best, &best_ray, &st, it, "normal equations not positive definite".into());
        };
        // A(W I W) and ⟨I, W I W⟩ enter through the τ column
        let wcw: Vec<DMatrix<f64>> = w.iter().map(|w| w * w).collect();
        let a_c = elim.apply(&wcw);
        let ccw = trace(&wcw);
        let b_sol = kkt.solve(elim, &(&elim.b_proj + &a_c), &DVector::zeros(elim.n_global()));

        // predictor
        let q_aff: Vec<DMatrix<f64>> = sc.iter().map(|s| DMatrix::from_diagonal(&(-&s.lambda))).collect();
        let aff = st.direction(&sc, &kkt, &res, 1.0, &q_aff, -st.tau * st.kappa, &b_sol, &a_c, ccw);
        let a_aff = st.step_bound(&sc, &aff).min(1.0);
        let sigma = (1.0 - a_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let q: Vec<DMatrix<f64>> = sc
            .iter()
            .zip(aff.zx.iter().zip(&aff.zs))
            .map(|(s, (zx, zs))| {
                let n = s.lambda.len();
                let prod = zx * zs;
                DMatrix::from_fn(n, n, |i, j| {
                    let mut h = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                    if i == j {
                        h += sigma * mu - s.lambda[i] * s.lambda[i];
                    }
                    2.0 * h / (s.lambda[i] + s.lambda[j])
                })
            })
            .collect();
        let h_tau = sigma * mu - st.tau * st.kappa - aff.dtau * aff.dkappa;
        let dir = st.direction(&sc, &kkt, &res, 1.0 - sigma, &q, h_tau, &b_sol, &a_c, ccw);
        let alpha = (STEP_FACTOR * st.step_bound(&sc, &dir)).min(1.0);
        if !alpha.is_finite() || alpha < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                return fail(&best, &best_ray, &st, it, format!("step length collapsed (alpha = {alpha:.2e})"));
            }
            continue;
        }
        for (x, d) in st.x.iter_mut().zip(&dir.dx) {
            *x += d * alpha;
            let t = x.transpose();
            *x = (&*x + t) * 0.5;
        }
        for (s, d) in st.s.iter_mut().zip(&dir.ds) {
            *s += d * alpha;
            let t = s.transpose();
            *s = (&*s + t) * 0.5;
        }
        st.y += &dir.dy * alpha;
        st.u += &dir.du * alpha;
        st.tau += alpha * dir.dtau;
        st.kappa += alpha * dir.dkappa;
        log::trace!(
            "it {it}: mu {mu:.3e} alpha {alpha:.3} sigma {sigma:.3} tau {:.3e} kappa {:.3e} pres {pres:.3e}",
            st.tau,
            st.kappa
        );
    }
    fail(&best, &best_ray, &st, opts.max_iter, format!("no certificate within {} iterations", opts.max_iter))
}
