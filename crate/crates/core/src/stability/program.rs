//! SOS programs for the four certificate modes.
//!
//! Everything is assembled in rescaled coordinates: each parameter is mapped
//! to `[-1, 1]` through its box hull (`θ = c + w θ'`) and the clock to
//! `s = τ/T̄ ∈ [0, 1]`. Set descriptions are renormalized to unit largest
//! coefficient. The unknown `S'(s, θ')` is mapped back by [`Scaling::unscale`].

use crate::model::LpvSystem;
use crate::poly::{PolyMatrix, Polynomial, Var};
use crate::sos::{AffineMatrix, SosError, SosProgram};

use super::{CertifyOptions, Mode, StabilityError};

#[derive(Clone, Debug)]
pub struct Scaling {
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    pub dwell: Option<f64>,
}

impl Scaling {
    fn new(sys: &LpvSystem, dwell: Option<f64>) -> Self {
        let (center, width) = sys
            .params
            .box_hull
            .iter()
            .map(|&(lo, hi)| {
                let w = 0.5 * (hi - lo);
                if w > 0.0 {
                    (0.5 * (lo + hi), w)
                } else {
                    (0.0, 1.0)
                }
            })
            .unzip();
        Self { center, width, dwell }
    }

    /// `θ_i ↦ c_i + w_i θ'_i`.
    fn forward(&self) -> Vec<(Var, Polynomial)> {
        (0..self.center.len())
            .map(|i| {
                let v = Var::rho(i);
                (v, Polynomial::constant(self.center[i]).add(&Polynomial::var(v).scale(self.width[i])))
            })
            .collect()
    }

    /// Maps `S'(s, θ')` back to `S(τ, θ)`.
    pub fn unscale(&self, s: &PolyMatrix) -> PolyMatrix {
        let mut subs: Vec<(Var, Polynomial)> = (0..self.center.len())
            .map(|i| {
                let v = Var::rho(i);
                let p = Polynomial::var(v).sub(&Polynomial::constant(self.center[i])).scale(1.0 / self.width[i]);
                (v, p)
            })
            .collect();
        if let Some(t) = self.dwell {
            subs.push((Var::TAU, Polynomial::var(Var::TAU).scale(1.0 / t)));
        }
        s.substitute_all(&subs)
    }
}

fn normalized(p: &Polynomial) -> Polynomial {
    let m = p.max_abs_coeff();
    if m > 0.0 {
        p.scale(1.0 / m)
    } else {
        p.clone()
    }
}

/// Problem data after rescaling.
struct Scaled {
    n: usize,
    np: usize,
    a: PolyMatrix,
    g: Vec<Polynomial>,
    h: Vec<Polynomial>,
    /// Vertex derivatives of `θ'`.
    vertices: Vec<Vec<Polynomial>>,
}

fn scaled_data(sys: &LpvSystem, sc: &Scaling, mode: Mode) -> Scaled {
    let fwd = sc.forward();
    let np = sys.num_params();
    let vertices = if mode == Mode::Quadratic {
        vec![vec![Polynomial::zero(); np]]
    } else {
        sys.derivs
            .vertices()
            .iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .map(|(i, p)| p.substitute_all(&fwd).scale(1.0 / sc.width[i]))
                    .collect()
            })
            .collect()
    };
    Scaled {
        n: sys.n,
        np,
        a: sys.a.substitute_all(&fwd),
        g: sys.params.inequalities.iter().map(|g| normalized(&g.substitute_all(&fwd))).collect(),
        h: sys.params.equalities.iter().map(|h| normalized(&h.substitute_all(&fwd))).collect(),
        vertices,
    }
}

/// An assembled program plus what is needed to read its solution.
pub struct Assembled {
    pub program: SosProgram,
    /// `S'` in rescaled variables.
    pub s: AffineMatrix,
    pub scaling: Scaling,
    /// Degree budget `D` shared by all constraints.
    pub budget: u32,
}

struct Builder<'a> {
    prog: SosProgram,
    data: &'a Scaled,
    budget: u32,
}

impl Builder<'_> {
    fn eye(&self, scale: f64) -> PolyMatrix {
        PolyMatrix::identity(self.data.n).scale(scale)
    }

    /// `target − Σ Γ_i g_i(vars) − Σ H_j h_j(vars)` with SOS `Γ_i` and free `H_j`.
    fn with_set_multipliers(
        &mut self,
        label: &str,
        mut target: AffineMatrix,
        mult_vars: &[Var],
        rename: &dyn Fn(&Polynomial) -> Polynomial,
    ) -> Result<AffineMatrix, SosError> {
        let n = self.data.n;
        let budget = self.budget as i64;
        for (i, g) in self.data.g.iter().enumerate() {
            let deg = budget - g.degree() as i64;
            if deg < 0 {
                continue;
            }
            let deg = (deg as u32) & !1;
            let gamma = self.prog.add_sos_multiplier(&format!("{label}.g{}", i + 1), n, mult_vars, deg);
            target = target.sub(&gamma.scale_poly(&rename(g)))?;
        }
        for (j, h) in self.data.h.iter().enumerate() {
            let deg = budget - h.degree() as i64;
            if deg < 0 {
                continue;
            }
            let mult = self.prog.add_symmetric_multiplier(&format!("{label}.h{}", j + 1), n, mult_vars, deg as u32);
            target = target.sub(&mult.scale_poly(&rename(h)))?;
        }
        Ok(target)
    }

    fn require(&mut self, label: &str, target: &AffineMatrix) -> Result<(), SosError> {
        self.prog.add_sos_matrix_constraint(label, target, None)?;
        Ok(())
    }

    /// `Σ_i ∂S/∂θ'_i μ_i + He[S A]`.
    fn lie_part(&self, s: &AffineMatrix, mu: &[Polynomial]) -> Result<AffineMatrix, SosError> {
        let mut out = s.mul_poly_matrix(&self.data.a)?.he()?;
        for (i, m) in mu.iter().enumerate() {
            if !m.is_zero() {
                out = out.add(&s.differentiate(Var::rho(i)).scale_poly(m))?;
            }
        }
        Ok(out)
    }
}

pub fn assemble(
    sys: &LpvSystem,
    mode: Mode,
    dwell: Option<f64>,
    opts: &CertifyOptions,
) -> Result<Assembled, StabilityError> {
    if mode.needs_dwell() {
        match dwell {
            Some(t) if t > 0.0 && t.is_finite() => {}
            _ => return Err(StabilityError::Invalid("dwell-time must be positive".into())),
        }
    }
    let dwell = if mode.needs_dwell() { dwell } else { None };
    let scaling = Scaling::new(sys, dwell);
    let data = scaled_data(sys, &scaling, mode);
    let np = data.np;
    let theta: Vec<Var> = (0..np).map(Var::rho).collect();
    let eta: Vec<Var> = (0..np).map(Var::eta).collect();
    let degree = if mode == Mode::Quadratic { 0 } else { opts.degree };
    let deg_a = data.a.degree().max(1);
    let budget = {
        let d = opts.degree + deg_a + 1;
        d + d % 2
    };
    let mut b = Builder {
        prog: SosProgram::new(format!("{}-{}", sys.label, mode.name())),
        data: &data,
        budget,
    };
    let eps = opts.epsilon;
    let identity = |p: &Polynomial| p.clone();

    let s_vars: Vec<Var> = if mode.needs_dwell() {
        std::iter::once(Var::TAU).chain(theta.iter().copied()).collect()
    } else {
        theta.clone()
    };
    let s = b.prog.declare_unknown("S", data.n, &s_vars, degree);

    // positivity of S on the parameter set
    let pos = s.add_poly(-1.0, &b.eye(eps))?;
    let pos = if degree > 0 && np > 0 {
        b.with_set_multipliers("pos", pos, &s_vars, &identity)?
    } else {
        pos
    };
    b.require("positivity", &pos)?;

    // flow, one copy per derivative vertex
    let mult_vars = if degree > 0 || mode.needs_dwell() { s_vars.clone() } else { theta.clone() };
    for (k, mu) in data.vertices.iter().enumerate() {
        let mut flow = b.lie_part(&s, mu)?;
        if let Some(t) = dwell {
            flow = flow.axpy(1.0 / t, &s.differentiate(Var::TAU))?;
        }
        let mut target = AffineMatrix::zeros(data.n, data.n).sub(&flow)?;
        target = target.add_poly(-1.0, &b.eye(eps))?;
        let label = format!("flow{}", k + 1);
        if np > 0 {
            target = b.with_set_multipliers(&label, target, &mult_vars, &identity)?;
        }
        if mode.needs_dwell() {
            let deg = (budget - 2) & !1;
            let ups = b.prog.add_sos_multiplier(&format!("{label}.tau"), data.n, &mult_vars, deg);
            let s_var = Polynomial::var(Var::TAU);
            let window = s_var.mul(&Polynomial::constant(1.0).sub(&s_var));
            target = target.sub(&ups.scale_poly(&window))?;
        }
        b.require(&label, &target)?;
    }

    if mode.needs_dwell() {
        // jump: S'(1, η') − S'(0, θ') − ε I
        let to_eta: Vec<(Var, Polynomial)> = std::iter::once((Var::TAU, Polynomial::constant(1.0)))
            .chain((0..np).map(|i| (Var::rho(i), Polynomial::var(Var::eta(i)))))
            .collect();
        let s_end = s.substitute_all(&to_eta);
        let s_start = s.substitute_all(&[(Var::TAU, Polynomial::zero())]);
        let jump_eps = if opts.jump_epsilon { eps } else { 0.0 };
        let mut jump = s_end.sub(&s_start)?.add_poly(-1.0, &b.eye(jump_eps))?;
        if np > 0 {
            let both: Vec<Var> = theta.iter().chain(&eta).copied().collect();
            jump = b.with_set_multipliers("jump.theta", jump, &both, &identity)?;
            let rename = |p: &Polynomial| p.rename(|v| v.rho_index().map_or(v, Var::eta));
            jump = b.with_set_multipliers("jump.eta", jump, &both, &rename)?;
        }
        b.require("jump", &jump)?;
    }

    if mode == Mode::MinimumDwell {
        // flow frozen at τ = T̄
        let s_end = s.substitute_all(&[(Var::TAU, Polynomial::constant(1.0))]);
        for (k, mu) in data.vertices.iter().enumerate() {
            let lie = b.lie_part(&s_end, mu)?;
            let mut target = AffineMatrix::zeros(data.n, data.n).sub(&lie)?.add_poly(-1.0, &b.eye(eps))?;
            let label = format!("frozen{}", k + 1);
            if np > 0 {
                target = b.with_set_multipliers(&label, target, &theta, &identity)?;
            }
            b.require(&label, &target)?;
        }
    }

    Ok(Assembled {
        program: b.prog,
        s,
        scaling,
        budget,
    })
}
