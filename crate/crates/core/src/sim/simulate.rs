use nalgebra::DVector;

use super::trajectory::ParameterTrajectory;
use super::SimError;
use crate::model::LpvSystem;
use crate::poly::{Polynomial, Var};

/// State norm above which a run is flagged as diverging and stopped.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub rho: Vec<Vec<f64>>,
    /// Time since the last jump.
    pub tau: Vec<f64>,
    /// Indices of post-jump samples; sample `k − 1` is the matching pre-jump one.
    pub jumps: Vec<usize>,
    pub diverged: bool,
    /// `‖x(end)‖ / ‖x0‖`, zero for a zero initial state.
    pub norm_ratio: f64,
}

impl SimResult {
    /// True for post-jump samples. They share `t` and `x` with the sample
    /// before them; `ρ` takes its new value and `τ` resets.
    pub fn is_jump(&self, k: usize) -> bool {
        self.jumps.binary_search(&k).is_ok()
    }

    /// CSV with columns `t, x1.., rho1.., tau` and `V` when a trace is given.
    pub fn to_csv(&self, v: Option<&[f64]>) -> Result<String, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let n = self.x.first().map_or(0, |x| x.len());
        let np = self.rho.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=np).map(|i| format!("rho{i}")));
        header.push("tau".into());
        if v.is_some() {
            header.push("V".into());
        }
        w.write_record(&header)?;
        for k in 0..self.t.len() {
            let mut row = vec![self.t[k]];
            row.extend(self.x[k].iter());
            row.extend(&self.rho[k]);
            row.push(self.tau[k]);
            if let Some(v) = v {
                row.push(v[k]);
            }
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

struct Rhs<'a> {
    sys: &'a LpvSystem,
    vertices: Vec<Vec<Polynomial>>,
}

impl Rhs<'_> {
    /// `ρ̇` for vertex `k` at `rho`.
    fn rho_dot(&self, k: usize, rho: &[f64]) -> Vec<f64> {
        let at = |v: Var| v.rho_index().and_then(|i| rho.get(i).copied());
        match self.vertices.get(k) {
            Some(map) => map.iter().map(|p| p.evaluate_with(&at).unwrap_or(0.0)).collect(),
            None => vec![0.0; rho.len()],
        }
    }

    fn eval(&self, k: usize, x: &DVector<f64>, rho: &[f64], hold: &[bool]) -> (DVector<f64>, Vec<f64>) {
        let mut d = self.rho_dot(k, rho);
        for (d, &h) in d.iter_mut().zip(hold) {
            if h {
                *d = 0.0;
            }
        }
        (self.sys.a_at(rho) * x, d)
    }

    /// One RK4 step. Components sitting on a face of the box hull with the
    /// vertex pointing outward are held for the whole step; deciding this from
    /// the step's start keeps stage points off the clipping logic.
    fn rk4(&self, k: usize, x: &DVector<f64>, rho: &[f64], h: f64) -> (DVector<f64>, Vec<f64>) {
        let hold: Vec<bool> = self
            .rho_dot(k, rho)
            .iter()
            .zip(&self.sys.params.box_hull)
            .zip(rho)
            .map(|((&d, &(lo, hi)), &r)| (r <= lo && d < 0.0) || (r >= hi && d > 0.0))
            .collect();
        let shift = |r: &[f64], d: &[f64], a: f64| -> Vec<f64> { r.iter().zip(d).map(|(r, d)| r + a * d).collect() };
        let (k1x, k1r) = self.eval(k, x, rho, &hold);
        let (k2x, k2r) = self.eval(k, &(x + &k1x * (h / 2.0)), &shift(rho, &k1r, h / 2.0), &hold);
        let (k3x, k3r) = self.eval(k, &(x + &k2x * (h / 2.0)), &shift(rho, &k2r, h / 2.0), &hold);
        let (k4x, k4r) = self.eval(k, &(x + &k3x * h), &shift(rho, &k3r, h), &hold);
        let xn = x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        let rn = (0..rho.len())
            .map(|i| {
                let r = rho[i] + h / 6.0 * (k1r[i] + 2.0 * k2r[i] + 2.0 * k3r[i] + k4r[i]);
                let (lo, hi) = self.sys.params.box_hull[i];
                r.clamp(lo, hi)
            })
            .collect();
        (xn, rn)
    }
}

/// Fixed-step RK4 on `ẋ = A(ρ)x` jointly with the parameter flow. Steps are
/// shortened to land exactly on jump and switch instants; `x` is continuous
/// across jumps while `ρ` takes its post-jump value.
pub fn simulate(sys: &LpvSystem, traj: &ParameterTrajectory, x0: &[f64], step: f64) -> Result<SimResult, SimError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(SimError::Invalid("step must be positive".into()));
    }
    if x0.len() != sys.n || x0.iter().any(|v| !v.is_finite()) {
        return Err(SimError::Invalid(format!("initial state must be {} finite values", sys.n)));
    }
    let rhs = Rhs {
        sys,
        vertices: sys.derivs.vertices(),
    };
    let mut out = SimResult {
        t: Vec::new(),
        x: Vec::new(),
        rho: Vec::new(),
        tau: Vec::new(),
        jumps: Vec::new(),
        diverged: false,
        norm_ratio: 0.0,
    };
    let mut x = DVector::from_column_slice(x0);
    'intervals: for (j, iv) in traj.intervals.iter().enumerate() {
        let mut rho = iv.rho0.clone();
        if j > 0 {
            out.jumps.push(out.t.len());
        }
        out.t.push(iv.start);
        out.x.push(x.clone());
        out.rho.push(rho.clone());
        out.tau.push(0.0);
        for (s, &(from, vertex)) in iv.switches.iter().enumerate() {
            let until = iv.switches.get(s + 1).map_or(iv.end, |w| w.0);
            let mut t = from;
            while t < until {
                // the last step of a segment lands exactly on its end
                let h = if until - t <= step * (1.0 + 1e-9) { until - t } else { step };
                (x, rho) = rhs.rk4(vertex, &x, &rho, h);
                t = if h == until - t { until } else { t + h };
                out.t.push(t);
                out.x.push(x.clone());
                out.rho.push(rho.clone());
                out.tau.push(t - iv.start);
                if !(x.norm() <= DIVERGENCE_NORM) {
                    out.diverged = true;
                    break 'intervals;
                }
            }
        }
    }
    let n0 = DVector::from_column_slice(x0).norm();
    out.norm_ratio = if n0 > 0.0 { x.norm() / n0 } else { 0.0 };
    Ok(out)
}

/// Stand-alone parameter trace on the simulation grid (state fixed at zero).
pub fn parameter_trace(sys: &LpvSystem, traj: &ParameterTrajectory, step: f64) -> Result<SimResult, SimError> {
    simulate(sys, traj, &vec![0.0; sys.n], step)
}
