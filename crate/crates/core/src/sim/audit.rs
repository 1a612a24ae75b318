use serde::{Deserialize, Serialize};

use super::simulate::SimResult;
use super::trajectory::{Family, ParameterTrajectory};
use super::SimError;
use crate::model::LpvSystem;
use crate::poly::Var;
use crate::stability::{Certificate, Mode};

/// Default relative tolerance on increases of `V`.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `V` at every sample of the run.
    pub v: Vec<f64>,
    /// Largest forward-difference `ΔV/Δt` along flows.
    pub max_flow_derivative: f64,
    /// Largest `(V_{k+1} − V_k) / V_k` along flows.
    pub max_flow_increase: f64,
    /// Largest `(V(t_k⁺) − V(t_k)) / V(t_k)` over jumps.
    pub max_jump_increase: f64,
    pub violations: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Checks that the simulated trajectory can be audited with `cert`.
pub fn check_compatible(cert: &Certificate, sys: &LpvSystem, traj: &ParameterTrajectory) -> Result<(), SimError> {
    if cert.s.dims() != (sys.n, sys.n) {
        return Err(SimError::Invalid(format!(
            "certificate is {}x{}, system has n = {}",
            cert.s.rows(),
            cert.s.cols(),
            sys.n
        )));
    }
    match cert.mode {
        Mode::Quadratic => Ok(()),
        Mode::Robust if traj.intervals.len() > 1 => {
            Err(SimError::Invalid("a robust certificate does not cover parameter jumps".into()))
        }
        Mode::Robust => Ok(()),
        Mode::ConstantDwell | Mode::MinimumDwell => {
            let t = cert.dwell.unwrap_or(f64::INFINITY);
            if cert.mode == Mode::ConstantDwell && traj.family != Family::Constant {
                return Err(SimError::Invalid("constant dwell-time certificate needs a constant-dwell trajectory".into()));
            }
            if traj.dwell < t * (1.0 - 1e-12) {
                return Err(SimError::Invalid(format!("trajectory dwell {} is below the certified {t}", traj.dwell)));
            }
            Ok(())
        }
    }
}

/// Evaluates `V = xᵀS(τ, ρ)x` along `sim`, with `τ` clamped to `T̄` for
/// minimum dwell-time certificates, and flags relative increases above `tol`.
pub fn lyapunov_audit(cert: &Certificate, sim: &SimResult, tol: f64) -> Result<AuditReport, SimError> {
    if sim.x.first().is_some_and(|x| x.len() != cert.s.rows()) {
        return Err(SimError::Invalid("certificate and trace dimensions differ".into()));
    }
    let t_end = cert.dwell.unwrap_or(0.0);
    let v: Vec<f64> = (0..sim.t.len())
        .map(|k| {
            let tau = sim.tau[k].min(t_end);
            let rho = &sim.rho[k];
            let s = cert
                .s
                .evaluate_with(&|var: Var| {
                    if var == Var::TAU {
                        Some(tau)
                    } else {
                        var.rho_index().and_then(|i| rho.get(i).copied())
                    }
                })
                .map_err(|e| SimError::Invalid(e.to_string()))?;
            let x = &sim.x[k];
            Ok(x.dot(&(s * x)))
        })
        .collect::<Result<_, SimError>>()?;

    let mut report = AuditReport {
        max_flow_derivative: f64::NEG_INFINITY,
        max_flow_increase: f64::NEG_INFINITY,
        max_jump_increase: f64::NEG_INFINITY,
        violations: 0,
        tol,
        passed: true,
        v: Vec::new(),
    };
    for k in 1..v.len() {
        let rel = |d: f64| if v[k - 1] > 0.0 { d / v[k - 1] } else if d > 0.0 { f64::INFINITY } else { 0.0 };
        let dv = v[k] - v[k - 1];
        let r = rel(dv);
        if sim.is_jump(k) {
            report.max_jump_increase = report.max_jump_increase.max(r);
        } else {
            let dt = sim.t[k] - sim.t[k - 1];
            if dt > 0.0 {
                report.max_flow_derivative = report.max_flow_derivative.max(dv / dt);
            }
            report.max_flow_increase = report.max_flow_increase.max(r);
        }
        if !(r <= tol) {
            report.violations += 1;
        }
    }
    if v.iter().any(|&x| x < 0.0 && x.abs() > tol * v[0].abs().max(f64::MIN_POSITIVE)) {
        report.violations += 1;
    }
    report.passed = report.violations == 0 && !sim.diverged;
    report.v = v;
    Ok(report)
}
