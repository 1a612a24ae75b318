//! Stability certificates for LPV systems with jumping parameters: quadratic,
//! robust (parameter-dependent), constant dwell-time and minimum dwell-time.
//!
//! Each certificate is an SOS program solved by [`crate::sdp`]; a returned
//! certificate is then checked pointwise on seeded random samples before it is
//! reported as certified.

mod program;
mod report;
mod search;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use program::{assemble, Assembled, Scaling};
pub use report::poly_matrix;
pub use search::{min_dwell_search, DwellTimeResult, Probe, ProbeOutcome, SearchOptions, SearchStatus};
pub use verify::{verify_certificate, ConditionCheck, VerificationReport, JUMP_TOL};

use crate::model::LpvSystem;
use crate::poly::PolyMatrix;
use crate::sdp::{self, SdpError, SdpOptions, SdpStatus};
use crate::sos::SosError;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("{0}")]
    Invalid(String),
}

impl From<crate::poly::PolyError> for StabilityError {
    fn from(e: crate::poly::PolyError) -> Self {
        StabilityError::Sos(SosError::Poly(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "quadratic")]
    Quadratic,
    #[serde(rename = "robust")]
    Robust,
    #[serde(rename = "constant-dt")]
    ConstantDwell,
    #[serde(rename = "minimum-dt")]
    MinimumDwell,
}

impl Mode {
    pub fn needs_dwell(self) -> bool {
        matches!(self, Mode::ConstantDwell | Mode::MinimumDwell)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Quadratic => "quadratic",
            Mode::Robust => "robust",
            Mode::ConstantDwell => "constant-dt",
            Mode::MinimumDwell => "minimum-dt",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "quadratic" => Some(Mode::Quadratic),
            "robust" => Some(Mode::Robust),
            "constant-dt" | "constant" => Some(Mode::ConstantDwell),
            "minimum-dt" | "minimum" => Some(Mode::MinimumDwell),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    /// Strictness margin, shared by the positivity, flow and jump families.
    pub epsilon: f64,
    /// Degree of `S` (ignored in quadratic mode, where `S` is constant).
    pub degree: u32,
    /// Subtract `εI` in the jump constraint.
    pub jump_epsilon: bool,
    pub sdp: SdpOptions,
    /// Samples per flow, jump and frozen-flow condition.
    pub samples: usize,
    pub positivity_samples: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            degree: 2,
            jump_epsilon: true,
            sdp: SdpOptions::default(),
            samples: 1000,
            positivity_samples: 100,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SdpStatus,
    pub iterations: usize,
    pub max_eq_violation: Option<f64>,
    pub min_psd_eig: Option<f64>,
    /// Scalar unknowns (psd entries plus free entries) and equality rows.
    pub variables: usize,
    pub constraints: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub mode: Mode,
    #[serde(with = "poly_matrix")]
    pub s: PolyMatrix,
    pub dwell: Option<f64>,
    pub epsilon: f64,
    pub degree: u32,
    pub verification: VerificationReport,
    pub solver: SolverStats,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Debug)]
pub enum Outcome {
    Certified(Box<Certificate>),
    Infeasible(SolverStats),
    NumericalFailure(SolverStats),
    /// The solver returned a point but the sampled check rejected it.
    VerificationFailed {
        report: VerificationReport,
        solver: SolverStats,
        s: PolyMatrix,
    },
}

impl Outcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Outcome::Certified(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, Outcome::Certified(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Outcome::Infeasible(_))
    }

    pub fn solver(&self) -> &SolverStats {
        match self {
            Outcome::Certified(c) => &c.solver,
            Outcome::Infeasible(s) | Outcome::NumericalFailure(s) => s,
            Outcome::VerificationFailed { solver, .. } => solver,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Certified(_) => "feasible",
            Outcome::Infeasible(_) => "infeasible",
            Outcome::NumericalFailure(_) => "numerical-failure",
            Outcome::VerificationFailed { .. } => "verification-failed",
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Assembles, solves and verifies one certificate program.
pub fn certify(
    sys: &LpvSystem,
    mode: Mode,
    dwell: Option<f64>,
    opts: &CertifyOptions,
) -> Result<Outcome, StabilityError> {
    let asm = assemble(sys, mode, dwell, opts)?;
    let problem = &asm.program.problem;
    log::debug!(
        "{}: {} psd entries, {} free, {} rows",
        mode.name(),
        problem.num_psd_entries(),
        problem.num_free_entries(),
        problem.constraints.len()
    );
    let sol = sdp::solve(problem, &opts.sdp)?;
    let stats = SolverStats {
        status: sol.status,
        iterations: sol.iterations,
        max_eq_violation: finite(sol.max_eq_violation),
        min_psd_eig: finite(sol.min_psd_eig),
        variables: problem.num_psd_entries() + problem.num_free_entries(),
        constraints: problem.constraints.len(),
        message: sol.message.clone(),
    };
    match sol.status {
        SdpStatus::Infeasible => return Ok(Outcome::Infeasible(stats)),
        SdpStatus::NumericalFailure => return Ok(Outcome::NumericalFailure(stats)),
        SdpStatus::Feasible => {}
    }
    let s = asm.scaling.unscale(&asm.s.resolve(&sol.blocks));
    let dwell = asm.scaling.dwell;
    let report = verify_certificate(sys, mode, &s, dwell, opts)?;
    if !report.passed {
        return Ok(Outcome::VerificationFailed { report, solver: stats, s });
    }
    Ok(Outcome::Certified(Box::new(Certificate {
        mode,
        s,
        dwell,
        epsilon: opts.epsilon,
        degree: if mode == Mode::Quadratic { 0 } else { opts.degree },
        verification: report,
        solver: stats,
    })))
}

/// Constant `P ≻ 0` with `He[P A(θ)] ≺ 0` on the parameter set.
pub fn certify_quadratic(sys: &LpvSystem, opts: &CertifyOptions) -> Result<Outcome, StabilityError> {
    certify(sys, Mode::Quadratic, None, opts)
}

/// Parameter-dependent `P(θ)` for arbitrarily slow-varying-but-bounded-rate
/// parameters without jumps.
pub fn certify_robust(sys: &LpvSystem, opts: &CertifyOptions) -> Result<Outcome, StabilityError> {
    certify(sys, Mode::Robust, None, opts)
}

pub fn certify_constant_dwell(sys: &LpvSystem, dwell: f64, opts: &CertifyOptions) -> Result<Outcome, StabilityError> {
    certify(sys, Mode::ConstantDwell, Some(dwell), opts)
}

pub fn certify_minimum_dwell(sys: &LpvSystem, dwell: f64, opts: &CertifyOptions) -> Result<Outcome, StabilityError> {
    certify(sys, Mode::MinimumDwell, Some(dwell), opts)
}
