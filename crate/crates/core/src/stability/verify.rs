use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CertifyOptions, Mode, StabilityError};
use crate::model::{sample_parameter, LpvSystem};
use crate::poly::{PolyMatrix, Var};
use crate::sdp::linalg::{max_eigenvalue, min_eigenvalue};

/// Jump condition tolerance on `λmax(S(0,θ) − S(T̄,η))`.
pub const JUMP_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    /// Worst eigenvalue seen: largest for negativity checks, smallest for positivity.
    pub worst: f64,
    pub bound: f64,
    pub samples: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub positivity: ConditionCheck,
    pub flow: ConditionCheck,
    pub jump: Option<ConditionCheck>,
    /// Flow frozen at `τ = T̄` (minimum dwell-time only).
    pub frozen: Option<ConditionCheck>,
    pub seed: u64,
    pub passed: bool,
}

struct Evaluator<'a> {
    sys: &'a LpvSystem,
    s: &'a PolyMatrix,
    ds_dtau: PolyMatrix,
    ds_drho: Vec<PolyMatrix>,
}

impl Evaluator<'_> {
    fn at(m: &PolyMatrix, tau: f64, theta: &[f64]) -> DMatrix<f64> {
        m.evaluate_with(&|v: Var| {
            if v == Var::TAU {
                Some(tau)
            } else {
                v.rho_index().and_then(|i| theta.get(i).copied())
            }
        })
        .expect("certificate references only tau and parameters")
    }

    fn s(&self, tau: f64, theta: &[f64]) -> DMatrix<f64> {
        Self::at(self.s, tau, theta)
    }

    /// `∂τS + Σ ∂ρ_i S μ_i + He[S A]` at a point.
    fn flow(&self, tau: f64, theta: &[f64], mu: &[f64], with_tau: bool) -> DMatrix<f64> {
        let s = self.s(tau, theta);
        let sa = &s * self.sys.a_at(theta);
        let mut out = &sa + sa.transpose();
        if with_tau {
            out += Self::at(&self.ds_dtau, tau, theta);
        }
        for (d, &m) in self.ds_drho.iter().zip(mu) {
            if m != 0.0 {
                out += Self::at(d, tau, theta) * m;
            }
        }
        out
    }
}

fn check(worst: f64, bound: f64, samples: usize, upper: bool) -> ConditionCheck {
    let passed = worst.is_finite() && if upper { worst <= bound } else { worst >= bound };
    ConditionCheck {
        worst,
        bound,
        samples,
        passed,
    }
}

/// Samples the certificate conditions in the original coordinates with a
/// seeded generator, so reports are reproducible.
pub fn verify_certificate(
    sys: &LpvSystem,
    mode: Mode,
    s: &PolyMatrix,
    dwell: Option<f64>,
    opts: &CertifyOptions,
) -> Result<VerificationReport, StabilityError> {
    if s.dims() != (sys.n, sys.n) {
        return Err(StabilityError::Invalid(format!(
            "certificate is {}x{}, system has n = {}",
            s.rows(),
            s.cols(),
            sys.n
        )));
    }
    if mode.needs_dwell() && dwell.is_none() {
        return Err(StabilityError::Invalid("dwell-time missing".into()));
    }
    let t_end = dwell.unwrap_or(0.0);
    let np = sys.num_params();
    let ev = Evaluator {
        sys,
        s,
        ds_dtau: s.differentiate(Var::TAU),
        ds_drho: (0..np).map(|i| s.differentiate(Var::rho(i))).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sample = |rng: &mut ChaCha8Rng| {
        sample_parameter(&sys.params, rng).map_err(|e| StabilityError::Invalid(e.to_string()))
    };
    let tau = |rng: &mut ChaCha8Rng| if t_end > 0.0 { rng.random_range(0.0..=t_end) } else { 0.0 };
    let vertex = |rng: &mut ChaCha8Rng, theta: &[f64]| -> Vec<f64> {
        if mode == Mode::Quadratic {
            return vec![0.0; np];
        }
        let vs = sys.derivative_vertices_at(theta);
        let k = rng.random_range(0..vs.len());
        vs[k].clone()
    };
    let eps = opts.epsilon;

    let mut pos = f64::INFINITY;
    for _ in 0..opts.positivity_samples {
        let t = tau(&mut rng);
        let theta = sample(&mut rng)?;
        pos = pos.min(min_eigenvalue(&ev.s(t, &theta)));
    }
    let positivity = check(pos, eps / 2.0, opts.positivity_samples, false);

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..opts.samples {
        let t = tau(&mut rng);
        let theta = sample(&mut rng)?;
        let mu = vertex(&mut rng, &theta);
        worst = worst.max(max_eigenvalue(&ev.flow(t, &theta, &mu, mode.needs_dwell())));
    }
    let flow = check(worst, -eps / 2.0, opts.samples, true);

    let jump = if mode.needs_dwell() {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..opts.samples {
            let theta = sample(&mut rng)?;
            let eta = sample(&mut rng)?;
            let d = ev.s(0.0, &theta) - ev.s(t_end, &eta);
            worst = worst.max(max_eigenvalue(&d));
        }
        Some(check(worst, JUMP_TOL, opts.samples, true))
    } else {
        None
    };

    let frozen = if mode == Mode::MinimumDwell {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..opts.samples {
            let theta = sample(&mut rng)?;
            let mu = vertex(&mut rng, &theta);
            worst = worst.max(max_eigenvalue(&ev.flow(t_end, &theta, &mu, false)));
        }
        Some(check(worst, -eps / 2.0, opts.samples, true))
    } else {
        None
    };

    let passed = positivity.passed
        && flow.passed
        && jump.as_ref().is_none_or(|c| c.passed)
        && frozen.as_ref().is_none_or(|c| c.passed);
    Ok(VerificationReport {
        positivity,
        flow,
        jump,
        frozen,
        seed: opts.seed,
        passed,
    })
}
