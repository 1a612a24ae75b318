//! Simulation of the hybrid closed loop under admissible jumping parameter
//! trajectories, and audits of certificates along the simulated traces.

mod audit;
mod simulate;
mod trajectory;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{check_compatible, lyapunov_audit, AuditReport, AUDIT_TOL};
pub use simulate::{parameter_trace, simulate, SimResult, DIVERGENCE_NORM};
pub use trajectory::{generate_trajectory, Family, Interval, ParameterTrajectory, TrajectoryOptions};

use crate::model::{LpvSystem, ModelError};
use crate::stability::{Certificate, Mode};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOptions {
    pub runs: usize,
    /// Horizon as a multiple of the certified dwell-time.
    pub horizon_factor: f64,
    pub step: f64,
    pub seed: u64,
    pub tol: f64,
    /// Simulations run concurrently; results do not depend on it.
    pub jobs: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            runs: 100,
            horizon_factor: 50.0,
            step: 1e-2,
            seed: 0x5eed,
            tol: AUDIT_TOL,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub jumps: usize,
    pub norm_ratio: f64,
    pub max_flow_increase: f64,
    pub max_jump_increase: f64,
    pub violations: usize,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchAudit {
    pub family: Family,
    pub dwell: f64,
    pub horizon: f64,
    pub runs: Vec<RunSummary>,
    pub worst_norm_ratio: f64,
    pub worst_flow_increase: f64,
    pub worst_jump_increase: f64,
    pub passed: bool,
}

/// Trajectory family matching a certificate mode.
pub fn family_for(mode: Mode) -> Family {
    if mode == Mode::ConstantDwell {
        Family::Constant
    } else {
        Family::Minimum
    }
}

/// Uniformly random unit vector in `R^n`, drawn from its own stream of `seed`.
pub fn initial_state(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let x = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let norm = x.norm();
    if norm > 0.0 {
        (x / norm).as_slice().to_vec()
    } else {
        x.as_slice().to_vec()
    }
}

/// Simulates `opts.runs` seeded trajectories at the certificate's dwell-time
/// from random unit initial states and audits each one. Run `i` uses seed
/// `opts.seed + i`.
pub fn audit_batch(sys: &LpvSystem, cert: &Certificate, opts: &BatchOptions) -> Result<BatchAudit, SimError> {
    let dwell = cert
        .dwell
        .ok_or_else(|| SimError::Invalid("certificate has no dwell-time".into()))?;
    let family = family_for(cert.mode);
    let horizon = opts.horizon_factor * dwell;
    let one = |i: usize| -> Result<RunSummary, SimError> {
        let seed = opts.seed.wrapping_add(i as u64);
        let traj = generate_trajectory(&sys.params, &sys.derivs, &TrajectoryOptions::new(family, dwell, horizon, seed))?;
        check_compatible(cert, sys, &traj)?;
        let sim = simulate(sys, &traj, &initial_state(sys.n, seed), opts.step)?;
        let audit = lyapunov_audit(cert, &sim, opts.tol)?;
        Ok(RunSummary {
            seed,
            jumps: sim.jumps.len(),
            norm_ratio: sim.norm_ratio,
            max_flow_increase: audit.max_flow_increase,
            max_jump_increase: audit.max_jump_increase,
            violations: audit.violations,
            diverged: sim.diverged,
        })
    };
    let mut runs = Vec::with_capacity(opts.runs);
    if opts.jobs <= 1 {
        // no threads, so this also runs on targets without them
        for i in 0..opts.runs {
            runs.push(one(i)?);
        }
    } else {
        let idx: Vec<usize> = (0..opts.runs).collect();
        for chunk in idx.chunks(opts.jobs) {
            let results: Vec<Result<RunSummary, SimError>> = std::thread::scope(|sc| {
                let handles: Vec<_> = chunk.iter().map(|&i| sc.spawn(move || one(i))).collect();
                handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
            });
            for r in results {
                runs.push(r?);
            }
        }
    }
    let fold = |f: fn(&RunSummary) -> f64| runs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let worst_norm_ratio = fold(|r| r.norm_ratio);
    let worst_flow_increase = fold(|r| r.max_flow_increase);
    let worst_jump_increase = fold(|r| r.max_jump_increase);
    let passed = runs.iter().all(|r| r.violations == 0 && !r.diverged);
    Ok(BatchAudit {
        family,
        dwell,
        horizon,
        runs,
        worst_norm_ratio,
        worst_flow_increase,
        worst_jump_increase,
        passed,
    })
}
