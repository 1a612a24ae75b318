use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{sample_parameter, DerivativeModel, ParameterSet};

/// Which dwell-time constraint the jump times satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `t_{k+1} − t_k = T̄`.
    Constant,
    /// `t_{k+1} − t_k ≥ T̄`.
    Minimum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryOptions {
    pub family: Family,
    pub dwell: f64,
    pub horizon: f64,
    /// Minimum-dwell intervals are drawn uniformly from `[T̄, max_dwell_factor · T̄]`.
    pub max_dwell_factor: f64,
    /// Mean time between derivative-vertex switches; `None` means `T̄ / 2`.
    pub mean_switch: Option<f64>,
    pub seed: u64,
}

impl TrajectoryOptions {
    pub fn new(family: Family, dwell: f64, horizon: f64, seed: u64) -> Self {
        Self {
            family,
            dwell,
            horizon,
            max_dwell_factor: 3.0,
            mean_switch: None,
            seed,
        }
    }
}

/// One flow interval `[start, end)` with its post-jump parameter value and
/// derivative schedule. The vertex in `switches[j].1` is active from
/// `switches[j].0` until the next switch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub rho0: Vec<f64>,
    pub switches: Vec<(f64, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterTrajectory {
    pub family: Family,
    pub dwell: f64,
    pub horizon: f64,
    pub intervals: Vec<Interval>,
}

impl ParameterTrajectory {
    /// Jump instants `t_1, t_2, …` (no jump at `t_0 = 0`).
    pub fn jump_times(&self) -> Vec<f64> {
        self.intervals.iter().skip(1).map(|iv| iv.start).collect()
    }
}

pub fn generate_trajectory(
    params: &ParameterSet,
    derivs: &DerivativeModel,
    opts: &TrajectoryOptions,
) -> Result<ParameterTrajectory, SimError> {
    let dwell = opts.dwell;
    if !(dwell > 0.0 && dwell.is_finite()) {
        return Err(SimError::Invalid("dwell-time must be positive".into()));
    }
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(SimError::Invalid("horizon must be positive".into()));
    }
    if opts.max_dwell_factor < 1.0 {
        return Err(SimError::Invalid("max_dwell_factor must be at least 1".into()));
    }
    let mean = opts.mean_switch.unwrap_or(dwell / 2.0);
    let exp = Exp::new(1.0 / mean).map_err(|e| SimError::Invalid(format!("mean switch time: {e}")))?;
    let nv = derivs.vertices().len().max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eps = 1e-12 * opts.horizon;

    let mut intervals = Vec::new();
    let mut start = 0.0;
    let mut k = 0u32;
    while start < opts.horizon - eps {
        let end = match opts.family {
            // k·T̄ directly, so jump instants carry no accumulated roundoff
            Family::Constant => f64::from(k + 1) * dwell,
            Family::Minimum => start + rng.random_range(dwell..=opts.max_dwell_factor * dwell),
        };
        let end = if end >= opts.horizon - eps { opts.horizon } else { end };
        let rho0 = sample_parameter(params, &mut rng)?;
        let mut switches = vec![(start, rng.random_range(0..nv))];
        let mut t = start + exp.sample(&mut rng);
        while t < end {
            switches.push((t, rng.random_range(0..nv)));
            t += exp.sample(&mut rng);
        }
        intervals.push(Interval {
            start,
            end,
            rho0,
            switches,
        });
        start = end;
        k += 1;
    }
    Ok(ParameterTrajectory {
        family: opts.family,
        dwell,
        horizon: opts.horizon,
        intervals,
    })
}
