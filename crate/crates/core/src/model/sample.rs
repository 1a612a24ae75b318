use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, ParameterSet};
use crate::poly::{Monomial, Polynomial, Var};

pub const SAMPLE_ATTEMPTS: usize = 10_000;
const SET_TOL: f64 = 1e-9;

pub fn sample_parameter_seeded(params: &ParameterSet, seed: u64) -> Result<Vec<f64>, ModelError> {
    sample_parameter(params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Radius `r` when `h = c (Σ ρ_i² − r²)` for some `c ≠ 0`.
fn sphere_radius(h: &Polynomial, dim: usize) -> Option<f64> {
    let c = h.coeff(&Monomial::from_powers([(Var::rho(0), 2)]));
    if c == 0.0 || h.num_terms() != dim + 1 {
        return None;
    }
    for i in 0..dim {
        if h.coeff(&Monomial::from_powers([(Var::rho(i), 2)])) != c {
            return None;
        }
    }
    let r2 = -h.coeff(&Monomial::one()) / c;
    (r2 > 0.0).then(|| r2.sqrt())
}

/// Draws a point of the parameter set. Box-only sets use rejection sampling
/// in the box hull, a centered sphere `Σρ_i² = r²` uses a direct
/// parametrization (an angle when N = 2), and other equality sets are reached
/// by Gauss-Newton projection from a box sample.
pub fn sample_parameter(params: &ParameterSet, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, ModelError> {
    let dim = params.dim();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let in_box = |t: &[f64]| {
        params
            .box_hull
            .iter()
            .zip(t)
            .all(|(&(lo, hi), &x)| x >= lo - SET_TOL && x <= hi + SET_TOL)
    };
    let sphere = match params.equalities.as_slice() {
        [h] => sphere_radius(h, dim),
        _ => None,
    };
    for _ in 0..SAMPLE_ATTEMPTS {
        let theta: Vec<f64> = if let Some(r) = sphere {
            if dim == 2 {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                vec![r * a.cos(), r * a.sin()]
            } else {
                let g: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                g.iter().map(|x| r * x / norm).collect()
            }
        } else {
            let mut t: Vec<f64> = params
                .box_hull
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect();
            if !params.equalities.is_empty() && !project(params, &mut t) {
                continue;
            }
            t
        };
        if in_box(&theta) && params.contains(&theta, SET_TOL) {
            return Ok(theta);
        }
    }
    Err(ModelError::EmptySet(format!(
        "no feasible sample in {SAMPLE_ATTEMPTS} attempts"
    )))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Minimum-norm Newton steps onto `{h = 0}`.
fn project(params: &ParameterSet, t: &mut [f64]) -> bool {
    let dim = t.len();
    let hs = &params.equalities;
    let grads: Vec<Vec<Polynomial>> = hs
        .iter()
        .map(|h| (0..dim).map(|i| h.differentiate(Var::rho(i))).collect())
        .collect();
    for _ in 0..50 {
        let at = |v: Var| v.rho_index().and_then(|i| t.get(i).copied());
        let r = DVector::from_iterator(hs.len(), hs.iter().map(|h| h.evaluate_with(&at).unwrap_or(f64::NAN)));
        if r.amax() <= 1e-13 {
            return true;
        }
        let j = DMatrix::from_fn(hs.len(), dim, |a, b| grads[a][b].evaluate_with(&at).unwrap_or(f64::NAN));
        let jjt = &j * j.transpose();
        let Some(w) = jjt.lu().solve(&r) else {
            return false;
        };
        let step = j.transpose() * w;
        for (x, d) in t.iter_mut().zip(step.iter()) {
            *x -= d;
        }
        if !t.iter().all(|x| x.is_finite()) {
            return false;
        }
    }
    false
}
