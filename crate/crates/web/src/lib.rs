//! WebAssembly bindings for the browser demo. Every entry point takes the
//! system file text plus a JSON object of constant overrides and returns a
//! JSON document; errors come back as strings.
//!
//! The `*_json` functions hold the logic so they can be tested natively.

use std::collections::BTreeMap;

use lpv_dwell::model::{parse_system_with, LpvSystem, EXAMPLE1, EXAMPLE2_FIXED};
use lpv_dwell::sim::{
    check_compatible, family_for, generate_trajectory, initial_state, lyapunov_audit, simulate, Family,
    TrajectoryOptions, AUDIT_TOL,
};
use lpv_dwell::stability::{certify, min_dwell_search, Certificate, CertifyOptions, Mode, SearchOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Plotted traces are thinned to about this many points.
const PLOT_POINTS: usize = 1500;

fn load(system: &str, constants: &str) -> Result<LpvSystem, String> {
    let overrides: BTreeMap<String, f64> = if constants.trim().is_empty() {
        BTreeMap::new()
    } else {
        serde_json::from_str(constants).map_err(|e| format!("constants: {e}"))?
    };
    parse_system_with(system, &overrides).map_err(|e| e.to_string())
}

fn mode(name: &str) -> Result<Mode, String> {
    Mode::parse(name).ok_or_else(|| format!("unknown mode '{name}'"))
}

fn options(degree: u32) -> CertifyOptions {
    CertifyOptions {
        degree,
        ..CertifyOptions::default()
    }
}

#[derive(Serialize)]
struct CertifyDoc<'a> {
    status: &'a str,
    iterations: usize,
    message: &'a str,
    certificate: Option<&'a Certificate>,
}

pub fn certify_json(system: &str, constants: &str, mode_name: &str, dwell: Option<f64>, degree: u32) -> Result<String, String> {
    let sys = load(system, constants)?;
    let m = mode(mode_name)?;
    let out = certify(&sys, m, dwell, &options(degree)).map_err(|e| e.to_string())?;
    let doc = CertifyDoc {
        status: out.label(),
        iterations: out.solver().iterations,
        message: &out.solver().message,
        certificate: out.certificate(),
    };
    Ok(serde_json::to_string(&doc).expect("document serializes"))
}

pub fn search_json(system: &str, constants: &str, mode_name: &str, degree: u32) -> Result<String, String> {
    let sys = load(system, constants)?;
    let res = min_dwell_search(&sys, mode(mode_name)?, &options(degree), &SearchOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&res).expect("result serializes"))
}

#[derive(Serialize)]
struct Trace {
    family: Family,
    dwell: f64,
    horizon: f64,
    jumps: Vec<f64>,
    norm_ratio: f64,
    diverged: bool,
    max_flow_increase: Option<f64>,
    max_jump_increase: Option<f64>,
    violations: usize,
    passed: bool,
    t: Vec<f64>,
    norm: Vec<f64>,
    v: Vec<f64>,
    rho: Vec<f64>,
}

/// Simulates one seeded trajectory at `dwell` (the certified value when
/// absent) over `horizon_factor` dwell-times and audits `cert` along it.
pub fn simulate_json(
    system: &str,
    constants: &str,
    cert: &str,
    dwell: Option<f64>,
    horizon_factor: f64,
    seed: u64,
) -> Result<String, String> {
    let sys = load(system, constants)?;
    let value: serde_json::Value = serde_json::from_str(cert).map_err(|e| format!("certificate: {e}"))?;
    let value = value.get("certificate").cloned().unwrap_or(value);
    let cert: Certificate = serde_json::from_value(value).map_err(|e| format!("certificate: {e}"))?;
    let dwell = dwell
        .or(cert.dwell)
        .ok_or("a dwell-time is needed for certificates without one")?;
    let family = family_for(cert.mode);
    let horizon = horizon_factor * dwell;
    let traj = generate_trajectory(&sys.params, &sys.derivs, &TrajectoryOptions::new(family, dwell, horizon, seed))
        .map_err(|e| e.to_string())?;
    check_compatible(&cert, &sys, &traj).map_err(|e| e.to_string())?;
    let sim = simulate(&sys, &traj, &initial_state(sys.n, seed), 1e-2).map_err(|e| e.to_string())?;
    let audit = lyapunov_audit(&cert, &sim, AUDIT_TOL).map_err(|e| e.to_string())?;
    let stride = sim.t.len().div_ceil(PLOT_POINTS).max(1);
    let keep: Vec<usize> = (0..sim.t.len()).step_by(stride).collect();
    let finite = |v: f64| v.is_finite().then_some(v);
    let doc = Trace {
        family,
        dwell,
        horizon,
        jumps: sim.jumps.iter().map(|&k| sim.t[k]).collect(),
        norm_ratio: sim.norm_ratio,
        diverged: sim.diverged,
        max_flow_increase: finite(audit.max_flow_increase),
        max_jump_increase: finite(audit.max_jump_increase),
        violations: audit.violations,
        passed: audit.passed,
        t: keep.iter().map(|&k| sim.t[k]).collect(),
        norm: keep.iter().map(|&k| sim.x[k].norm()).collect(),
        v: keep.iter().map(|&k| audit.v[k]).collect(),
        rho: keep.iter().map(|&k| sim.rho[k].first().copied().unwrap_or(0.0)).collect(),
    };
    Ok(serde_json::to_string(&doc).expect("trace serializes"))
}

/// Built-in system files by name.
#[wasm_bindgen]
pub fn example_system(name: &str) -> Option<String> {
    match name {
        "example1" => Some(EXAMPLE1.to_string()),
        "example2_fixed" => Some(EXAMPLE2_FIXED.to_string()),
        _ => None,
    }
}

#[wasm_bindgen(js_name = certify)]
pub fn certify_js(system: &str, constants: &str, mode: &str, dwell: Option<f64>, degree: u32) -> Result<String, JsError> {
    certify_json(system, constants, mode, dwell, degree).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = search)]
pub fn search_js(system: &str, constants: &str, mode: &str, degree: u32) -> Result<String, JsError> {
    search_json(system, constants, mode, degree).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(
    system: &str,
    constants: &str,
    cert: &str,
    dwell: Option<f64>,
    horizon_factor: f64,
    seed: u64,
) -> Result<String, JsError> {
    simulate_json(system, constants, cert, dwell, horizon_factor, seed).map_err(|e| JsError::new(&e))
}
