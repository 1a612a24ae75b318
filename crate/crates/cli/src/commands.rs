use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lpv_dwell::model::{parse_system_with, LpvSystem};
use lpv_dwell::sim::{
    check_compatible, family_for, generate_trajectory, initial_state, lyapunov_audit, simulate as run_sim, Family,
    TrajectoryOptions,
};
use lpv_dwell::stability::{
    assemble, certify as run_certify, min_dwell_search, Certificate, CertifyOptions, Mode, Outcome, SearchOptions,
    SearchStatus, SolverStats, VerificationReport,
};
use serde::Serialize;

use crate::{
    BracketArgs, CertifyArgs, FamilyArg, ModeArg, ProgramArgs, SearchArgs, SimulateArgs, SystemArgs, EXIT_INFEASIBLE,
    EXIT_NUMERICAL, EXIT_OK,
};

pub type CmdResult = Result<u8, String>;

pub fn load_system(a: &SystemArgs, extra: &[(&str, f64)]) -> Result<LpvSystem, String> {
    let text = fs::read_to_string(&a.file).map_err(|e| format!("{}: {e}", a.file.display()))?;
    let mut overrides = BTreeMap::new();
    for c in &a.constants {
        let (k, v) = c
            .split_once('=')
            .ok_or_else(|| format!("--const expects NAME=VALUE, got '{c}'"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("--const {k}: '{v}' is not a number"))?;
        overrides.insert(k.trim().to_string(), v);
    }
    if let Some(nu) = a.nu {
        overrides.insert("nu".into(), nu);
    }
    if let Some(r) = a.rho_max {
        overrides.insert("rho_max".into(), r);
    }
    for &(k, v) in extra {
        overrides.insert(k.to_string(), v);
    }
    parse_system_with(&text, &overrides).map_err(|e| format!("{}: {e}", a.file.display()))
}

pub fn mode_of(m: ModeArg) -> Mode {
    match m {
        ModeArg::Quadratic => Mode::Quadratic,
        ModeArg::Robust => Mode::Robust,
        ModeArg::Constant => Mode::ConstantDwell,
        ModeArg::Minimum => Mode::MinimumDwell,
    }
}

pub fn certify_options(p: &ProgramArgs) -> CertifyOptions {
    CertifyOptions {
        epsilon: p.epsilon,
        degree: p.degree,
        jump_epsilon: !p.no_jump_epsilon,
        seed: p.seed,
        ..CertifyOptions::default()
    }
}

pub fn search_options(b: &BracketArgs, jobs: usize) -> SearchOptions {
    SearchOptions {
        start: b.start,
        cap: b.cap,
        floor: b.floor,
        rel_tol: b.rel_tol,
        jobs,
    }
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct CertifyDoc<'a> {
    system: &'a str,
    mode: Mode,
    dwell: Option<f64>,
    degree: u32,
    epsilon: f64,
    status: &'a str,
    solver: &'a SolverStats,
    verification: Option<&'a VerificationReport>,
    certificate: Option<&'a Certificate>,
}

pub fn certify(a: &CertifyArgs) -> CmdResult {
    let sys = load_system(&a.system, &[])?;
    let mode = mode_of(a.program.mode);
    if mode.needs_dwell() && a.dwell.is_none() {
        return Err(format!("--dwell is required in {} mode", mode.name()));
    }
    let opts = certify_options(&a.program);
    let out = run_certify(&sys, mode, a.dwell, &opts).map_err(|e| e.to_string())?;
    let verification = match &out {
        Outcome::Certified(c) => Some(&c.verification),
        Outcome::VerificationFailed { report, .. } => Some(report),
        _ => None,
    };
    let doc = CertifyDoc {
        system: &sys.label,
        mode,
        dwell: if mode.needs_dwell() { a.dwell } else { None },
        degree: if mode == Mode::Quadratic { 0 } else { opts.degree },
        epsilon: opts.epsilon,
        status: out.label(),
        solver: out.solver(),
        verification,
        certificate: out.certificate(),
    };
    let text = serde_json::to_string_pretty(&doc).expect("document serializes") + "\n";
    emit(a.out.as_deref(), &text)?;
    eprintln!("{}: {}", mode.name(), out.label());
    Ok(match out {
        Outcome::Certified(_) => EXIT_OK,
        Outcome::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_NUMERICAL,
    })
}

pub fn search(a: &SearchArgs) -> CmdResult {
    let sys = load_system(&a.system, &[])?;
    let mode = mode_of(a.program.mode);
    if !mode.needs_dwell() {
        return Err("search needs --mode constant or --mode minimum".into());
    }
    let res = min_dwell_search(&sys, mode, &certify_options(&a.program), &search_options(&a.bracket, a.jobs))
        .map_err(|e| e.to_string())?;
    emit(a.out.as_deref(), &(res.to_json() + "\n"))?;
    match res.certified {
        Some(t) => {
            eprintln!("certified dwell-time {t} (bracket [{}, {}], {:?})", res.bracket.0, res.bracket.1, res.status);
            Ok(EXIT_OK)
        }
        None => {
            eprintln!("no certificate below {}", res.bracket.1);
            Ok(if res.status == SearchStatus::HitCap { EXIT_INFEASIBLE } else { EXIT_NUMERICAL })
        }
    }
}

/// Reads a bare certificate or the `certificate` field of a certify document.
pub fn read_certificate(path: &Path) -> Result<Certificate, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let value = match value.get("certificate") {
        Some(serde_json::Value::Null) => return Err(format!("{}: document holds no certificate", path.display())),
        Some(c) => c.clone(),
        None => value,
    };
    serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct AuditSummary {
    family: Family,
    dwell: f64,
    horizon: f64,
    seed: u64,
    jumps: usize,
    samples: usize,
    norm_ratio: f64,
    diverged: bool,
    max_flow_derivative: Option<f64>,
    max_flow_increase: Option<f64>,
    max_jump_increase: Option<f64>,
    tol: f64,
    violations: usize,
    passed: bool,
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let sys = load_system(&a.system, &[])?;
    let cert = read_certificate(&a.cert)?;
    let family = match a.family {
        Some(FamilyArg::Constant) => Family::Constant,
        Some(FamilyArg::Minimum) => Family::Minimum,
        None => family_for(cert.mode),
    };
    let dwell = a
        .dwell
        .or(cert.dwell)
        .ok_or("--dwell is required for certificates without a dwell-time")?;
    let horizon = a.horizon.unwrap_or(50.0 * dwell);
    let topts = TrajectoryOptions::new(family, dwell, horizon, a.seed);
    let traj = generate_trajectory(&sys.params, &sys.derivs, &topts).map_err(|e| e.to_string())?;
    check_compatible(&cert, &sys, &traj).map_err(|e| e.to_string())?;
    let x0 = a.x0.clone().unwrap_or_else(|| initial_state(sys.n, a.seed));
    let sim = run_sim(&sys, &traj, &x0, a.step).map_err(|e| e.to_string())?;
    let audit = lyapunov_audit(&cert, &sim, a.tol).map_err(|e| e.to_string())?;
    if let Some(p) = &a.out {
        let csv = sim.to_csv(Some(&audit.v)).map_err(|e| e.to_string())?;
        emit(Some(p), &csv)?;
    }
    let summary = AuditSummary {
        family,
        dwell,
        horizon,
        seed: a.seed,
        jumps: sim.jumps.len(),
        samples: sim.t.len(),
        norm_ratio: sim.norm_ratio,
        diverged: sim.diverged,
        max_flow_derivative: finite(audit.max_flow_derivative),
        max_flow_increase: finite(audit.max_flow_increase),
        max_jump_increase: finite(audit.max_jump_increase),
        tol: audit.tol,
        violations: audit.violations,
        passed: audit.passed,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if audit.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "audit failed: {} violations, max flow increase {:.3e}, max jump increase {:.3e}{}",
            audit.violations,
            audit.max_flow_increase,
            audit.max_jump_increase,
            if sim.diverged { ", state diverged" } else { "" }
        );
        Ok(EXIT_INFEASIBLE)
    }
}

pub fn dump_sdp(a: &CertifyArgs) -> CmdResult {
    let sys = load_system(&a.system, &[])?;
    let mode = mode_of(a.program.mode);
    if mode.needs_dwell() && a.dwell.is_none() {
        return Err(format!("--dwell is required in {} mode", mode.name()));
    }
    let asm = assemble(&sys, mode, a.dwell, &certify_options(&a.program)).map_err(|e| e.to_string())?;
    emit(a.out.as_deref(), &asm.program.problem.dump())?;
    Ok(EXIT_OK)
}
