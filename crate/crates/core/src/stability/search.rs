use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{certify, Certificate, CertifyOptions, Mode, Outcome, SolverStats, StabilityError};
use crate::model::LpvSystem;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    /// First probe.
    pub start: f64,
    /// Doubling stops above this value.
    pub cap: f64,
    /// Halving stops below this value; a system still feasible there is
    /// reported with bracket `[0, floor]`.
    pub floor: f64,
    /// Bisection stops once `hi − lo ≤ rel_tol · hi`.
    pub rel_tol: f64,
    /// Probes solved concurrently. The result does not depend on it.
    pub jobs: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            start: 1.0,
            cap: (1u64 << 20) as f64,
            floor: 1e-3,
            rel_tol: 1e-2,
            jobs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeOutcome {
    Feasible,
    Infeasible,
    /// Numerical failure or a rejected certificate; treated as unknown.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub dwell: f64,
    pub outcome: ProbeOutcome,
    pub detail: String,
    pub solver: SolverStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStatus {
    Converged,
    HitCap,
    /// Converged, but the lower end of the final bracket is a failed probe.
    SolverFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellTimeResult {
    pub mode: Mode,
    pub degree: u32,
    pub epsilon: f64,
    /// Upper bound on the smallest stability-preserving dwell-time.
    pub certified: Option<f64>,
    pub bracket: (f64, f64),
    pub status: SearchStatus,
    pub probes: Vec<Probe>,
    pub certificate: Option<Certificate>,
}

impl DwellTimeResult {
    /// No probe above a feasible one came back infeasible.
    pub fn is_monotone(&self) -> bool {
        let Some(first) = self
            .probes
            .iter()
            .filter(|p| p.outcome == ProbeOutcome::Feasible)
            .map(|p| p.dwell)
            .reduce(f64::min)
        else {
            return true;
        };
        self.probes
            .iter()
            .all(|p| p.outcome != ProbeOutcome::Infeasible || p.dwell < first)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

fn classify(o: &Outcome) -> ProbeOutcome {
    match o {
        Outcome::Certified(_) => ProbeOutcome::Feasible,
        Outcome::Infeasible(_) => ProbeOutcome::Infeasible,
        _ => ProbeOutcome::Failed,
    }
}

struct Prober<'a> {
    sys: &'a LpvSystem,
    mode: Mode,
    opts: &'a CertifyOptions,
    jobs: usize,
    cache: HashMap<u64, Outcome>,
    log: Vec<Probe>,
}

impl Prober<'_> {
    fn solve(&self, t: f64) -> Result<Outcome, StabilityError> {
        let out = certify(self.sys, self.mode, Some(t), self.opts)?;
        log::info!("T = {t:.6}: {}", out.label());
        Ok(out)
    }

    /// Solves the uncached values among `ts`, `jobs` at a time.
    fn prefetch(&mut self, ts: &[f64]) -> Result<(), StabilityError> {
        let todo: Vec<f64> = ts.iter().copied().filter(|t| !self.cache.contains_key(&t.to_bits())).collect();
        for chunk in todo.chunks(self.jobs.max(1)) {
            let this = &*self;
            let results: Vec<Result<Outcome, StabilityError>> = std::thread::scope(|sc| {
                let handles: Vec<_> = chunk.iter().map(|&t| sc.spawn(move || this.solve(t))).collect();
                handles.into_iter().map(|h| h.join().expect("probe thread panicked")).collect()
            });
            for (&t, r) in chunk.iter().zip(results) {
                self.cache.insert(t.to_bits(), r?);
            }
        }
        Ok(())
    }

    fn probe(&mut self, t: f64) -> Result<ProbeOutcome, StabilityError> {
        if !self.cache.contains_key(&t.to_bits()) {
            let out = self.solve(t)?;
            self.cache.insert(t.to_bits(), out);
        }
        let out = &self.cache[&t.to_bits()];
        let kind = classify(out);
        self.log.push(Probe {
            dwell: t,
            outcome: kind,
            detail: out.label().to_string(),
            solver: out.solver().clone(),
        });
        Ok(kind)
    }

    /// Prefetches the bisection midpoints of the next few steps, breadth first,
    /// as many as `jobs` allows.
    fn speculate(&mut self, lo: f64, hi: f64) -> Result<(), StabilityError> {
        if self.jobs <= 1 {
            return Ok(());
        }
        let mut level = vec![(lo, hi)];
        let mut points = Vec::new();
        while points.len() + level.len() <= self.jobs && !level.is_empty() {
            let mut next = Vec::new();
            for &(a, b) in &level {
                let m = 0.5 * (a + b);
                points.push(m);
                next.push((a, m));
                next.push((m, b));
            }
            level = next;
        }
        self.prefetch(&points)
    }
}

/// Smallest certified dwell-time found by doubling (or halving) from
/// `search.start` and then bisecting.
pub fn min_dwell_search(
    sys: &LpvSystem,
    mode: Mode,
    opts: &CertifyOptions,
    search: &SearchOptions,
) -> Result<DwellTimeResult, StabilityError> {
    if !mode.needs_dwell() {
        return Err(StabilityError::Invalid(format!("{} has no dwell-time", mode.name())));
    }
    if !(search.start > 0.0 && search.cap >= search.start && search.rel_tol > 0.0) {
        return Err(StabilityError::Invalid("bad bracket options".into()));
    }
    let mut p = Prober {
        sys,
        mode,
        opts,
        jobs: search.jobs.max(1),
        cache: HashMap::new(),
        log: Vec::new(),
    };
    let mut lo;
    let mut hi;
    let mut lo_failed = false;
    if p.probe(search.start)? == ProbeOutcome::Feasible {
        hi = search.start;
        lo = 0.0;
        loop {
            let t = 0.5 * hi;
            if t < search.floor {
                break;
            }
            match p.probe(t)? {
                ProbeOutcome::Feasible => hi = t,
                other => {
                    lo = t;
                    lo_failed = other == ProbeOutcome::Failed;
                    break;
                }
            }
        }
    } else {
        lo = search.start;
        let mut t = search.start;
        loop {
            t *= 2.0;
            if t > search.cap {
                let probes = p.log;
                return Ok(DwellTimeResult {
                    mode,
                    degree: opts.degree,
                    epsilon: opts.epsilon,
                    certified: None,
                    bracket: (lo, search.cap),
                    status: SearchStatus::HitCap,
                    probes,
                    certificate: None,
                });
            }
            if p.jobs > 1 {
                let ahead: Vec<f64> = (0..p.jobs as i32).map(|k| t * 2f64.powi(k)).filter(|&x| x <= search.cap).collect();
                p.prefetch(&ahead)?;
            }
            if p.probe(t)? == ProbeOutcome::Feasible {
                hi = t;
                break;
            }
            lo = t;
        }
        lo_failed = p.log.iter().rev().nth(1).is_some_and(|q| q.outcome == ProbeOutcome::Failed);
    }
    if lo > 0.0 {
        while hi - lo > search.rel_tol * hi {
            p.speculate(lo, hi)?;
            let mid = 0.5 * (lo + hi);
            match p.probe(mid)? {
                ProbeOutcome::Feasible => hi = mid,
                other => {
                    lo = mid;
                    lo_failed = other == ProbeOutcome::Failed;
                }
            }
        }
    }
    let certificate = p.cache.remove(&hi.to_bits()).and_then(|o| match o {
        Outcome::Certified(c) => Some(*c),
        _ => None,
    });
    Ok(DwellTimeResult {
        mode,
        degree: opts.degree,
        epsilon: opts.epsilon,
        certified: Some(hi),
        bracket: (lo, hi),
        status: if lo_failed { SearchStatus::SolverFailure } else { SearchStatus::Converged },
        probes: p.log,
        certificate,
    })
}
