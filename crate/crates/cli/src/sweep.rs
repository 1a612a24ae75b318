use std::time::Instant;

use lpv_dwell::stability::{min_dwell_search, DwellTimeResult, ProbeOutcome, SearchStatus};

use crate::commands::{certify_options, emit, load_system, mode_of, search_options, CmdResult};
use crate::{AxisArg, SweepArgs, EXIT_INFEASIBLE, EXIT_OK};

/// Fixed column set of the sweep table.
pub const HEADER: [&str; 12] = [
    "axis",
    "value",
    "status",
    "certified",
    "lo",
    "hi",
    "probes",
    "failed_probes",
    "variables",
    "constraints",
    "iterations",
    "wall_time_s",
];

struct Row {
    value: f64,
    result: Result<DwellTimeResult, String>,
    seconds: f64,
}

fn status_name(s: SearchStatus) -> &'static str {
    match s {
        SearchStatus::Converged => "converged",
        SearchStatus::HitCap => "hit-cap",
        SearchStatus::SolverFailure => "solver-failure",
    }
}

fn solve_row(a: &SweepArgs, value: f64) -> Row {
    let start = Instant::now();
    let key = match a.axis {
        AxisArg::Nu => "nu",
        AxisArg::RhoMax => "rho_max",
    };
    let result = load_system(&a.system, &[(key, value)]).and_then(|sys| {
        min_dwell_search(&sys, mode_of(a.program.mode), &certify_options(&a.program), &search_options(&a.bracket, 1))
            .map_err(|e| e.to_string())
    });
    Row {
        value,
        result,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run(a: &SweepArgs) -> CmdResult {
    if !mode_of(a.program.mode).needs_dwell() {
        return Err("sweep needs --mode constant or --mode minimum".into());
    }
    if a.values.windows(2).any(|w| w[1] <= w[0]) {
        return Err("--values must be strictly increasing".into());
    }
    let axis = match a.axis {
        AxisArg::Nu => "nu",
        AxisArg::RhoMax => "rho-max",
    };
    let mut rows = Vec::with_capacity(a.values.len());
    for chunk in a.values.chunks(a.jobs.max(1)) {
        let done: Vec<Row> = std::thread::scope(|sc| {
            let handles: Vec<_> = chunk.iter().map(|&v| sc.spawn(move || solve_row(a, v))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep row panicked")).collect()
        });
        for r in &done {
            log::info!("{axis} = {}: {:.1} s", r.value, r.seconds);
        }
        rows.extend(done);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| e.to_string();
    w.write_record(HEADER).map_err(csv_err)?;
    let mut any = false;
    for r in &rows {
        let wall = if a.no_timing { "0".to_string() } else { format!("{:.3}", r.seconds) };
        let fields: Vec<String> = match &r.result {
            Ok(res) => {
                any |= res.certified.is_some();
                let at = res
                    .probes
                    .iter()
                    .rev()
                    .find(|p| Some(p.dwell) == res.certified)
                    .or(res.probes.last());
                vec![
                    axis.into(),
                    r.value.to_string(),
                    status_name(res.status).into(),
                    res.certified.map_or(String::new(), |t| t.to_string()),
                    res.bracket.0.to_string(),
                    res.bracket.1.to_string(),
                    res.probes.len().to_string(),
                    res.probes.iter().filter(|p| p.outcome == ProbeOutcome::Failed).count().to_string(),
                    at.map_or(String::new(), |p| p.solver.variables.to_string()),
                    at.map_or(String::new(), |p| p.solver.constraints.to_string()),
                    res.probes.iter().map(|p| p.solver.iterations).sum::<usize>().to_string(),
                    wall,
                ]
            }
            Err(e) => {
                let mut f = vec![axis.into(), r.value.to_string(), format!("error: {e}")];
                f.extend(std::iter::repeat_n(String::new(), 8));
                f.push(wall);
                f
            }
        };
        w.write_record(&fields).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    emit(a.out.as_deref(), &String::from_utf8(bytes).expect("csv is utf-8"))?;
    Ok(if any { EXIT_OK } else { EXIT_INFEASIBLE })
}
