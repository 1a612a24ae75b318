use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpv-dwell"))
}

fn system(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/systems").join(name)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Top-level keys of a pretty-printed JSON object, in document order.
fn top_keys(text: &str) -> String {
    text.lines()
        .filter_map(|l| l.strip_prefix("  \"").filter(|r| !r.starts_with(' ')))
        .filter_map(|r| r.split_once('"').map(|(k, _)| format!("{k}\n")))
        .collect()
}

#[test]
fn quadratic_threshold_exit_codes() {
    let ex1 = system("example1.lpv");
    let ex1 = ex1.to_str().unwrap();
    let ok = run(&["certify", "--mode", "quadratic", ex1, "--rho-max", "3.8"]);
    assert_eq!(code(&ok), 0);
    assert_eq!(top_keys(&String::from_utf8_lossy(&ok.stdout)), golden("certify_keys.txt"));
    let no = run(&["certify", "--mode", "quadratic", ex1, "--rho-max", "3.9"]);
    assert_eq!(code(&no), 1);
    assert!(String::from_utf8_lossy(&no.stdout).contains("\"status\": \"infeasible\""));
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(code(&run(&["certify", "--mode", "quadratic", "/no/such/file.lpv"])), 3);
    assert_eq!(code(&run(&["certify", "--mode", "sideways", "x.lpv"])), 3);
    let ex1 = system("example1.lpv");
    assert_eq!(code(&run(&["certify", "--mode", "minimum", ex1.to_str().unwrap()])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn sweep_is_reproducible_and_keeps_row_order() {
    let ex1 = system("example1.lpv");
    let args = [
        "sweep",
        ex1.to_str().unwrap(),
        "--rho-max",
        "6",
        "--mode",
        "constant",
        "--axis",
        "nu",
        "--values",
        "0,0.5,1",
        "--no-timing",
    ];
    let a = run(&args);
    assert_eq!(code(&a), 0);
    let mut par = args.to_vec();
    par.extend(["--jobs", "3"]);
    let b = run(&par);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with(&golden("sweep_header.csv")));
    let values: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["0", "0.5", "1"]);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(3).is_some_and(|t| !t.is_empty())));
}

#[test]
fn sweep_rejects_unsorted_values() {
    let ex1 = system("example1.lpv");
    let o = run(&["sweep", ex1.to_str().unwrap(), "--axis", "nu", "--values", "0.5,0.1"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn search_reports_bracket() {
    let ex1 = system("example1.lpv");
    let o = run(&["search", ex1.to_str().unwrap(), "--rho-max", "6", "--mode", "constant"]);
    assert_eq!(code(&o), 0);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["status"], "converged");
    let t = doc["certified"].as_f64().unwrap();
    assert!(t > 0.5 && t < 1.0);
    assert_eq!(doc["certificate"]["dwell"].as_f64(), Some(t));
}

#[test]
fn simulate_audits_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = system("example1.lpv");
    let ex1 = ex1.to_str().unwrap();
    let cert = dir.path().join("cert.json");
    let o = run(&[
        "certify", ex1, "--rho-max", "6", "--nu", "0.5", "--mode", "minimum", "--dwell", "1", "--out",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);

    let trace = dir.path().join("trace.csv");
    let o = run(&[
        "simulate", ex1, "--rho-max", "6", "--nu", "0.5", "--cert", cert.to_str().unwrap(), "--seed", "1", "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = String::from_utf8(o.stdout).unwrap();
    assert_eq!(top_keys(&summary), golden("audit_keys.txt"));
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with(&golden("trace_header_example1.csv")));

    // flip the sign of S
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    for entry in doc["certificate"]["s"]["entries"].as_array_mut().unwrap() {
        for term in entry.as_array_mut().unwrap() {
            let c = term["coef"].as_f64().unwrap();
            term["coef"] = serde_json::json!(-c);
        }
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();
    let o = run(&["simulate", ex1, "--rho-max", "6", "--nu", "0.5", "--cert", bad.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("violations"));

    // constant family with horizon 50 jumps exactly at k T̄
    let o = run(&[
        "simulate", ex1, "--rho-max", "6", "--nu", "0.5", "--cert", cert.to_str().unwrap(), "--family", "constant",
        "--dwell", "1", "--horizon", "50", "--out", trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    let jumps: Vec<f64> = rows.windows(2).filter(|w| w[1][4] == 0.0 && w[0][4] > 0.0).map(|w| w[1][0]).collect();
    assert_eq!(jumps, (1..50).map(f64::from).collect::<Vec<_>>());
}

#[test]
fn simulate_rejects_mismatched_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = system("example1.lpv");
    let cert = dir.path().join("cert.json");
    let o = run(&[
        "certify", ex1.to_str().unwrap(), "--rho-max", "3", "--mode", "quadratic", "--out", cert.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let ex2 = system("example2_fixed.lpv");
    let o = run(&["simulate", ex2.to_str().unwrap(), "--cert", cert.to_str().unwrap(), "--dwell", "1"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn dump_sdp_round_trips() {
    let ex1 = system("example1.lpv");
    let o = run(&["dump-sdp", ex1.to_str().unwrap(), "--mode", "constant", "--dwell", "2"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let p = lpv_dwell::sdp::SdpProblem::from_dump(&text).unwrap();
    assert_eq!(p.dump(), text);
    assert!(!p.constraints.is_empty());
}
