use lpv_dwell_web::{certify_json, example_system, search_json, simulate_json};
use serde_json::Value;

fn ex1() -> String {
    example_system("example1").unwrap()
}

#[test]
fn quadratic_threshold_through_json() {
    let ok: Value = serde_json::from_str(&certify_json(&ex1(), r#"{"rho_max": 3.8}"#, "quadratic", None, 2).unwrap()).unwrap();
    assert_eq!(ok["status"], "feasible");
    assert!(ok["certificate"].is_object());
    let no: Value = serde_json::from_str(&certify_json(&ex1(), r#"{"rho_max": 3.9}"#, "quadratic", None, 2).unwrap()).unwrap();
    assert_eq!(no["status"], "infeasible");
    assert!(no["certificate"].is_null());
}

#[test]
fn bad_input_is_an_error() {
    assert!(certify_json(&ex1(), "{", "quadratic", None, 2).is_err());
    assert!(certify_json(&ex1(), "", "sideways", None, 2).is_err());
    assert!(certify_json("[system]\n", "", "quadratic", None, 2).is_err());
    assert!(example_system("nope").is_none());
}

#[test]
fn search_then_simulate() {
    let consts = r#"{"rho_max": 6, "nu": 0.5}"#;
    let res: Value = serde_json::from_str(&search_json(&ex1(), consts, "minimum", 2).unwrap()).unwrap();
    // the bracket may close against a failed probe; the upper end is still certified
    assert_ne!(res["status"], "hit-cap");
    let t = res["certified"].as_f64().unwrap();
    assert!(t > 0.5 && t < 1.0, "{t}");

    let cert = res["certificate"].to_string();
    let a = simulate_json(&ex1(), consts, &cert, None, 20.0, 3).unwrap();
    assert_eq!(a, simulate_json(&ex1(), consts, &cert, None, 20.0, 3).unwrap());
    let trace: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(trace["passed"], true);
    assert_eq!(trace["violations"], 0);
    let n = trace["t"].as_array().unwrap().len();
    assert!(n > 100 && n <= 1500);
    assert_eq!(trace["v"].as_array().unwrap().len(), n);
    assert!(!trace["jumps"].as_array().unwrap().is_empty());
}
