use lpv_dwell::model::{example1, parse_system};
use lpv_dwell::poly::Var;
use lpv_dwell::stability::{
    certify, certify_constant_dwell, certify_minimum_dwell, certify_quadratic, certify_robust, min_dwell_search,
    Certificate, CertifyOptions, Mode, ProbeOutcome, SearchOptions, SearchStatus,
};

const STABLE_SCALAR: &str = "\
[system]
n = 1
[matrix]
-1
[parameters]
N = 1
rho1: -1, 1
[inequalities]
1 - rho1^2
[derivatives]
box: -1, 1
";

const MINUS_IDENTITY: &str = "\
[system]
n = 2
[matrix]
-1, 0
0, -1
[parameters]
N = 0
";

fn opts(degree: u32) -> CertifyOptions {
    CertifyOptions {
        degree,
        ..CertifyOptions::default()
    }
}

#[test]
fn minus_identity_is_quadratically_stable() {
    let sys = parse_system(MINUS_IDENTITY).unwrap();
    let out = certify_quadratic(&sys, &opts(0)).unwrap();
    let cert = out.certificate().expect("feasible");
    assert!(cert.verification.passed);
    let p = cert.s.evaluate_with(&|_| None).unwrap();
    // any P ≻ 0 works for A = -I; check it is a scaled identity-like positive matrix
    assert!(p.symmetric_eigenvalues().min() >= 0.005);
    assert!(cert.verification.flow.worst <= -0.005);
}

#[test]
fn example1_quadratic_threshold() {
    assert!(certify_quadratic(&example1(3.8, 0.0), &opts(0)).unwrap().is_certified());
    assert!(certify_quadratic(&example1(3.9, 0.0), &opts(0)).unwrap().is_infeasible());
}

#[test]
fn robust_degree_zero_matches_quadratic() {
    for rho in [3.0, 3.8, 3.9, 6.0] {
        let sys = example1(rho, 0.3);
        let q = certify_quadratic(&sys, &opts(0)).unwrap();
        let r = certify_robust(&sys, &opts(0)).unwrap();
        assert_eq!(q.label(), r.label(), "rho_max = {rho}");
    }
}

#[test]
fn robust_frozen_parameters() {
    // ν = 0: every frozen A(ρ) is Hurwitz (trace −1, det 2 + ρ), so a
    // parameter-dependent P exists.
    let sys = example1(10.0, 0.0);
    let out = certify_robust(&sys, &opts(2)).unwrap();
    let cert = out.certificate().expect("feasible");
    assert!(cert.s.variables().contains(&Var::rho(0)));
    assert!(!cert.s.variables().contains(&Var::TAU));
    assert!(certify_quadratic(&sys, &opts(0)).unwrap().is_infeasible());
}

#[test]
fn constant_dwell_reduces_to_quadratic() {
    let o = CertifyOptions {
        degree: 0,
        jump_epsilon: false,
        ..CertifyOptions::default()
    };
    for rho in [3.0, 3.9] {
        let sys = example1(rho, 0.0);
        let q = certify_quadratic(&sys, &o).unwrap();
        let c = certify_constant_dwell(&sys, 2.0, &o).unwrap();
        assert_eq!(q.label(), c.label(), "rho_max = {rho}");
    }
}

#[test]
fn quadratically_stable_example_any_dwell() {
    let sys = example1(3.0, 0.0);
    for t in [0.1, 1.0, 20.0] {
        let out = certify_constant_dwell(&sys, t, &opts(2)).unwrap();
        assert!(out.is_certified(), "T = {t}: {}", out.label());
    }
}

#[test]
fn scalar_stable_any_dwell() {
    let sys = parse_system(STABLE_SCALAR).unwrap();
    for t in [0.05, 1.0, 50.0] {
        assert!(certify_minimum_dwell(&sys, t, &opts(2)).unwrap().is_certified());
    }
}

#[test]
fn constant_dwell_bracket_example1() {
    let sys = example1(10.0, 0.0);
    assert!(certify_constant_dwell(&sys, 20.0, &opts(2)).unwrap().is_certified());
    assert!(certify_constant_dwell(&sys, 0.01, &opts(2)).unwrap().is_infeasible());
}

#[test]
fn certificate_json_round_trip() {
    let sys = example1(3.0, 0.0);
    let out = certify(&sys, Mode::MinimumDwell, Some(1.5), &opts(2)).unwrap();
    let cert = out.certificate().unwrap();
    let text = cert.to_json();
    assert!(text.contains("\"minimum-dt\""));
    let back = Certificate::from_json(&text).unwrap();
    assert_eq!(&back, cert);
}

#[test]
fn search_on_quadratically_stable_system() {
    let sys = example1(3.0, 0.0);
    let search = SearchOptions {
        floor: 0.1,
        ..SearchOptions::default()
    };
    let res = min_dwell_search(&sys, Mode::MinimumDwell, &opts(2), &search).unwrap();
    assert_eq!(res.status, SearchStatus::Converged);
    assert_eq!(res.bracket.0, 0.0);
    assert!(res.certified.unwrap() < 0.2);
    assert!(res.probes.iter().all(|p| p.outcome == ProbeOutcome::Feasible));
    assert!(res.certificate.is_some());
}

#[test]
fn search_is_monotone_and_bracketed() {
    let sys = example1(10.0, 0.0);
    let res = min_dwell_search(&sys, Mode::ConstantDwell, &opts(2), &SearchOptions::default()).unwrap();
    assert_eq!(res.status, SearchStatus::Converged);
    let (lo, hi) = res.bracket;
    assert!(lo > 0.0 && hi - lo <= 1e-2 * hi);
    assert_eq!(res.certified, Some(hi));
    assert!(res.is_monotone());
    let cert = res.certificate.as_ref().unwrap();
    assert_eq!(cert.dwell, Some(hi));
    assert!(cert.verification.jump.as_ref().unwrap().passed);
}

#[test]
fn speculative_search_matches_sequential() {
    let sys = example1(10.0, 0.0);
    let seq = min_dwell_search(&sys, Mode::ConstantDwell, &opts(2), &SearchOptions::default()).unwrap();
    let par = min_dwell_search(
        &sys,
        Mode::ConstantDwell,
        &opts(2),
        &SearchOptions {
            jobs: 3,
            ..SearchOptions::default()
        },
    )
    .unwrap();
    assert_eq!(seq, par);
}

#[test]
fn rejects_nonpositive_dwell() {
    let sys = example1(3.0, 0.0);
    assert!(certify_constant_dwell(&sys, 0.0, &opts(2)).is_err());
    assert!(certify_minimum_dwell(&sys, -1.0, &opts(2)).is_err());
}
