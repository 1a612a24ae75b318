use std::collections::BTreeMap;

use lpv_dwell::model::{
    example1, example2, example2_fixed, parse_system, parse_system_with, print_system, sample_parameter_seeded, DerivativeModel,
    ModelError, EXAMPLE1,
};
use lpv_dwell::poly::{Polynomial, Var};

#[test]
fn example1_structure() {
    let sys = example1(3.8, 0.5);
    assert_eq!(sys.n, 2);
    assert_eq!(sys.num_params(), 1);
    assert_eq!(sys.params.inequalities.len(), 1);
    assert!(sys.params.equalities.is_empty());
    let r = Polynomial::var(Var::rho(0));
    assert_eq!(sys.params.inequalities[0], r.scale(3.8).sub(&r.mul(&r)));
    assert_eq!(sys.derivs, DerivativeModel::Box(vec![(-0.5, 0.5)]));
    assert_eq!(sys.derivs.vertices().len(), 2);
    let a = sys.a_at(&[1.0]);
    assert_eq!(a[(1, 0)], -3.0);
}

#[test]
fn example2_structure() {
    let sys = example2(0.3);
    assert_eq!(sys.n, 4);
    assert!(sys.params.inequalities.is_empty());
    assert_eq!(sys.params.equalities.len(), 1);
    let DerivativeModel::Maps(maps) = &sys.derivs else { panic!("expected maps") };
    assert_eq!(maps.len(), 2);
    let v = sys.derivative_vertices_at(&[0.6, 0.8]);
    assert!((v[0][0] + 0.3 * 0.8).abs() < 1e-15 && (v[0][1] - 0.3 * 0.6).abs() < 1e-15);
    let a = sys.a_at(&[1.0, 0.0]);
    assert!((a[(2, 0)] + 3.0 * 3.75 / 4.0).abs() < 1e-15);
    assert!((a[(2, 1)] + 2.0 * 3.75).abs() < 1e-15);
    // ν = 0 collapses both maps to the zero vertex
    assert_eq!(example2(0.0).derivs.vertices().len(), 1);
}

#[test]
fn constant_system_without_parameters() {
    let sys = parse_system("[system]\nn = 1\n[matrix]\n-1\n").unwrap();
    assert_eq!(sys.num_params(), 0);
    assert_eq!(sys.derivs.vertices(), vec![Vec::<Polynomial>::new()]);
}

#[test]
fn print_parse_round_trip() {
    for sys in [example1(10.0, 0.3), example2(0.9)] {
        let text = print_system(&sys);
        assert_eq!(parse_system(&text).unwrap(), sys, "{text}");
    }
}

#[test]
fn overrides_replace_constants() {
    let mut o = BTreeMap::new();
    o.insert("rho_max".to_string(), 2.0);
    let sys = parse_system_with(EXAMPLE1, &o).unwrap();
    assert_eq!(sys.params.box_hull, vec![(0.0, 2.0)]);
    assert_eq!(sys.constants["nu"], 0.0);
}

#[test]
fn errors_point_at_the_problem() {
    let bad = EXAMPLE1.replace("-2 - rho1, -1", "-2 - theta, -1");
    match parse_system(&bad) {
        Err(ModelError::UnknownVariable { line, col, name }) => {
            assert_eq!(name, "theta");
            assert_eq!(line, 12);
            assert_eq!(col, 6);
        }
        other => panic!("unexpected {other:?}"),
    }
    let bad = EXAMPLE1.replace("-2 - rho1, -1", "-2 - rho1");
    assert!(matches!(parse_system(&bad), Err(ModelError::Dimension(_))));
    let bad = EXAMPLE1.replace("rho1*(rho_max - rho1)", "rho1*(rho_max - rho1");
    assert!(matches!(parse_system(&bad), Err(ModelError::Syntax { line: 19, .. })));
    let bad = EXAMPLE1.replace("rho1*(rho_max - rho1)", "-1 - rho1^2");
    assert!(matches!(parse_system(&bad), Err(ModelError::EmptySet(_))));
    let bad = EXAMPLE1.replace("[matrix]", "[matrx]");
    assert!(matches!(parse_system(&bad), Err(ModelError::Syntax { line: 10, .. })));
}

#[test]
fn samples_satisfy_the_set() {
    let sys = example1(1.0, 0.0);
    for seed in 0..50 {
        let t = sample_parameter_seeded(&sys.params, seed).unwrap();
        assert!((0.0..=1.0).contains(&t[0]));
    }
    let sys = example2(0.0);
    for seed in 0..50 {
        let t = sample_parameter_seeded(&sys.params, seed).unwrap();
        assert!((t[0] * t[0] + t[1] * t[1] - 1.0).abs() < 1e-12);
    }
    // a tilted ellipse goes through the projection path
    let text = "[system]\nn = 1\n[matrix]\n-1\n[parameters]\nN = 2\nrho1: -3, 3\nrho2: -3, 3\n[equalities]\nrho1^2 + 2*rho2^2 + rho1*rho2 - 2\n";
    let sys = parse_system(text).unwrap();
    for seed in 0..20 {
        let t = sample_parameter_seeded(&sys.params, seed).unwrap();
        assert!((t[0] * t[0] + 2.0 * t[1] * t[1] + t[0] * t[1] - 2.0).abs() < 1e-9);
    }
}

#[test]
fn example2_printed_matrix_is_singular_and_fixed_one_is_hurwitz() {
    let plain = example2(0.0);
    let fixed = example2_fixed(0.0);
    for k in 0..24 {
        let b = k as f64 * std::f64::consts::PI / 12.0;
        let rho = [b.cos(), b.sin()];
        assert!(plain.a_at(&rho).determinant().abs() < 1e-9);
        let eig = fixed.a_at(&rho).complex_eigenvalues();
        assert!(eig.iter().all(|z| z.re < -0.7), "{eig:?}");
    }
}
