use lpv_dwell::sdp::{
    preprocess, solve, verify_ray, BlockKind, Entry, SdpError, SdpOptions, SdpProblem, SdpStatus,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn e(block: usize, i: usize, j: usize, coef: f64) -> Entry {
    Entry { block, i, j, coef }
}

fn two_by_two(a: f64, b: f64, c: f64) -> SdpProblem {
    let mut p = SdpProblem::new("2x2");
    p.add_block(2, BlockKind::Psd);
    p.add_constraint(vec![e(0, 0, 0, 1.0)], a);
    p.add_constraint(vec![e(0, 1, 1, 1.0)], b);
    p.add_constraint(vec![e(0, 0, 1, 1.0)], c);
    p
}

fn check_ray(p: &SdpProblem, y: &[f64]) {
    let (by, min_eig, free) = verify_ray(p, y);
    assert!((by + 1.0).abs() < 1e-9, "bᵀy = {by}");
    assert!(min_eig >= -1e-7, "slack eig {min_eig}");
    assert!(free <= 1e-7);
}

#[test]
fn scalar_block() {
    let mut p = SdpProblem::new("x=1");
    p.add_block(1, BlockKind::Psd);
    p.add_constraint(vec![e(0, 0, 0, 1.0)], 1.0);
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Feasible);
    assert!((sol.blocks[0][(0, 0)] - 1.0).abs() < 1e-7);

    p.constraints[0].rhs = -1.0;
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Infeasible);
    check_ray(&p, &sol.ray.unwrap().y);
}

#[test]
fn correlation_determinant_sign() {
    let sol = solve(&two_by_two(1.0, 1.0, 0.9), &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Feasible);
    assert!(sol.max_eq_violation <= 1e-7 && sol.min_psd_eig >= -1e-7);
    let p = two_by_two(1.0, 1.0, 1.1);
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Infeasible);
    check_ray(&p, &sol.ray.unwrap().y);
}

#[test]
fn random_two_by_two_against_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    while done < 100 {
        let a: f64 = rng.random_range(-0.5..3.0);
        let b: f64 = rng.random_range(-0.5..3.0);
        let c: f64 = rng.random_range(-2.0..2.0);
        let det = a * b - c * c;
        // psd iff a, b >= 0 and det >= 0; stay away from the boundary
        let margin = det.abs().min(a.abs()).min(b.abs());
        if margin < 1e-2 {
            continue;
        }
        let expect = a > 0.0 && b > 0.0 && det > 0.0;
        let p = two_by_two(a, b, c);
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        if expect {
            assert_eq!(sol.status, SdpStatus::Feasible, "a={a} b={b} c={c}");
        } else {
            assert_eq!(sol.status, SdpStatus::Infeasible, "a={a} b={b} c={c}: {}", sol.message);
            check_ray(&p, &sol.ray.unwrap().y);
        }
        done += 1;
    }
}

#[test]
fn duplicated_rows_keep_one() {
    let mut p = two_by_two(1.0, 1.0, 0.5);
    p.add_constraint(vec![e(0, 0, 0, 2.0)], 2.0);
    p.add_constraint(vec![e(0, 0, 1, -1.0)], -0.5);
    let q = preprocess(&p).unwrap();
    assert_eq!(q.constraints.len(), 3);
    for c in &q.constraints {
        let n: f64 = c.entries.iter().map(|e| e.coef * e.coef).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dependent_rows_are_removed() {
    let mut p = SdpProblem::new("dep");
    p.add_block(2, BlockKind::Psd);
    p.add_constraint(vec![e(0, 0, 0, 1.0)], 1.0);
    p.add_constraint(vec![e(0, 1, 1, 1.0)], 2.0);
    p.add_constraint(vec![e(0, 0, 0, 1.0), e(0, 1, 1, 1.0)], 3.0);
    assert_eq!(preprocess(&p).unwrap().constraints.len(), 2);
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Feasible);

    p.constraints[2].rhs = 4.0;
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Infeasible);
    check_ray(&p, &sol.ray.unwrap().y);
}

#[test]
fn zero_row_with_nonzero_rhs_is_infeasible() {
    let mut p = SdpProblem::new("0=1");
    p.add_block(1, BlockKind::Psd);
    p.add_constraint(vec![], 1.0);
    assert!(matches!(preprocess(&p), Err(SdpError::Inconsistent { .. })));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Infeasible);
    assert_eq!(sol.iterations, 0);
}

#[test]
fn row_scaling_does_not_change_solution() {
    let p = two_by_two(2.0, 1.0, 0.3);
    let mut q = p.clone();
    for en in q.constraints[2].entries.iter_mut() {
        en.coef *= 1e6;
    }
    q.constraints[2].rhs *= 1e6;
    let a = solve(&p, &SdpOptions::default()).unwrap();
    let b = solve(&q, &SdpOptions::default()).unwrap();
    assert!(a.is_feasible() && b.is_feasible());
    assert!((&a.blocks[0] - &b.blocks[0]).amax() < 1e-6);
}

#[test]
fn free_blocks_are_unconstrained() {
    // x - f = -3 with x >= 0 needs f >= 3; f is free
    let mut p = SdpProblem::new("free");
    p.add_block(1, BlockKind::Psd);
    p.add_block(1, BlockKind::FreeSymmetric);
    p.add_constraint(vec![e(0, 0, 0, 1.0), e(1, 0, 0, -1.0)], -3.0);
    p.add_constraint(vec![e(0, 0, 0, 1.0)], 0.5);
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert!(sol.is_feasible(), "{}", sol.message);
    assert!((sol.blocks[1][(0, 0)] - 3.5).abs() < 1e-6);
}

#[test]
fn shared_free_variables_across_blocks() {
    // two psd blocks coupled through one free scalar: x1 = f, x2 = -f - 1 → infeasible
    let mut p = SdpProblem::new("shared");
    p.add_block(1, BlockKind::Psd);
    p.add_block(1, BlockKind::Psd);
    p.add_block(1, BlockKind::FreeSymmetric);
    p.add_constraint(vec![e(0, 0, 0, 1.0), e(2, 0, 0, -1.0)], 0.0);
    p.add_constraint(vec![e(1, 0, 0, 1.0), e(2, 0, 0, 1.0)], -1.0);
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Infeasible, "{}", sol.message);
    check_ray(&p, &sol.ray.unwrap().y);

    p.constraints[1].rhs = 1.0;
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert!(sol.is_feasible(), "{}", sol.message);
}

#[test]
fn deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = SdpProblem::new("rand");
    p.add_block(4, BlockKind::Psd);
    p.add_block(3, BlockKind::Psd);
    for _ in 0..6 {
        let mut entries = Vec::new();
        for _ in 0..4 {
            let b = rng.random_range(0..2);
            let n = if b == 0 { 4 } else { 3 };
            let i = rng.random_range(0..n);
            let j = rng.random_range(i..n);
            entries.push(e(b, i, j, rng.random_range(-1.0..1.0)));
        }
        p.add_constraint(entries, rng.random_range(-1.0..1.0));
    }
    let a = solve(&p, &SdpOptions::default()).unwrap();
    let b = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.status, b.status);
    assert_eq!(a.blocks, b.blocks);
    assert_ne!(a.status, SdpStatus::NumericalFailure, "{}", a.message);
}

#[test]
fn malformed_problem_rejected() {
    let mut p = SdpProblem::new("bad");
    p.add_block(2, BlockKind::Psd);
    p.add_constraint(vec![e(0, 2, 2, 1.0)], 1.0);
    assert!(matches!(solve(&p, &SdpOptions::default()), Err(SdpError::BadEntry { .. })));
    p.constraints[0].entries[0] = e(3, 0, 0, 1.0);
    assert!(matches!(solve(&p, &SdpOptions::default()), Err(SdpError::BadBlock { .. })));
}
