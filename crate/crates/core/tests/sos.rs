use lpv_dwell::poly::{Monomial, PolyMatrix, Polynomial, Var};
use lpv_dwell::sdp::{solve, SdpOptions, SdpStatus};
use lpv_dwell::sos::{AffineMatrix, SosProgram};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn x() -> Polynomial {
    Polynomial::var(Var::rho(0))
}

fn c(v: f64) -> Polynomial {
    Polynomial::constant(v)
}

fn sos_status(target: &PolyMatrix) -> (SosProgram, lpv_dwell::sdp::SdpSolution) {
    let mut prog = SosProgram::new("t");
    prog.add_sos_matrix_constraint("t", &AffineMatrix::from_poly(target), None).unwrap();
    let sol = solve(&prog.problem, &SdpOptions::default()).unwrap();
    (prog, sol)
}

#[test]
fn identity_is_sos() {
    let (prog, sol) = sos_status(&PolyMatrix::identity(2));
    assert_eq!(sol.status, SdpStatus::Feasible);
    let d = prog.extract_decomposition(&sol, lpv_dwell::sos::GramId(0), 1e-7).unwrap();
    let prod = d.xi.transpose().mul(&d.xi).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((prod.get(i, j).coeff(&Monomial::one()) - want).abs() < 1e-8);
        }
    }
    assert!(d.residual < 1e-8);
}

#[test]
fn complete_the_square() {
    let t = x().pow(2).sub(&x().scale(2.0)).add(&c(1.0));
    let (prog, sol) = sos_status(&PolyMatrix::scalar(t));
    assert_eq!(sol.status, SdpStatus::Feasible);
    let d = prog.extract_decomposition(&sol, lpv_dwell::sos::GramId(0), 1e-7).unwrap();
    assert!(d.residual < 1e-8, "residual {}", d.residual);
    // dominant factor row is ±(x - 1)
    let row = (0..d.xi.rows())
        .max_by(|&a, &b| {
            d.xi.get(a, 0)
                .max_abs_coeff()
                .partial_cmp(&d.xi.get(b, 0).max_abs_coeff())
                .unwrap()
        })
        .unwrap();
    let f = d.xi.get(row, 0);
    let s = f.coeff(&Monomial::var(Var::rho(0))).signum();
    assert!((f.coeff(&Monomial::var(Var::rho(0))) * s - 1.0).abs() < 1e-4);
    assert!((f.coeff(&Monomial::one()) * s + 1.0).abs() < 1e-4);
}

#[test]
fn negative_constant_is_not_sos() {
    let (_, sol) = sos_status(&PolyMatrix::scalar(c(-1.0)));
    assert_eq!(sol.status, SdpStatus::Infeasible);
}

fn random_poly(rng: &mut ChaCha8Rng, vars: &[Var], deg: u32) -> Polynomial {
    Polynomial::from_terms(
        Monomial::all_up_to(vars, deg)
            .into_iter()
            .map(|m| (m, rng.random_range(-1.0..1.0))),
    )
}

#[test]
fn random_gram_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vars = [Var::rho(0), Var::rho(1)];
    for trial in 0..5 {
        let n = 1 + trial % 2;
        let xi = PolyMatrix::from_fn(n + 1, n, |_, _| random_poly(&mut rng, &vars, 2));
        let target = xi.transpose().mul(&xi).unwrap();
        let (prog, sol) = sos_status(&target);
        assert_eq!(sol.status, SdpStatus::Feasible, "trial {trial}: {}", sol.message);
        let d = prog.extract_decomposition(&sol, lpv_dwell::sos::GramId(0), 1e-7).unwrap();
        assert!(d.residual < 1e-8, "trial {trial}: residual {}", d.residual);
    }
}

#[test]
fn gram_form_reexpands_to_target_coefficients() {
    // structural check without solving: feed the Gram matrix of a known factor
    let xi = PolyMatrix::from_rows(vec![vec![x().sub(&c(2.0)), x().pow(2)]]).unwrap();
    let target = xi.transpose().mul(&xi).unwrap();
    let mut prog = SosProgram::new("t");
    let id = prog
        .add_sos_matrix_constraint("t", &AffineMatrix::from_poly(&target), None)
        .unwrap();
    let con = prog.constraint(id).unwrap();
    // basis [1, x] ⊗ I2 with Ξ = [v0 + v1 x] where v0 = (-2, 0), v1 = (1, 0) ... plus x² term
    let n = 2;
    let l = con.basis.len();
    let mut coeffs = DMatrix::zeros(1, l * n);
    for (a, m) in con.basis.iter().enumerate() {
        for col in 0..n {
            coeffs[(0, a * n + col)] = xi.get(0, col).coeff(m);
        }
    }
    let g = coeffs.transpose() * &coeffs;
    let back = prog.gram_polynomial(id, &g).unwrap();
    assert_eq!(back.sub(&target).unwrap().entries().iter().map(|p| p.max_abs_coeff()).fold(0.0, f64::max), 0.0);
    // every target monomial has a matching row
    for p in target.entries() {
        for (m, _) in p.terms() {
            assert!(con.rows.iter().any(|r| &r.0 == m));
        }
    }
}

/// Global minimum of an even-degree univariate polynomial with positive
/// leading coefficient, from the real roots of its derivative.
fn univariate_min(coef: &[f64]) -> f64 {
    let eval = |t: f64| coef.iter().rev().fold(0.0, |acc, &a| acc * t + a);
    let d: Vec<f64> = coef.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect();
    let deg = d.len() - 1;
    let mut comp = DMatrix::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -d[i] / d[deg];
    }
    comp.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-7)
        .map(|z| eval(z.re))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn univariate_sos_iff_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..30 {
        let deg = [2usize, 4, 6][trial % 3];
        let mut coef: Vec<f64> = (0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect();
        coef[deg] = rng.random_range(0.2..1.0);
        let m = univariate_min(&coef);
        let shift = rng.random_range(0.05..0.5) * if trial % 2 == 0 { 1.0 } else { -1.0 };
        coef[0] += shift - m;
        let p = Polynomial::from_terms(
            coef.iter()
                .enumerate()
                .map(|(k, &a)| (Monomial::from_powers([(Var::rho(0), k as u32)]), a)),
        );
        let (_, sol) = sos_status(&PolyMatrix::scalar(p));
        let expect = if shift > 0.0 { SdpStatus::Feasible } else { SdpStatus::Infeasible };
        assert_eq!(sol.status, expect, "trial {trial} deg {deg} shift {shift}: {}", sol.message);
    }
}
