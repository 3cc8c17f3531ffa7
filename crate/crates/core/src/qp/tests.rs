use super::*;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn m(rows: usize, cols: usize, xs: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, xs)
}

const INF: f64 = f64::INFINITY;

#[test]
fn equality_pins_the_solution() {
    let p = m(1, 1, &[2.0]);
    let prob = QpProblem::new(p, v(&[0.0]), m(1, 1, &[1.0]), v(&[3.0]), v(&[-INF]), v(&[INF])).unwrap();
    let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.x[0] - 3.0).abs() < 1e-8);
    assert!((sol.objective - 9.0).abs() < 1e-7);
}

#[test]
fn active_lower_bound() {
    // min (x - 1)^2 with x >= 2.
    let prob = QpProblem::boxed(m(1, 1, &[2.0]), v(&[-2.0]), v(&[2.0]), v(&[INF])).unwrap();
    let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
    assert!(sol.is_optimal());
    assert_eq!(sol.x[0], 2.0);
    assert!(sol.mu[0] < 0.0);
    assert!((sol.mu[0] + 2.0).abs() < 1e-8);
}

#[test]
fn active_upper_bound_and_equality() {
    // min x0^2 + x1^2 s.t. x0 + x1 = 4, x1 <= 1.
    let prob = QpProblem::new(
        m(2, 2, &[2.0, 0.0, 0.0, 2.0]),
        v(&[0.0, 0.0]),
        m(1, 2, &[1.0, 1.0]),
        v(&[4.0]),
        v(&[-INF, -INF]),
        v(&[INF, 1.0]),
    )
    .unwrap();
    let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.x[0] - 3.0).abs() < 1e-9);
    assert_eq!(sol.x[1], 1.0);
    assert!(sol.mu[1] > 0.0);
}

#[test]
fn infeasible_bounds_and_equality() {
    // x0 + x1 = 5 with both in [0, 1].
    let prob = QpProblem::new(
        Matrix::identity(2, 2),
        v(&[0.0, 0.0]),
        m(1, 2, &[1.0, 1.0]),
        v(&[5.0]),
        v(&[0.0, 0.0]),
        v(&[1.0, 1.0]),
    )
    .unwrap();
    let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Infeasible);
}

#[test]
fn unbounded_direction() {
    let prob = QpProblem::boxed(Matrix::zeros(2, 2), v(&[-1.0, 0.0]), v(&[0.0, 0.0]), v(&[INF, 1.0])).unwrap();
    let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Unbounded);
}

#[test]
fn invalid_inputs_rejected() {
    let bad_p = m(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(matches!(
        QpProblem::boxed(bad_p, v(&[0.0, 0.0]), v(&[0.0, 0.0]), v(&[1.0, 1.0])),
        Err(Error::Config(_))
    ));
    let indefinite = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(QpProblem::boxed(indefinite, v(&[0.0, 0.0]), v(&[0.0, 0.0]), v(&[1.0, 1.0])).is_err());
    assert!(matches!(
        QpProblem::boxed(Matrix::identity(2, 2), v(&[0.0]), v(&[0.0, 0.0]), v(&[1.0, 1.0])),
        Err(Error::Dimension(_))
    ));
    assert!(QpProblem::boxed(Matrix::identity(1, 1), v(&[0.0]), v(&[2.0]), v(&[1.0])).is_err());
    assert!(QpProblem::boxed(Matrix::identity(1, 1), v(&[f64::NAN]), v(&[0.0]), v(&[1.0])).is_err());
}

#[test]
fn dump_format() {
    let prob = QpProblem::new(
        m(2, 2, &[2.0, 0.0, 0.0, 1.0]),
        v(&[1.0, -1.0]),
        m(1, 2, &[1.0, 1.0]),
        v(&[0.5]),
        v(&[0.0, -INF]),
        v(&[1.0, INF]),
    )
    .unwrap();
    let text = prob.dump();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "P 2 2");
    assert_eq!(lines[1], "2 0");
    assert_eq!(lines[3], "q 2 1");
    assert!(text.contains("A_eq 1 2\n1 1\n"));
    assert!(text.contains("lb 2 1\n0\n-inf\n"));
    assert!(text.contains("ub 2 1\n1\ninf\n"));
}

/// Random strictly convex QP with a known feasible point.
fn random_problem(rng: &mut ChaCha8Rng, n: usize, m_eq: usize) -> QpProblem {
    let k = n + 2;
    let r = Matrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
    let mut p = r.transpose() * r;
    for i in 0..n {
        p[(i, i)] += 1e-3;
    }
    let q = Vector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let a = Matrix::from_fn(m_eq, n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &x0;
    let mut lb = Vector::from_element(n, -INF);
    let mut ub = Vector::from_element(n, INF);
    for i in 0..n {
        match rng.random_range(0..4) {
            0 => {}
            1 => lb[i] = x0[i] - rng.random_range(0.0..0.5),
            2 => ub[i] = x0[i] + rng.random_range(0.0..0.5),
            _ => {
                lb[i] = x0[i] - rng.random_range(0.0..0.5);
                ub[i] = x0[i] + rng.random_range(0.0..0.5);
            }
        }
    }
    QpProblem::new(p, q, a, b, lb, ub).unwrap()
}

/// Projected gradient on the reduced problem (no equalities): an
/// independent first-order reference.
fn projected_gradient(prob: &QpProblem, iters: usize) -> Vector {
    let n = prob.n();
    let lmax = prob.p.clone().symmetric_eigenvalues().amax();
    let step = 1.0 / lmax;
    let mut x = Vector::from_fn(n, |i, _| 0f64.clamp(prob.lb[i], prob.ub[i]));
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    for _ in 0..iters {
        let g = &prob.p * &y + &prob.q;
        let mut xn = &y - g * step;
        for i in 0..n {
            xn[i] = xn[i].clamp(prob.lb[i], prob.ub[i]);
        }
        let tn = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        y = &xn + (&xn - &x) * ((t - 1.0) / tn);
        x = xn;
        t = tn;
    }
    x
}

#[test]
fn matches_projected_gradient_on_random_box_qps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let mut prob = random_problem(&mut rng, n, 0);
        // Well conditioned so the first-order reference converges.
        for i in 0..n {
            prob.p[(i, i)] += 0.5;
        }
        let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
        assert!(sol.is_optimal(), "{:?}", sol.residuals);
        let reference = projected_gradient(&prob, 20_000);
        let gap = (&sol.x - &reference).amax();
        assert!(gap < 1e-6, "gap {}", gap);
        assert!(sol.objective <= prob.objective(&reference) + 1e-9);
    }
}

#[test]
fn random_equality_qps_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.random_range(3..40);
        let m_eq = rng.random_range(0..n / 2 + 1);
        let prob = random_problem(&mut rng, n, m_eq);
        let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
        assert!(sol.is_optimal(), "n {} m {} {:?}", n, m_eq, sol.residuals);
        let r = kkt_residuals(&prob, &sol.x).unwrap();
        assert!(r.eq_residual < 1e-7 && r.bound_violation < 1e-9, "{:?}", r);
        // No feasible perturbation along the equality null space and
        // inside the bounds decreases the objective.
        let f0 = sol.objective;
        for _ in 0..20 {
            let d = Vector::from_fn(n, |_, _| rng.random_range(-1e-3..1e-3));
            let mut x = &sol.x + d;
            for i in 0..n {
                x[i] = x[i].clamp(prob.lb[i], prob.ub[i]);
            }
            if m_eq > 0 && (&prob.a_eq * &x - &prob.b_eq).amax() > 1e-12 {
                continue;
            }
            assert!(prob.objective(&x) >= f0 - 1e-9);
        }
    }
}

#[test]
fn finite_difference_stationarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prob = random_problem(&mut rng, 8, 3);
    let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
    // Gradient of the Lagrangian by central differences.
    let lagrangian = |x: &Vector| prob.objective(x) + sol.nu.dot(&(&prob.a_eq * x - &prob.b_eq)) + sol.mu.dot(x);
    let h = 1e-5;
    for i in 0..8 {
        let mut xp = sol.x.clone();
        let mut xm = sol.x.clone();
        xp[i] += h;
        xm[i] -= h;
        let g = (lagrangian(&xp) - lagrangian(&xm)) / (2.0 * h);
        assert!(g.abs() < 1e-6, "component {}: {}", i, g);
    }
}

#[test]
fn deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prob = random_problem(&mut rng, 20, 5);
    let a = solve_qp(&prob, &QpSettings::default()).unwrap();
    let b = solve_qp(&prob, &QpSettings::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn cached_solver_reuse_matches_fresh_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prob = random_problem(&mut rng, 15, 4);
    let solver = QpSolver::new(
        prob.p.clone(),
        prob.a_eq.clone(),
        prob.lb.clone(),
        prob.ub.clone(),
        QpSettings::default(),
    )
    .unwrap();
    for _ in 0..5 {
        let q = Vector::from_fn(15, |_, _| rng.random_range(-3.0..3.0));
        let cached = solver.solve(&q, &prob.b_eq).unwrap();
        let fresh = solve_qp(&QpProblem { q: q.clone(), ..prob.clone() }, &QpSettings::default()).unwrap();
        assert!(cached.is_optimal());
        assert_eq!(cached.x, fresh.x);
    }
}

#[test]
fn scaling_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prob = random_problem(&mut rng, 10, 3);
    let base = solve_qp(&prob, &QpSettings::default()).unwrap();
    for s in [1e-3, 1e3] {
        let scaled = QpProblem {
            p: &prob.p * s,
            q: &prob.q * s,
            ..prob.clone()
        };
        let sol = solve_qp(&scaled, &QpSettings::default()).unwrap();
        assert!(sol.is_optimal());
        assert!((&sol.x - &base.x).amax() < 1e-6);
    }
    let unscaled = solve_qp(
        &prob,
        &QpSettings {
            scaling_iters: 0,
            ..QpSettings::default()
        },
    )
    .unwrap();
    assert!((&unscaled.x - &base.x).amax() < 1e-6);
}

#[test]
fn tightening_bounds_never_lowers_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let prob = random_problem(&mut rng, 12, 2);
        let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
        let mut tight = prob.clone();
        let i = rng.random_range(0..12);
        let x = sol.x[i];
        tight.ub[i] = tight.ub[i].min(x - 0.1).max(tight.lb[i]);
        let sol2 = solve_qp(&tight, &QpSettings::default()).unwrap();
        if sol2.is_optimal() {
            assert!(sol2.objective >= sol.objective - 1e-8);
        }
    }
}

#[test]
fn fixed_variables() {
    let prob = QpProblem::boxed(
        Matrix::identity(3, 3),
        v(&[1.0, 1.0, 1.0]),
        v(&[0.5, -INF, -INF]),
        v(&[0.5, INF, INF]),
    )
    .unwrap();
    let sol = solve_qp(&prob, &QpSettings::default()).unwrap();
    assert!(sol.is_optimal());
    assert_eq!(sol.x[0], 0.5);
    assert!((sol.x[1] + 1.0).abs() < 1e-10);
    let _ = vec![0];
}

#[test]
fn kkt_residuals_flag_non_optimal_points() {
    let prob = QpProblem::boxed(m(1, 1, &[2.0]), v(&[-2.0]), v(&[0.0]), v(&[10.0])).unwrap();
    let r = kkt_residuals(&prob, &v(&[3.0])).unwrap();
    assert!((r.stationarity - 4.0).abs() < 1e-12);
    let r = kkt_residuals(&prob, &v(&[1.0])).unwrap();
    assert!(r.stationarity < 1e-12);
    let r = kkt_residuals(&prob, &v(&[-1.0])).unwrap();
    assert_eq!(r.bound_violation, 1.0);
}
