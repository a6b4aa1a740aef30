//! Solve → reconstruct → verify on a few instances, plus the grid oracle.

use bolza_core::adjoint::{lemma_identity_residual, reconstruct_from_solution, reduce_to_w2};
use bolza_core::convexfn::{Affine, ScalarFn};
use bolza_core::example51;
use bolza_core::problem::{discretize, Constraint, ContinuousProblem, DiscreteProblem};
use bolza_core::solver::{brute_force_oracle, solve, SolveResult, SolverConfig};
use bolza_core::verify::verify_discrete;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimize `−x(1)` with `|x''| ≤ 1`, `x(0) = x'(0) = 0`; the optimum is `t²/2`.
fn polyhedral_tiny() -> ContinuousProblem {
    let up = Affine::constraint(vec![0.0], vec![0.0], vec![1.0], 1.0).unwrap();
    let down = Affine::constraint(vec![0.0], vec![0.0], vec![-1.0], 1.0).unwrap();
    ContinuousProblem::new(
        ScalarFn::zero(1, 1),
        ScalarFn::affine(1, 1, Affine::state(vec![-1.0], 0.0)).unwrap(),
        vec![
            Constraint::new(ScalarFn::affine(1, 3, up).unwrap()).unwrap(),
            Constraint::new(ScalarFn::affine(1, 3, down).unwrap()).unwrap(),
        ],
        vec![0.0],
        vec![0.0],
    )
    .unwrap()
}

/// Quadratic tracking of `x ≡ 2` under `x' ≥ −1`, which the optimum satisfies.
fn tracking() -> ContinuousProblem {
    let f = ScalarFn::quadratic(1, 1, DMatrix::from_element(1, 1, 1.0), vec![-2.0], 2.0).unwrap();
    let w = Affine::constraint(vec![0.0], vec![-1.0], vec![0.0], 1.0).unwrap();
    ContinuousProblem::new(
        f,
        ScalarFn::zero(1, 1),
        vec![Constraint::new(ScalarFn::affine(1, 3, w).unwrap()).unwrap()],
        vec![2.0],
        vec![0.0],
    )
    .unwrap()
}

fn solved(pc: &ContinuousProblem, steps: usize) -> (DiscreteProblem, SolveResult) {
    let dp = discretize(pc, steps).unwrap();
    let res = solve(&dp, &SolverConfig::default(), None).unwrap();
    assert!(res.converged, "N={steps}: {:?}", res.history.last());
    (dp, res)
}

fn instances() -> Vec<(&'static str, ContinuousProblem, usize)> {
    vec![
        ("example51", example51::problem(), 50),
        ("example51", example51::problem(), 200),
        ("polyhedral", polyhedral_tiny(), 40),
        ("polyhedral", polyhedral_tiny(), 200),
        ("tracking", tracking(), 40),
    ]
}

#[test]
fn complementarity_at_convergence() {
    for (name, pc, steps) in instances() {
        let (dp, res) = solved(&pc, steps);
        let w = dp.constraint_values(&res.trajectory).unwrap();
        for (k, row) in w.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let a = res.alphas[k][i];
                assert!(a >= 0.0, "{name} N={steps}: alpha[{k}][{i}] = {a}");
                assert!((a * v).abs() <= 1e-6, "{name} N={steps}: |alpha W| = {} at row {i}", (a * v).abs());
            }
        }
    }
}

#[test]
fn reconstructed_certificates_satisfy_the_lemma_identity() {
    for (name, pc, steps) in instances() {
        let (dp, res) = solved(&pc, steps);
        let cert = reconstruct_from_solution(&dp, &res).unwrap();
        assert!(lemma_identity_residual(&cert) <= 1e-10, "{name} N={steps}");
        assert_eq!(cert.xstar.x(steps), vec![0.0; pc.n()].as_slice(), "{name} N={steps}");
    }
}

#[test]
fn checker_accepts_solver_certificates() {
    let cfg = SolverConfig::default();
    for (name, pc, steps) in instances() {
        let (dp, res) = solved(&pc, steps);
        let cert = reconstruct_from_solution(&dp, &res).unwrap();
        // C = 1: the discrete conditions are exact up to the solver tolerances
        let tol = (10.0 * cfg.grad_tol).max(10.0 * dp.grid().delta());
        let rep = verify_discrete(&dp, &res.trajectory, &cert, tol).unwrap();
        if name == "tracking" {
            // nothing is active and f' vanishes on the optimum, so every
            // component is zero: the rows hold but nontriviality fails
            assert!(!rep.nontrivial() && !rep.passed, "{rep:#?}");
            assert_eq!(rep.failed_rows().count(), 0, "{rep:#?}");
            continue;
        }
        assert!(rep.passed, "{name} N={steps}: {rep:#?}");
        if name == "example51" {
            let red = reduce_to_w2(&pc, &cert).unwrap();
            let rep = verify_discrete(&dp, &res.trajectory, &red, tol).unwrap();
            assert!(rep.passed, "{name} N={steps} reduced: {rep:#?}");
        }
    }
}

/// `f = a(x − c)²/2`, `q = b(x − e)²/2`, box `l ≤ x ≤ u` and a slope bound
/// `|x'| ≤ 50` that no point of the box can violate on a 4-step grid.
fn random_tiny(seed: u64) -> ContinuousProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(0.5..2.0);
    let c: f64 = rng.random_range(-1.0..1.0);
    let b = rng.random_range(0.5..2.0);
    let e: f64 = rng.random_range(-1.0..1.0);
    let l = rng.random_range(-1.5..-0.5);
    let u = rng.random_range(-0.2..0.8);
    let v0 = rng.random_range(l..u);
    let f = ScalarFn::quadratic(1, 1, DMatrix::from_element(1, 1, a), vec![-a * c], 0.5 * a * c * c).unwrap();
    let q = ScalarFn::quadratic(1, 1, DMatrix::from_element(1, 1, b), vec![-b * e], 0.5 * b * e * e).unwrap();
    let w = |p0: f64, p1: f64, d: f64| {
        Constraint::new(ScalarFn::affine(1, 3, Affine::constraint(vec![p0], vec![p1], vec![0.0], d).unwrap()).unwrap())
            .unwrap()
    };
    ContinuousProblem::new(
        f,
        q,
        vec![w(1.0, 0.0, u), w(-1.0, 0.0, -l), w(0.0, 1.0, 50.0), w(0.0, -1.0, 50.0)],
        vec![v0],
        vec![0.0],
    )
    .unwrap()
}

#[test]
fn solver_matches_grid_oracle_on_seeded_instances() {
    let start = std::time::Instant::now();
    for seed in 0..5 {
        let pc = random_tiny(seed);
        let dp = discretize(&pc, 4).unwrap();
        let oracle = brute_force_oracle(&dp, &[(-3.0, 3.0); 3], 200).unwrap();
        let res = solve(&dp, &SolverConfig::default(), None).unwrap();
        assert!(res.converged, "seed {seed}");
        let gap = (res.objective - oracle.objective).abs();
        assert!(
            gap <= oracle.resolution + 1e-6,
            "seed {seed}: solver {} oracle {} resolution {}",
            res.objective,
            oracle.objective,
            oracle.resolution
        );
    }
    assert!(start.elapsed().as_secs_f64() <= 10.0);
}
