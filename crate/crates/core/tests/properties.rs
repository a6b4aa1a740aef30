//! Property tests for the transforms, the convex function kinds, the adjoint
//! recursion and the active-set rule.

use std::sync::Arc;

use bolza_core::adjoint::{lemma_identity_residual, reconstruct_adjoints};
use bolza_core::convexfn::{Affine, BlockMask, ScalarFn};
use bolza_core::problem::{compose_with_differences, discretize, Constraint, ContinuousProblem, GridTrajectory};
use bolza_core::transforms::{phi_to_w, w_to_phi, SubgradTriple};
use bolza_core::verify::active_set;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn triple(n: usize) -> impl Strategy<Value = SubgradTriple> {
    prop::collection::vec(-10.0..10.0f64, 3 * n).prop_map(|z| SubgradTriple::from_stacked(&z).unwrap())
}

/// Round-trip error relative to the largest entry handled on the way, input
/// or intermediate (`w_to_phi` scales by up to `1/δ²`).
fn scaled_err(back: &SubgradTriple, mid: &SubgradTriple, g: &SubgradTriple) -> f64 {
    let scale = g.stacked().iter().chain(&mid.stacked()).fold(1.0_f64, |m, v| m.max(v.abs()));
    back.max_abs_diff(g) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transforms_round_trip(g in (1usize..4).prop_flat_map(triple), delta in 0.01..1.0f64) {
        let mid = w_to_phi(&g, delta).unwrap();
        let back = phi_to_w(&mid, delta).unwrap();
        prop_assert!(scaled_err(&back, &mid, &g) <= 1e-12);
        let mid = phi_to_w(&g, delta).unwrap();
        let back = w_to_phi(&mid, delta).unwrap();
        prop_assert!(scaled_err(&back, &mid, &g) <= 1e-12);
    }
}

/// `Φ(a, b, c) = W(a, (b − a)/δ, (c − 2b + a)/δ²)` for affine `W`, with `Φ`
/// built from the transformed gradient.
fn semantic_gap(gw: &[f64], c0: f64, p: &[f64], delta: f64) -> f64 {
    let (a, b, c) = (p[0], p[1], p[2]);
    let w = gw[0] * a + gw[1] * (b - a) / delta + gw[2] * (c - 2.0 * b + a) / (delta * delta) + c0;
    let gp = w_to_phi(&SubgradTriple::new(vec![gw[0]], vec![gw[1]], vec![gw[2]]).unwrap(), delta).unwrap();
    let phi = gp.xs[0] * a + gp.v1s[0] * b + gp.v2s[0] * c + c0;
    (phi - w).abs() / w.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn semantic_equivalence_affine(
        gw in prop::collection::vec(-3.0..3.0f64, 3),
        c0 in -1.0..1.0f64,
        p in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        prop_assert!(semantic_gap(&gw, c0, &p, 1.0) <= 1e-12);
        prop_assert!(semantic_gap(&gw, c0, &p, 0.1) <= 1e-12);

        // the grid composition and the discrete row function agree too
        let a = Affine::new(gw.clone(), c0);
        let w = ScalarFn::affine(1, 3, a).unwrap();
        let composed = compose_with_differences(&w, 10).unwrap();
        let pc = ContinuousProblem::new(
            ScalarFn::zero(1, 1),
            ScalarFn::zero(1, 1),
            vec![Constraint::new(w).unwrap()],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let dp = discretize(&pc, 10).unwrap();
        let phi = dp.phi(0, &p[..1], &p[1..2], &p[2..]).unwrap();
        let direct = composed.eval(&p).unwrap();
        prop_assert!((phi - direct).abs() <= 1e-12 * phi.abs().max(1.0));
    }
}

fn check_pairs(f: &ScalarFn, z0: &[f64], z: &[f64], mix: f64) -> Result<(), TestCaseError> {
    let set = f.subdiff(z0, 1e-8).unwrap();
    let f0 = f.eval(z0).unwrap();
    let fz = f.eval(z).unwrap();
    let tol = 1e-10 * (1.0 + f0.abs().max(fz.abs()));
    let mut gens: Vec<Vec<f64>> = set.generators.iter().map(|g| g.iter().copied().collect()).collect();
    if gens.len() >= 2 {
        // a point inside the hull of two generators
        let g: Vec<f64> = gens[0].iter().zip(&gens[1]).map(|(a, b)| mix * a + (1.0 - mix) * b).collect();
        gens.push(g);
    }
    for g in &gens {
        let lin: f64 = g.iter().zip(z.iter().zip(z0)).map(|(gi, (a, b))| gi * (a - b)).sum();
        prop_assert!(fz - f0 >= lin - tol, "f(z) - f(z0) = {} < {}", fz - f0, lin);
    }
    Ok(())
}

fn pieces_at_kink() -> ScalarFn {
    // |a| + max(b, -2b + 1) + c/2 as a max of six affine pieces
    let mut pieces = Vec::new();
    for s in [1.0, -1.0] {
        pieces.push(Affine::new(vec![s, 1.0, 0.5], 0.0));
        pieces.push(Affine::new(vec![s, -2.0, 0.5], 1.0));
        pieces.push(Affine::new(vec![s, 0.0, 0.5], -3.0));
    }
    ScalarFn::max_affine(1, 3, pieces).unwrap()
}

fn softplus_sum() -> ScalarFn {
    let value = Arc::new(|z: &[f64], _t: f64| z.iter().map(|v| (1.0 + v.exp()).ln()).sum::<f64>());
    let gradient = Arc::new(|z: &[f64], _t: f64, out: &mut [f64]| {
        for (o, v) in out.iter_mut().zip(z) {
            *o = 1.0 / (1.0 + (-v).exp());
        }
    });
    ScalarFn::black_box(1, 3, value, Some(gradient), true, BlockMask::ALL).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn subgradient_inequality_affine(
        g in prop::collection::vec(-5.0..5.0f64, 3),
        z0 in prop::collection::vec(-5.0..5.0f64, 3),
        z in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        let f = ScalarFn::affine(1, 3, Affine::new(g, 0.7)).unwrap();
        check_pairs(&f, &z0, &z, 0.5)?;
    }

    #[test]
    fn subgradient_inequality_quadratic(
        l in prop::collection::vec(-2.0..2.0f64, 9),
        z0 in prop::collection::vec(-5.0..5.0f64, 3),
        z in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        let m = DMatrix::from_row_slice(3, 3, &l);
        let h = &m * m.transpose();
        let f = ScalarFn::quadratic(1, 3, h, vec![1.0, -2.0, 0.5], 0.3).unwrap();
        check_pairs(&f, &z0, &z, 0.5)?;
    }

    #[test]
    fn subgradient_inequality_max_affine(
        z0 in prop::collection::vec(-5.0..5.0f64, 3),
        z in prop::collection::vec(-5.0..5.0f64, 3),
        kink in any::<bool>(),
        mix in 0.0..1.0f64,
    ) {
        let f = pieces_at_kink();
        // on half the cases start from a point where several pieces are active
        let z0 = if kink { vec![0.0, 1.0 / 3.0, z0[2]] } else { z0 };
        check_pairs(&f, &z0, &z, mix)?;
    }

    #[test]
    fn subgradient_inequality_black_box(
        z0 in prop::collection::vec(-5.0..5.0f64, 3),
        z in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        check_pairs(&softplus_sum(), &z0, &z, 0.5)?;
    }
}

fn affine_problem(p: [f64; 3], d: f64) -> ContinuousProblem {
    let w = ScalarFn::affine(1, 3, Affine::constraint(vec![p[0]], vec![p[1]], vec![p[2]], d).unwrap()).unwrap();
    ContinuousProblem::new(
        ScalarFn::zero(1, 1),
        ScalarFn::affine(1, 1, Affine::state(vec![1.0], 0.0)).unwrap(),
        vec![Constraint::new(w).unwrap()],
        vec![1.0],
        vec![0.5],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lemma_identity_and_terminal_zero_for_any_multipliers(
        p in prop::array::uniform3(-3.0..3.0f64),
        steps in 4usize..40,
        alpha in prop::collection::vec(0.0..2.0f64, 39),
        mu in 0.0..1.0f64,
    ) {
        let dp = discretize(&affine_problem(p, 0.0), steps).unwrap();
        let arc = GridTrajectory::from_scalar_fn(dp.grid(), |t| 1.0 + 0.5 * t);
        let rows = dp.num_rows();
        let cert = reconstruct_adjoints(&dp, &arc, &[alpha[..rows].to_vec()], mu).unwrap();
        prop_assert!(lemma_identity_residual(&cert) <= 1e-10);
        prop_assert_eq!(cert.xstar.x(steps)[0], 0.0);
    }

    #[test]
    fn active_set_is_exactly_the_near_zero_rows(
        values in prop::collection::vec(-1e-6..1e-6f64, 1..30),
        eps in 1e-9..1e-6f64,
    ) {
        let act = active_set(&values, eps);
        for (i, v) in values.iter().enumerate() {
            prop_assert_eq!(act.contains(&i), v.abs() <= eps);
        }
    }
}

mod scaling {
    use std::sync::OnceLock;

    use bolza_core::adjoint::{reconstruct_from_solution, reduce_to_w2, Certificate};
    use bolza_core::example51;
    use bolza_core::problem::{discretize, GridTrajectory};
    use bolza_core::solver::{solve, SolverConfig};
    use bolza_core::verify::verify_special_w2;
    use proptest::prelude::*;

    fn solved() -> &'static (GridTrajectory, Certificate) {
        static CELL: OnceLock<(GridTrajectory, Certificate)> = OnceLock::new();
        CELL.get_or_init(|| {
            let pc = example51::problem();
            let dp = discretize(&pc, 50).unwrap();
            let res = solve(&dp, &SolverConfig::default(), None).unwrap();
            let cert = reduce_to_w2(&pc, &reconstruct_from_solution(&dp, &res).unwrap()).unwrap();
            (res.trajectory, cert)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn homogeneous_rows_scale_linearly(c in 0.25..4.0f64) {
            let pc = example51::problem();
            let (traj, cert) = solved();
            let tol = 0.2;
            let base = verify_special_w2(&pc, traj, cert, tol).unwrap();
            let scaled = verify_special_w2(&pc, traj, &cert.scaled(c), tol * c.max(1.0)).unwrap();
            for (a, b) in base.rows.iter().zip(&scaled.rows) {
                prop_assert_eq!(&a.label, &b.label);
                if a.homogeneous {
                    let expect = c * a.residual;
                    prop_assert!((b.residual - expect).abs() <= 1e-9 * expect.max(1e-6), "{}: {} vs {}", a.label, b.residual, expect);
                    prop_assert_eq!(a.passed, b.passed, "{}", a.label);
                }
            }
        }
    }
}
