//! The worked example: minimize `x(1)` subject to `x − 3x' ≤ 0`, `x(0) = 1`.
//! The optimum is `x̃(t) = e^{t/3}` with value `e^{1/3}`.
//!
//! The initial slope `x'(0) = 1/3` is the optimum's own derivative.

use crate::convexfn::{Affine, ScalarFn};
use crate::problem::{Constraint, ContinuousProblem, Grid, GridTrajectory};
use crate::verify::Derivatives;
use crate::Result;

pub const V0: f64 = 1.0;
pub const V1: f64 = 1.0 / 3.0;

pub fn problem() -> ContinuousProblem {
    let w = Affine::constraint(vec![1.0], vec![-3.0], vec![0.0], 0.0).expect("valid blocks");
    ContinuousProblem::new(
        ScalarFn::zero(1, 1),
        ScalarFn::affine(1, 1, Affine::state(vec![1.0], 0.0)).expect("valid q"),
        vec![Constraint::new(ScalarFn::affine(1, 3, w).expect("valid W")).expect("valid constraint")],
        vec![V0],
        vec![V1],
    )
    .expect("valid problem")
}

pub fn optimal_value() -> f64 {
    (1.0_f64 / 3.0).exp()
}

pub fn optimal_x(t: f64) -> f64 {
    (t / 3.0).exp()
}

pub fn adjoint_u(t: f64) -> f64 {
    -((1.0 - t) / 3.0).exp()
}

pub fn multiplier(t: f64) -> f64 {
    ((1.0 - t) / 3.0).exp() / 3.0
}

pub fn optimal_trajectory(steps: usize) -> Result<GridTrajectory> {
    Ok(GridTrajectory::from_scalar_fn(Grid::new(steps)?, optimal_x))
}

/// `x̃' = e^{t/3}/3`, `x̃'' = e^{t/3}/9`, `u*' = α`, `α' = −e^{(1−t)/3}/9`,
/// `α'' = e^{(1−t)/3}/27`; `x*` vanishes identically.
pub fn analytic_derivatives(steps: usize) -> Result<Derivatives> {
    let grid = Grid::new(steps)?;
    let g = |f: fn(f64) -> f64| GridTrajectory::from_scalar_fn(grid, f);
    let zero = GridTrajectory::zeros(grid, 1);
    let times = grid.times();
    Ok(Derivatives {
        traj_d1: Some(g(|t| (t / 3.0).exp() / 3.0)),
        traj_d2: Some(g(|t| (t / 3.0).exp() / 9.0)),
        xstar_d1: Some(zero.clone()),
        xstar_d2: Some(zero),
        ustar_d1: Some(g(multiplier)),
        psistar_d1: Some(g(multiplier)),
        alpha_d1: Some(vec![times.iter().map(|t| -((1.0 - t) / 3.0).exp() / 9.0).collect()]),
        alpha_d2: Some(vec![times.iter().map(|t| ((1.0 - t) / 3.0).exp() / 27.0).collect()]),
    })
}

pub use crate::adjoint::analytic_certificate_example51 as analytic_certificate;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::discretize;

    #[test]
    fn arc_is_feasible_and_active() {
        let pc = problem();
        let grid = Grid::new(50).unwrap();
        let arc = optimal_trajectory(50).unwrap();
        let d = analytic_derivatives(50).unwrap();
        let d1 = d.traj_d1.unwrap();
        for i in 0..=50 {
            let z = [arc.x(i)[0], d1.x(i)[0], 0.0];
            assert!(pc.constraints()[0].w.eval(&z).unwrap().abs() < 1e-15);
        }
        assert_eq!(grid.steps(), 50);
        let dp = discretize(&pc, 50).unwrap();
        assert!((dp.objective_discrete(&arc).unwrap() - optimal_value() * (-1.0 / 150.0_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn certificate_alias() {
        let c = analytic_certificate(10).unwrap();
        assert_eq!(c, crate::adjoint::analytic_certificate_example51(10).unwrap());
    }
}
