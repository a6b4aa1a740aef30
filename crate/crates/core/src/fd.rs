//! Finite-difference derivatives of grid functions and endpoint extrapolation.

use crate::error::{Error, Result};
use crate::problem::GridTrajectory;

/// First derivative: central differences inside, second-order one-sided
/// stencils at both ends.
pub fn derivative(values: &[f64], h: f64) -> Result<Vec<f64>> {
    let len = values.len();
    if len < 3 {
        return Err(Error::Config("first derivative needs at least 3 samples".into()));
    }
    let mut out = vec![0.0; len];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    for i in 1..len - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    let l = len - 1;
    out[l] = (3.0 * values[l] - 4.0 * values[l - 1] + values[l - 2]) / (2.0 * h);
    Ok(out)
}

/// Second derivative: three-point stencil inside, second-order one-sided
/// four-point stencils at both ends.
pub fn second_derivative(values: &[f64], h: f64) -> Result<Vec<f64>> {
    let len = values.len();
    if len < 4 {
        return Err(Error::Config("second derivative needs at least 4 samples".into()));
    }
    let h2 = h * h;
    let mut out = vec![0.0; len];
    out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2;
    for i in 1..len - 1 {
        out[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h2;
    }
    let l = len - 1;
    out[l] = (2.0 * values[l] - 5.0 * values[l - 1] + 4.0 * values[l - 2] - values[l - 3]) / h2;
    Ok(out)
}

fn map_components(
    traj: &GridTrajectory,
    op: impl Fn(&[f64], f64) -> Result<Vec<f64>>,
) -> Result<GridTrajectory> {
    let n = traj.n();
    let grid = traj.grid();
    let mut values = vec![0.0; traj.values().len()];
    for j in 0..n {
        let d = op(&traj.component(j), grid.delta())?;
        for (i, v) in d.into_iter().enumerate() {
            values[i * n + j] = v;
        }
    }
    GridTrajectory::new(grid, n, values)
}

pub fn derivative_traj(traj: &GridTrajectory) -> Result<GridTrajectory> {
    map_components(traj, derivative)
}

pub fn second_derivative_traj(traj: &GridTrajectory) -> Result<GridTrajectory> {
    map_components(traj, second_derivative)
}

/// Value one step beyond `nearest`, from the polynomial through the given
/// equally spaced samples (nearest first). Uses up to three samples.
pub fn extrapolate(samples: &[f64]) -> f64 {
    match samples {
        [] => 0.0,
        [a] => *a,
        [a, b] => 2.0 * a - b,
        [a, b, c, ..] => 3.0 * a - 3.0 * b + c,
    }
}
