//! Continuous and discrete problem models, the uniform grid and the
//! difference operators.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::convexfn::{Affine, BlockMask, FnKind, ScalarFn};
use crate::error::{check_dim, Error, Result};

/// Default absolute feasibility tolerance.
pub const DEFAULT_FEAS_TOL: f64 = 1e-8;

/// Uniform grid on `[0, 1]` with `N` steps. Only `N` is stored; `δ = 1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    steps: usize,
}

impl Grid {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 4 {
            return Err(Error::Config(format!(
                "grid needs at least 4 steps, got {steps}"
            )));
        }
        Ok(Grid { steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// `1/δ`, exact.
    pub fn inv_delta(&self) -> f64 {
        self.steps as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.t(i)).collect()
    }
}

/// Forward difference `(b − a)/δ`.
#[inline]
pub(crate) fn forward_diff(a: f64, b: f64, inv_delta: f64) -> f64 {
    (b - a) * inv_delta
}

/// Second difference `(c − 2b + a)/δ²`.
#[inline]
pub(crate) fn second_diff(a: f64, b: f64, c: f64, inv_delta: f64) -> f64 {
    (c - 2.0 * b + a) * (inv_delta * inv_delta)
}

/// Stack `(a, Δ, Δ²)` for three consecutive node values into `z`.
pub(crate) fn difference_point(a: &[f64], b: &[f64], c: &[f64], inv_delta: f64, z: &mut [f64]) {
    let n = a.len();
    for j in 0..n {
        z[j] = a[j];
        z[n + j] = forward_diff(a[j], b[j], inv_delta);
        z[2 * n + j] = second_diff(a[j], b[j], c[j], inv_delta);
    }
}

/// State values on every grid node, one n-vector per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTrajectory {
    grid: Grid,
    n: usize,
    values: Vec<f64>,
}

impl GridTrajectory {
    /// `values` holds node 0 first, `n` entries per node.
    pub fn new(grid: Grid, n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        check_dim("trajectory values", grid.num_nodes() * n, values.len())?;
        Ok(GridTrajectory { grid, n, values })
    }

    pub fn from_fn(grid: Grid, n: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.num_nodes() * n);
        for i in 0..grid.num_nodes() {
            let v = f(grid.t(i));
            check_dim("trajectory node value", n, v.len())?;
            values.extend(v);
        }
        GridTrajectory::new(grid, n, values)
    }

    pub fn from_scalar_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        GridTrajectory {
            grid,
            n: 1,
            values: grid.times().into_iter().map(f).collect(),
        }
    }

    pub fn zeros(grid: Grid, n: usize) -> Self {
        GridTrajectory {
            grid,
            n,
            values: vec![0.0; grid.num_nodes() * n],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at node `i` (time `iδ`).
    pub fn x(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn x_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n..(i + 1) * self.n]
    }

    /// Component `j` at every node.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.grid.num_nodes()).map(|i| self.values[i * self.n + j]).collect()
    }

    fn check_node(&self, i: usize, last: usize, context: &'static str) -> Result<()> {
        if i > last {
            Err(Error::Index { context, index: i })
        } else {
            Ok(())
        }
    }

    /// `Δx(t) = (x(t+δ) − x(t))/δ` at node `i ≤ N−1`.
    pub fn delta(&self, i: usize) -> Result<Vec<f64>> {
        self.check_node(i, self.grid.steps() - 1, "forward difference needs node t+δ")?;
        let inv = self.grid.inv_delta();
        let (a, b) = (self.x(i), self.x(i + 1));
        Ok(a.iter().zip(b).map(|(&a, &b)| forward_diff(a, b, inv)).collect())
    }

    /// `Δ²x(t) = (x(t+2δ) − 2x(t+δ) + x(t))/δ²` at node `i ≤ N−2`.
    pub fn delta2(&self, i: usize) -> Result<Vec<f64>> {
        self.check_node(i, self.grid.steps() - 2, "second difference needs node t+2δ")?;
        let inv = self.grid.inv_delta();
        let (a, b, c) = (self.x(i), self.x(i + 1), self.x(i + 2));
        Ok((0..self.n).map(|j| second_diff(a[j], b[j], c[j], inv)).collect())
    }

    /// Max-norm distance to another trajectory on the same grid.
    pub fn max_abs_diff(&self, other: &GridTrajectory) -> Result<f64> {
        check_dim("trajectory comparison", self.values.len(), other.values.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// One inequality `W(x, v1, v2) ≤ 0` with the blocks it is declared to read.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub w: ScalarFn,
    pub depends_on: BlockMask,
}

impl Constraint {
    /// Dependence taken from the function's nonzero blocks.
    pub fn new(w: ScalarFn) -> Result<Self> {
        let depends_on = w.depends_on();
        Constraint::with_declared(w, depends_on)
    }

    /// A declared dependence must cover every block the function actually reads.
    pub fn with_declared(w: ScalarFn, depends_on: BlockMask) -> Result<Self> {
        if w.blocks() != 3 {
            return Err(Error::Config(format!(
                "constraints take the three blocks (x, v1, v2), got {}",
                w.blocks()
            )));
        }
        let structural = w.depends_on();
        if !structural.is_subset_of(&depends_on) {
            return Err(Error::Config(format!(
                "constraint reads blocks {structural:?} but declares only {depends_on:?}"
            )));
        }
        Ok(Constraint { w, depends_on })
    }
}

/// Minimize `∫₀¹ f(x, t) dt + q(x(1))` subject to `W_k(x, x', x'') ≤ 0`,
/// `x(0) = v0`, `x'(0) = v1`.
#[derive(Debug, Clone)]
pub struct ContinuousProblem {
    n: usize,
    f: ScalarFn,
    q: ScalarFn,
    constraints: Vec<Constraint>,
    v0: Vec<f64>,
    v1: Vec<f64>,
}

impl ContinuousProblem {
    pub fn new(
        f: ScalarFn,
        q: ScalarFn,
        constraints: Vec<Constraint>,
        v0: Vec<f64>,
        v1: Vec<f64>,
    ) -> Result<Self> {
        let n = v0.len();
        if n == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        check_dim("initial derivative v1", n, v1.len())?;
        if constraints.is_empty() {
            return Err(Error::Config("at least one constraint is required".into()));
        }
        for (name, g) in [("running cost", &f), ("terminal cost", &q)] {
            if g.n() != n || g.blocks() != 1 {
                return Err(Error::Config(format!(
                    "{name} must be a function of x in R^{n}"
                )));
            }
        }
        for c in &constraints {
            check_dim("constraint state dimension", n, c.w.n())?;
        }
        Ok(ContinuousProblem {
            n,
            f,
            q,
            constraints,
            v0,
            v1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> &ScalarFn {
        &self.f
    }

    pub fn q(&self) -> &ScalarFn {
        &self.q
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn v0(&self) -> &[f64] {
        &self.v0
    }

    pub fn v1(&self) -> &[f64] {
        &self.v1
    }

    /// Union of the declared constraint dependences.
    pub fn constraint_blocks(&self) -> BlockMask {
        self.constraints
            .iter()
            .fold(BlockMask::NONE, |acc, c| acc.union(c.depends_on))
    }

    /// True when `f` is the zero function (structurally).
    pub fn running_cost_is_zero(&self) -> bool {
        match self.f.kind() {
            FnKind::Affine(a) => a.constant() == 0.0 && a.gradient().iter().all(|&c| c == 0.0),
            _ => false,
        }
    }
}

/// The grid problem: minimize `Σ_{t=2δ}^{1−2δ} δ f(x(t), t) + q(x(1−δ))`
/// subject to `Φ_k(x(t), x(t+δ), x(t+2δ)) ≤ 0` for `t = 0, …, 1−2δ`, with
/// `x(0) = v0` and `x(δ) = v0 + δ v1` fixed.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    source: ContinuousProblem,
    grid: Grid,
}

pub fn discretize(pc: &ContinuousProblem, steps: usize) -> Result<DiscreteProblem> {
    Ok(DiscreteProblem {
        source: pc.clone(),
        grid: Grid::new(steps)?,
    })
}

impl DiscreteProblem {
    pub fn source(&self) -> &ContinuousProblem {
        &self.source
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.source.n
    }

    pub fn m(&self) -> usize {
        self.source.m()
    }

    /// Constraint rows per k: nodes `0..=N−2`.
    pub fn num_rows(&self) -> usize {
        self.grid.steps() - 1
    }

    /// The two fixed leading nodes `x(0)`, `x(δ)`.
    pub fn fixed_nodes(&self) -> [Vec<f64>; 2] {
        let delta = self.grid.delta();
        let x0 = self.source.v0.clone();
        let x1 = self
            .source
            .v0
            .iter()
            .zip(&self.source.v1)
            .map(|(a, b)| a + delta * b)
            .collect();
        [x0, x1]
    }

    fn check_traj(&self, traj: &GridTrajectory) -> Result<()> {
        check_dim("trajectory grid steps", self.grid.steps(), traj.grid.steps())?;
        check_dim("trajectory state dimension", self.n(), traj.n())
    }

    /// `Φ_k(a, b, c) = W_k(a, (b − a)/δ, (c − 2b + a)/δ²)`.
    pub fn phi(&self, k: usize, a: &[f64], b: &[f64], c: &[f64]) -> Result<f64> {
        let n = self.n();
        let w = &self
            .source
            .constraints
            .get(k)
            .ok_or(Error::Index {
                context: "constraint index",
                index: k,
            })?
            .w;
        check_dim("phi argument", n, a.len())?;
        check_dim("phi argument", n, b.len())?;
        check_dim("phi argument", n, c.len())?;
        let mut z = vec![0.0; 3 * n];
        difference_point(a, b, c, self.grid.inv_delta(), &mut z);
        Ok(w.value(&z, 0.0))
    }

    /// Stacked `(x(t), Δx(t), Δ²x(t))` at node `i ≤ N−2`.
    pub fn w_point(&self, traj: &GridTrajectory, i: usize) -> Result<Vec<f64>> {
        self.check_traj(traj)?;
        if i + 2 > self.grid.steps() {
            return Err(Error::Index {
                context: "constraint row",
                index: i,
            });
        }
        let mut z = vec![0.0; 3 * self.n()];
        difference_point(
            traj.x(i),
            traj.x(i + 1),
            traj.x(i + 2),
            self.grid.inv_delta(),
            &mut z,
        );
        Ok(z)
    }

    /// `W_k(x(t), Δx(t), Δ²x(t))` for every row `i = 0..=N−2` (outer index k).
    pub fn constraint_values(&self, traj: &GridTrajectory) -> Result<Vec<Vec<f64>>> {
        self.check_traj(traj)?;
        let rows = self.num_rows();
        let mut out = vec![vec![0.0; rows]; self.m()];
        for i in 0..rows {
            let z = self.w_point(traj, i)?;
            for (k, c) in self.source.constraints.iter().enumerate() {
                out[k][i] = c.w.value(&z, 0.0);
            }
        }
        Ok(out)
    }

    pub fn objective_discrete(&self, traj: &GridTrajectory) -> Result<f64> {
        self.check_traj(traj)?;
        let steps = self.grid.steps();
        let delta = self.grid.delta();
        let mut sum = 0.0;
        for i in 2..=steps - 2 {
            sum += delta * self.source.f.value(traj.x(i), self.grid.t(i));
        }
        Ok(sum + self.source.q.value(traj.x(steps - 1), 1.0 - delta))
    }

    pub fn feasibility_residuals(&self, traj: &GridTrajectory) -> Result<FeasibilityTable> {
        let values = self.constraint_values(traj)?;
        let [x0, x1] = self.fixed_nodes();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
        Ok(FeasibilityTable {
            constraints: values
                .into_iter()
                .map(|row| row.into_iter().map(|v| v.max(0.0)).collect())
                .collect(),
            initial_state: dist(traj.x(0), &x0),
            initial_derivative: dist(traj.x(1), &x1),
        })
    }
}

/// Positive parts of the constraint values and the initial-condition errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityTable {
    /// `constraints[k][i] = max(0, Φ_k)` at row `i`.
    pub constraints: Vec<Vec<f64>>,
    /// `|x(0) − v0|∞`.
    pub initial_state: f64,
    /// `|x(δ) − v0 − δ v1|∞`.
    pub initial_derivative: f64,
}

impl FeasibilityTable {
    pub fn max_constraint(&self) -> f64 {
        self.constraints
            .iter()
            .flatten()
            .fold(0.0, |m: f64, &v| m.max(v))
    }

    pub fn max(&self) -> f64 {
        self.max_constraint()
            .max(self.initial_state)
            .max(self.initial_derivative)
    }
}

/// Composite trapezoid approximation of `∫ f dt` (second order in δ) plus
/// `q(x(1))`.
pub fn objective_continuous(pc: &ContinuousProblem, traj: &GridTrajectory) -> Result<f64> {
    check_dim("trajectory state dimension", pc.n(), traj.n())?;
    let grid = traj.grid();
    let steps = grid.steps();
    let mut sum = 0.0;
    for i in 0..=steps {
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        sum += w * pc.f.value(traj.x(i), grid.t(i));
    }
    Ok(sum * grid.delta() + pc.q.value(traj.x(steps), 1.0))
}

/// The composed function `Φ(a, b, c) = W(a, (b − a)/δ, (c − 2b + a)/δ²)` as a
/// three-block [`ScalarFn`]. Affine and max-of-affine inputs stay in their
/// class (coefficients by the chain rule); other kinds become black boxes.
pub fn compose_with_differences(w: &ScalarFn, steps: usize) -> Result<ScalarFn> {
    let grid = Grid::new(steps)?;
    if w.blocks() != 3 {
        return Err(Error::Config("composition needs a three-block function".into()));
    }
    let n = w.n();
    let inv = grid.inv_delta();
    let compose_affine = |a: &Affine| {
        let g = a.gradient();
        let mut out = vec![0.0; 3 * n];
        for j in 0..n {
            let (g0, g1, g2) = (g[j], g[n + j], g[2 * n + j]);
            out[j] = g0 - g1 * inv + g2 * inv * inv;
            out[n + j] = g1 * inv - 2.0 * g2 * inv * inv;
            out[2 * n + j] = g2 * inv * inv;
        }
        Affine::new(out, a.constant())
    };
    match w.kind() {
        FnKind::Affine(a) => ScalarFn::affine(n, 3, compose_affine(a)),
        FnKind::MaxOfAffine(pieces) => {
            ScalarFn::max_affine(n, 3, pieces.iter().map(compose_affine).collect())
        }
        FnKind::ConvexQuadratic(_) | FnKind::SmoothBlackBox(_) => {
            let inner = Arc::new(w.clone());
            let inner_g = Arc::clone(&inner);
            let value = Arc::new(move |z: &[f64], t: f64| {
                let mut p = vec![0.0; 3 * n];
                difference_point(&z[..n], &z[n..2 * n], &z[2 * n..], inv, &mut p);
                inner.value(&p, t)
            });
            let gradient: Option<crate::convexfn::GradientFn> = if w.has_gradient() {
                Some(Arc::new(move |z: &[f64], t: f64, out: &mut [f64]| {
                    let mut p = vec![0.0; 3 * n];
                    difference_point(&z[..n], &z[n..2 * n], &z[2 * n..], inv, &mut p);
                    let mut g = vec![0.0; 3 * n];
                    if inner_g.gradient_into(&p, t, &mut g).is_err() {
                        out.iter_mut().for_each(|o| *o = f64::NAN);
                        return;
                    }
                    for j in 0..n {
                        let (g0, g1, g2) = (g[j], g[n + j], g[2 * n + j]);
                        out[j] = g0 - g1 * inv + g2 * inv * inv;
                        out[n + j] = g1 * inv - 2.0 * g2 * inv * inv;
                        out[2 * n + j] = g2 * inv * inv;
                    }
                }))
            } else {
                None
            };
            ScalarFn::black_box(n, 3, value, gradient, w.is_convex(), BlockMask::ALL)
        }
    }
}

/// Identity matrix helper for quadratic costs.
pub fn half_squared_norm(n: usize) -> ScalarFn {
    ScalarFn::quadratic(n, 1, DMatrix::identity(n, n), vec![0.0; n], 0.0)
        .expect("identity is positive semidefinite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ex51() -> ContinuousProblem {
        let w = ScalarFn::affine(
            1,
            3,
            Affine::constraint(vec![1.0], vec![-3.0], vec![0.0], 0.0).unwrap(),
        )
        .unwrap();
        ContinuousProblem::new(
            ScalarFn::zero(1, 1),
            ScalarFn::affine(1, 1, Affine::state(vec![1.0], 0.0)).unwrap(),
            vec![Constraint::new(w).unwrap()],
            vec![1.0],
            vec![1.0 / 3.0],
        )
        .unwrap()
    }

    #[test]
    fn grid_rejects_small_n() {
        assert!(matches!(Grid::new(3), Err(Error::Config(_))));
        let g = Grid::new(4).unwrap();
        assert_eq!(g.num_nodes(), 5);
        assert_eq!(g.delta(), 0.25);
    }

    #[test]
    fn difference_examples() {
        let g = Grid::new(4).unwrap();
        let c = GridTrajectory::from_scalar_fn(g, |_| 2.5);
        assert_eq!(c.delta(1).unwrap(), vec![0.0]);
        assert_eq!(c.delta2(2).unwrap(), vec![0.0]);
        let lin = GridTrajectory::from_scalar_fn(g, |t| t);
        assert_eq!(lin.delta(0).unwrap(), vec![1.0]);
        let affine = GridTrajectory::from_scalar_fn(g, |t| 3.0 - 2.0 * t);
        assert_eq!(affine.delta2(1).unwrap(), vec![0.0]);
        let sq = GridTrajectory::from_scalar_fn(g, |t| t * t);
        assert_eq!(sq.delta2(0).unwrap(), vec![2.0]);
        assert!(matches!(sq.delta(4), Err(Error::Index { .. })));
        assert!(matches!(sq.delta2(3), Err(Error::Index { .. })));

        let g = Grid::new(100).unwrap();
        let e = GridTrajectory::from_scalar_fn(g, |t| (t / 3.0).exp());
        let d = e.delta(0).unwrap()[0];
        assert!(d >= 1.0 / 3.0 && d <= (1.0 / 3.0) * (g.delta() / 3.0).exp());
    }

    #[test]
    fn discretize_counts_rows_and_fixes_nodes() {
        let dp = discretize(&ex51(), 4).unwrap();
        assert_eq!(dp.num_rows(), 3);
        assert_eq!(dp.m(), 1);
        let [x0, x1] = dp.fixed_nodes();
        assert_eq!(x0, vec![1.0]);
        assert_eq!(x1, vec![1.0 + 0.25 * (1.0 / 3.0)]);
        assert!(matches!(discretize(&ex51(), 3), Err(Error::Config(_))));
    }

    #[test]
    fn objective_examples() {
        let pc = ex51();
        let dp = discretize(&pc, 100).unwrap();
        let arc = GridTrajectory::from_scalar_fn(dp.grid(), |t| (t / 3.0).exp());
        let delta = dp.grid().delta();
        assert_relative_eq!(
            dp.objective_discrete(&arc).unwrap(),
            ((1.0 - delta) / 3.0).exp(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            objective_continuous(&pc, &arc).unwrap(),
            (1.0_f64 / 3.0).exp(),
            epsilon = 1e-14
        );

        let ones = ContinuousProblem::new(
            ScalarFn::constant(1, 1, 1.0),
            ScalarFn::zero(1, 1),
            pc.constraints().to_vec(),
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let dp = discretize(&ones, 10).unwrap();
        let any = GridTrajectory::from_scalar_fn(dp.grid(), |t| t.sin());
        assert_relative_eq!(dp.objective_discrete(&any).unwrap(), 0.7, epsilon = 1e-14);
        assert_relative_eq!(objective_continuous(&ones, &any).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn feasibility_examples() {
        let dp = discretize(&ex51(), 100).unwrap();
        let arc = GridTrajectory::from_scalar_fn(dp.grid(), |t| (t / 3.0).exp());
        let table = dp.feasibility_residuals(&arc).unwrap();
        assert!(table.max_constraint() <= 10.0 * dp.grid().delta());
        assert!(table.initial_state == 0.0);

        let two = GridTrajectory::from_scalar_fn(dp.grid(), |_| 2.0);
        let table = dp.feasibility_residuals(&two).unwrap();
        assert!(table.constraints[0].iter().all(|&r| r == 2.0));

        let strict = GridTrajectory::from_scalar_fn(dp.grid(), f64::exp);
        let table = dp.feasibility_residuals(&strict).unwrap();
        assert_eq!(table.max_constraint(), 0.0);
    }

    #[test]
    fn declared_dependence_must_cover_coefficients() {
        let w = ScalarFn::affine(
            1,
            3,
            Affine::constraint(vec![1.0], vec![-3.0], vec![0.0], 0.0).unwrap(),
        )
        .unwrap();
        let narrow = BlockMask::from_flags(&[true, false, false]);
        assert!(Constraint::with_declared(w.clone(), narrow).is_err());
        assert!(Constraint::with_declared(w, BlockMask::ALL).is_ok());
    }
}
