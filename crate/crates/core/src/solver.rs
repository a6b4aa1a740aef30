//! Augmented-Lagrangian solution of the discrete problem and an exhaustive
//! grid-search oracle for tiny scalar instances.
//!
//! Free variables are the nodes `x(2δ), …, x(1)`. Internally they are
//! parametrized by their p-th differences, `p` the highest derivative order
//! any constraint reads; the change of variables is linear and invertible, so
//! the minimizer and multipliers are unchanged, but the constraint Jacobian
//! loses its `1/δᵖ` ill-conditioning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convexfn::BlockMask;
use crate::error::{check_dim, Error, Result};
use crate::lbfgs::{self, LbfgsConfig, Status};
use crate::problem::{difference_point, DiscreteProblem, GridTrajectory, DEFAULT_FEAS_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Cap on the penalty parameter.
    pub penalty_max: f64,
    pub grad_tol: f64,
    pub feas_tol: f64,
    /// Backtracking shrink factor in (0, 1).
    pub armijo_shrink: f64,
    /// Sufficient-decrease constant in (0, 1).
    pub armijo_c1: f64,
    /// L-BFGS memory; 0 gives gradient descent.
    pub lbfgs_memory: usize,
    pub seed: u64,
    /// Amplitude of seeded uniform noise added to the default initial guess.
    pub init_jitter: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer: 30,
            max_inner: 5000,
            penalty_init: 1.0,
            penalty_growth: 10.0,
            penalty_max: 1e8,
            grad_tol: 1e-8,
            feas_tol: DEFAULT_FEAS_TOL,
            armijo_shrink: 0.5,
            armijo_c1: 1e-4,
            lbfgs_memory: 20,
            seed: 0,
            init_jitter: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.penalty_growth > 1.0) {
            return bad("penalty_growth must exceed 1");
        }
        if !(self.penalty_init > 0.0) || !(self.penalty_max >= self.penalty_init) {
            return bad("penalty_init must be positive and at most penalty_max");
        }
        if !(self.grad_tol > 0.0) || !(self.feas_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad("armijo_shrink must lie in (0, 1)");
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return bad("armijo_c1 must lie in (0, 1)");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.init_jitter >= 0.0) {
            return bad("init_jitter must be nonnegative");
        }
        Ok(())
    }
}

/// One outer iteration, recorded after its multiplier update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord {
    pub penalty: f64,
    pub feasibility: f64,
    pub stationarity: f64,
    pub objective: f64,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub trajectory: GridTrajectory,
    /// `alphas[k][i]`: multiplier estimate at row `i` (time `iδ`), in the
    /// normalization consumed by the adjoint module (raw multiplier over δ).
    pub alphas: Vec<Vec<f64>>,
    /// Raw KKT multipliers of the rows `Φ_k ≤ 0` for the objective `J_δ`.
    pub raw_multipliers: Vec<Vec<f64>>,
    /// False for rows that involve no free variable (multiplier undetermined).
    pub determined: Vec<Vec<bool>>,
    pub objective: f64,
    pub feasibility: f64,
    /// `‖∇L‖∞` over the free nodes `x(2δ), …, x(1)`.
    pub stationarity: f64,
    /// The same gradient in the solver's difference coordinates.
    pub coordinate_stationarity: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub history: Vec<OuterRecord>,
    /// Trailing nodes that no term of the problem touches, filled by linear
    /// extrapolation after the solve.
    pub extrapolated_nodes: Vec<usize>,
}

/// Which nodes and rows involve free variables.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    /// `row_free[k][i]`.
    pub row_free: Vec<Vec<bool>>,
    /// Per node: appears in the objective or in a free row.
    pub node_used: Vec<bool>,
    /// Per constraint: highest difference order it reads.
    pub order: Vec<i32>,
}

pub(crate) fn structure(dp: &DiscreteProblem) -> Structure {
    let steps = dp.grid().steps();
    let pc = dp.source();
    let mut node_used = vec![false; steps + 1];
    if pc.f().depends_on().x {
        for used in node_used.iter_mut().take(steps - 1).skip(2) {
            *used = true;
        }
    }
    if pc.q().depends_on().x {
        node_used[steps - 1] = true;
    }
    let mut row_free = Vec::with_capacity(dp.m());
    let mut order = Vec::with_capacity(dp.m());
    for c in pc.constraints() {
        let mask: BlockMask = c.depends_on;
        order.push(if mask.v2 {
            2
        } else if mask.v1 {
            1
        } else {
            0
        });
        let mut rows = vec![false; dp.num_rows()];
        for (i, free) in rows.iter_mut().enumerate() {
            let touched = [
                (i, mask.x || mask.v1 || mask.v2),
                (i + 1, mask.v1 || mask.v2),
                (i + 2, mask.v2),
            ];
            *free = touched.iter().any(|&(node, on)| on && node >= 2);
            if *free {
                for &(node, on) in &touched {
                    if on {
                        node_used[node] = true;
                    }
                }
            }
        }
        row_free.push(rows);
    }
    Structure {
        row_free,
        node_used,
        order,
    }
}

/// Default initial guess `x(t) = v0 + t·v1`, with seeded jitter on free nodes.
pub fn initial_guess(dp: &DiscreteProblem, cfg: &SolverConfig) -> GridTrajectory {
    let grid = dp.grid();
    let n = dp.n();
    let pc = dp.source();
    let mut traj = GridTrajectory::zeros(grid, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..grid.num_nodes() {
        let t = grid.t(i);
        for j in 0..n {
            let mut v = pc.v0()[j] + t * pc.v1()[j];
            if i >= 2 && cfg.init_jitter > 0.0 {
                v += cfg.init_jitter * rng.random_range(-1.0..=1.0);
            }
            traj.x_mut(i)[j] = v;
        }
    }
    let [x0, x1] = dp.fixed_nodes();
    traj.x_mut(0).copy_from_slice(&x0);
    traj.x_mut(1).copy_from_slice(&x1);
    traj
}

/// Free-variable coordinates: for difference order `p`, the unknowns are the
/// p-th differences `Δᵖx` on the rows that determine nodes `2..=N`.
#[derive(Debug, Clone, Copy)]
struct Coords {
    order: i32,
    steps: usize,
    n: usize,
    delta: f64,
}

impl Coords {
    /// Fill nodes `2..=N` of `full` from `y` (nodes 0 and 1 already set).
    fn to_nodes(&self, y: &[f64], full: &mut [f64]) {
        let (n, d) = (self.n, self.delta);
        for i in 2..=self.steps {
            for j in 0..n {
                let m = (i - 2) * n + j;
                full[i * n + j] = match self.order {
                    0 => y[m],
                    1 => full[(i - 1) * n + j] + d * y[m],
                    _ => 2.0 * full[(i - 1) * n + j] - full[(i - 2) * n + j] + d * d * y[m],
                };
            }
        }
    }

    fn from_nodes(&self, full: &[f64]) -> Vec<f64> {
        let (n, inv) = (self.n, self.steps as f64);
        let mut y = vec![0.0; (self.steps - 1) * n];
        for i in 2..=self.steps {
            for j in 0..n {
                let m = (i - 2) * n + j;
                let (a, b, c) = (full[(i - 2) * n + j], full[(i - 1) * n + j], full[i * n + j]);
                y[m] = match self.order {
                    0 => c,
                    1 => (c - b) * inv,
                    _ => (c - 2.0 * b + a) * inv * inv,
                };
            }
        }
        y
    }

    /// Pull a node-space gradient (nodes 2..=N) back to `y`.
    fn pull_back(&self, gx: &[f64], gy: &mut [f64]) {
        let (n, d) = (self.n, self.delta);
        let count = self.steps - 1;
        match self.order {
            0 => gy.copy_from_slice(gx),
            1 => {
                for j in 0..n {
                    let mut s = 0.0;
                    for m in (0..count).rev() {
                        s += gx[m * n + j];
                        gy[m * n + j] = d * s;
                    }
                }
            }
            _ => {
                for j in 0..n {
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for m in (0..count).rev() {
                        s1 += gx[m * n + j];
                        s2 += s1;
                        gy[m * n + j] = d * d * s2;
                    }
                }
            }
        }
    }
}

struct Lagrangian<'a> {
    dp: &'a DiscreteProblem,
    st: &'a Structure,
    coords: Coords,
    full: Vec<f64>,
    /// Node-space gradient of the objective and the `x` parts of the rows.
    gx: Vec<f64>,
    /// Row-indexed gradients with respect to `Δx(t_i)` and `Δ²x(t_i)`, kept
    /// apart so the pull-back to difference coordinates never cancels
    /// `1/δ²`-sized terms.
    g1: Vec<f64>,
    g2: Vec<f64>,
    /// `Δx(t_i)` and `Δ²x(t_i)` per row, taken from the coordinates rather
    /// than re-differenced from the nodes (which would amplify rounding by
    /// `1/δ²`).
    d1: Vec<f64>,
    d2: Vec<f64>,
    z: Vec<f64>,
    gw: Vec<f64>,
    gf: Vec<f64>,
}

impl<'a> Lagrangian<'a> {
    fn new(dp: &'a DiscreteProblem, st: &'a Structure, base: &GridTrajectory) -> Self {
        let n = dp.n();
        let grid = dp.grid();
        Lagrangian {
            dp,
            st,
            coords: Coords {
                order: st.order.iter().copied().max().unwrap_or(0),
                steps: grid.steps(),
                n,
                delta: grid.delta(),
            },
            full: base.values().to_vec(),
            gx: vec![0.0; (grid.steps() - 1) * n],
            g1: vec![0.0; dp.num_rows() * n],
            g2: vec![0.0; dp.num_rows() * n],
            d1: vec![0.0; dp.num_rows() * n],
            d2: vec![0.0; dp.num_rows() * n],
            z: vec![0.0; 3 * n],
            gw: vec![0.0; 3 * n],
            gf: vec![0.0; n],
        }
    }

    fn load(&mut self, y: &[f64]) {
        self.coords.to_nodes(y, &mut self.full);
        let n = self.dp.n();
        let rows = self.dp.num_rows();
        let inv = self.dp.grid().inv_delta();
        let d = self.coords.delta;
        let full = &self.full;
        let first = |j: usize| (full[n + j] - full[j]) * inv;
        match self.coords.order {
            0 => {
                for i in 0..rows {
                    let (a, rest) = self.full[i * n..].split_at(n);
                    let (b, rest) = rest.split_at(n);
                    difference_point(a, b, &rest[..n], inv, &mut self.z);
                    self.d1[i * n..(i + 1) * n].copy_from_slice(&self.z[n..2 * n]);
                    self.d2[i * n..(i + 1) * n].copy_from_slice(&self.z[2 * n..]);
                }
            }
            1 => {
                for j in 0..n {
                    let mut prev = first(j);
                    for i in 0..rows {
                        let next = y[i * n + j];
                        self.d1[i * n + j] = prev;
                        self.d2[i * n + j] = (next - prev) * inv;
                        prev = next;
                    }
                }
            }
            _ => {
                for j in 0..n {
                    let mut v = first(j);
                    for i in 0..rows {
                        self.d1[i * n + j] = v;
                        self.d2[i * n + j] = y[i * n + j];
                        v += d * y[i * n + j];
                    }
                }
            }
        }
    }

    /// Objective value; adds its node-space gradient into `self.gx`.
    fn objective(&mut self) -> Result<f64> {
        let n = self.dp.n();
        let grid = self.dp.grid();
        let steps = grid.steps();
        let delta = grid.delta();
        let pc = self.dp.source();
        let mut value = 0.0;
        for i in 2..=steps - 2 {
            let x = &self.full[i * n..(i + 1) * n];
            let t = grid.t(i);
            value += delta * pc.f().value(x, t);
            pc.f().gradient_into(x, t, &mut self.gf)?;
            for j in 0..n {
                self.gx[(i - 2) * n + j] += delta * self.gf[j];
            }
        }
        let i = steps - 1;
        let x = &self.full[i * n..(i + 1) * n];
        value += pc.q().value(x, 1.0 - delta);
        pc.q().gradient_into(x, 1.0 - delta, &mut self.gf)?;
        for j in 0..n {
            self.gx[(i - 2) * n + j] += self.gf[j];
        }
        Ok(value)
    }

    /// `W_k(x(t), Δx(t), Δ²x(t))` at row `i`; leaves the point in `self.z`.
    fn row(&mut self, k: usize, i: usize) -> f64 {
        let n = self.dp.n();
        self.z[..n].copy_from_slice(&self.full[i * n..(i + 1) * n]);
        self.z[n..2 * n].copy_from_slice(&self.d1[i * n..(i + 1) * n]);
        self.z[2 * n..].copy_from_slice(&self.d2[i * n..(i + 1) * n]);
        self.dp.source().constraints()[k].w.value(&self.z, 0.0)
    }

    /// Add `weight · ∇W_k` at row `i` into the level accumulators (point
    /// already in `self.z`).
    fn add_row_gradient(&mut self, k: usize, i: usize, weight: f64) -> Result<()> {
        let n = self.dp.n();
        self.dp.source().constraints()[k]
            .w
            .gradient_into(&self.z, 0.0, &mut self.gw)?;
        for j in 0..n {
            if i >= 2 {
                self.gx[(i - 2) * n + j] += weight * self.gw[j];
            }
            self.g1[i * n + j] += weight * self.gw[n + j];
            self.g2[i * n + j] += weight * self.gw[2 * n + j];
        }
        Ok(())
    }

    fn clear_gradient(&mut self) {
        for g in [&mut self.gx, &mut self.g1, &mut self.g2] {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Fold the `Δx` and `Δ²x` accumulators into node space.
    fn fold_into_nodes(&mut self) {
        let n = self.dp.n();
        let inv = self.dp.grid().inv_delta();
        for i in 0..self.dp.num_rows() {
            for j in 0..n {
                let (a, b) = (self.g1[i * n + j], self.g2[i * n + j]);
                let parts = [
                    (i, -a * inv + b * inv * inv),
                    (i + 1, a * inv - 2.0 * b * inv * inv),
                    (i + 2, b * inv * inv),
                ];
                for (node, d) in parts {
                    if node >= 2 {
                        self.gx[(node - 2) * n + j] += d;
                    }
                }
            }
        }
        self.g1.iter_mut().for_each(|v| *v = 0.0);
        self.g2.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Gradient in difference coordinates from the level accumulators.
    /// With `y_m = Δᵖx(t_{m+2−p})`: order 1 has `Δx(t_r) = y_{r−1}`; order 2
    /// has `Δ²x(t_r) = y_r` and `∂Δx(t_r)/∂y_m = δ` for `m < r`.
    fn pull_back(&mut self, grad: &mut [f64]) {
        let n = self.dp.n();
        let rows = self.dp.num_rows();
        let (d, inv) = (self.coords.delta, self.dp.grid().inv_delta());
        match self.coords.order {
            0 => {
                self.fold_into_nodes();
                grad.copy_from_slice(&self.gx);
            }
            1 => {
                self.coords.pull_back(&self.gx, grad);
                for r in 0..rows {
                    for j in 0..n {
                        let (a, b) = (self.g1[r * n + j], self.g2[r * n + j]);
                        grad[r * n + j] += b * inv;
                        if r >= 1 {
                            grad[(r - 1) * n + j] += a - b * inv;
                        }
                    }
                }
            }
            _ => {
                self.coords.pull_back(&self.gx, grad);
                for j in 0..n {
                    let mut s = 0.0;
                    for m in (0..rows).rev() {
                        if m + 1 < rows {
                            s += self.g1[(m + 1) * n + j];
                        }
                        grad[m * n + j] += self.g2[m * n + j] + d * s;
                    }
                }
            }
        }
    }

    /// PHR augmented Lagrangian and its gradient in `y`.
    fn augmented(&mut self, y: &[f64], lambda: &[Vec<f64>], rho: f64, grad: &mut [f64]) -> Result<f64> {
        self.load(y);
        self.clear_gradient();
        let mut value = self.objective()?;
        for k in 0..lambda.len() {
            for i in 0..lambda[k].len() {
                if !self.st.row_free[k][i] {
                    continue;
                }
                let g = self.row(k, i);
                let l = lambda[k][i];
                let shifted = (l + rho * g).max(0.0);
                value += (shifted * shifted - l * l) / (2.0 * rho);
                if shifted > 0.0 {
                    self.add_row_gradient(k, i, shifted)?;
                }
            }
        }
        self.pull_back(grad);
        Ok(value)
    }

    /// Max violation over all rows (fixed rows included) at the loaded point.
    fn violation(&mut self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..self.dp.m() {
            for i in 0..self.dp.num_rows() {
                worst = worst.max(self.row(k, i));
            }
        }
        worst
    }

    /// Gradient of `J + Σ λ Φ_k` at the loaded point: node space in
    /// `self.gx`, difference coordinates in `grad`.
    fn lagrangian_gradient(&mut self, lambda: &[Vec<f64>], grad: &mut [f64]) -> Result<f64> {
        self.clear_gradient();
        let value = self.objective()?;
        for k in 0..lambda.len() {
            for i in 0..lambda[k].len() {
                if self.st.row_free[k][i] && lambda[k][i] > 0.0 {
                    self.row(k, i);
                    self.add_row_gradient(k, i, lambda[k][i])?;
                }
            }
        }
        self.pull_back(grad);
        self.fold_into_nodes();
        Ok(value)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve the discrete problem by a PHR augmented-Lagrangian outer loop with
/// an L-BFGS/Armijo inner loop.
pub fn solve(dp: &DiscreteProblem, cfg: &SolverConfig, init: Option<&GridTrajectory>) -> Result<SolveResult> {
    cfg.validate()?;
    let pc = dp.source();
    for (k, c) in pc.constraints().iter().enumerate() {
        if !c.w.has_gradient() {
            return Err(Error::Unsupported(format!(
                "constraint {k} has no gradient or subgradient available"
            )));
        }
    }
    for (name, g) in [("running cost", pc.f()), ("terminal cost", pc.q())] {
        if !g.has_gradient() {
            return Err(Error::Unsupported(format!("{name} has no gradient callable")));
        }
    }
    let grid = dp.grid();
    let n = dp.n();
    let steps = grid.steps();
    let mut start = match init {
        Some(t) => {
            check_dim("initial guess grid steps", steps, t.grid().steps())?;
            check_dim("initial guess state dimension", n, t.n())?;
            t.clone()
        }
        None => initial_guess(dp, cfg),
    };
    let [x0, x1] = dp.fixed_nodes();
    start.x_mut(0).copy_from_slice(&x0);
    start.x_mut(1).copy_from_slice(&x1);

    let st = structure(dp);
    let mut lag = Lagrangian::new(dp, &st, &start);
    let mut y = lag.coords.from_nodes(start.values());
    let rows = dp.num_rows();
    let mut lambda = vec![vec![0.0; rows]; dp.m()];
    let mut rho = cfg.penalty_init;
    let inner_cfg = LbfgsConfig {
        memory: cfg.lbfgs_memory,
        max_iter: cfg.max_inner,
        // node-space gradient ≤ (2/δ)ᵖ × coordinate gradient
        grad_tol: cfg.grad_tol * (0.5 * grid.delta()).powi(lag.coords.order),
        armijo_c1: cfg.armijo_c1,
        shrink: cfg.armijo_shrink,
    };

    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut prev_feas = f64::INFINITY;
    let mut grad = vec![0.0; y.len()];
    let mut converged = false;
    let mut feasibility = f64::INFINITY;
    let mut stationarity = f64::INFINITY;
    let mut coordinate_stationarity = f64::INFINITY;
    let mut failure: Option<Error> = None;

    for _outer in 0..cfg.max_outer {
        let lam_prev = lambda.clone();
        let outcome = lbfgs::minimize(
            |v, g| match lag.augmented(v, &lam_prev, rho, g) {
                Ok(val) => val,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            &mut y,
            &inner_cfg,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        if outcome.status == Status::NonFinite {
            return Err(Error::Numerical(
                "augmented Lagrangian evaluated to a non-finite value".into(),
            ));
        }
        inner_total += outcome.iters;

        lag.load(&y);
        for k in 0..dp.m() {
            for i in 0..rows {
                lambda[k][i] = if st.row_free[k][i] {
                    (lam_prev[k][i] + rho * lag.row(k, i)).max(0.0)
                } else {
                    0.0
                };
            }
        }
        feasibility = lag.violation();
        let objective = lag.lagrangian_gradient(&lambda, &mut grad)?;
        stationarity = inf_norm(&lag.gx);
        coordinate_stationarity = inf_norm(&grad);
        if !objective.is_finite() || !stationarity.is_finite() {
            return Err(Error::Numerical("objective or gradient is not finite".into()));
        }
        history.push(OuterRecord {
            penalty: rho,
            feasibility,
            stationarity,
            objective,
            inner_iters: outcome.iters,
        });
        if feasibility <= cfg.feas_tol && stationarity <= cfg.grad_tol {
            converged = true;
            break;
        }
        // grow the penalty only while infeasibility stalls
        if feasibility > cfg.feas_tol && feasibility > 0.25 * prev_feas {
            rho = (rho * cfg.penalty_growth).min(cfg.penalty_max);
        }
        prev_feas = feasibility;
    }

    lag.load(&y);
    let mut trajectory = GridTrajectory::new(grid, n, lag.full.clone())?;
    let mut extrapolated = Vec::new();
    let mut node = steps;
    while node >= 2 && !st.node_used[node] {
        extrapolated.push(node);
        node -= 1;
    }
    extrapolated.reverse();
    for &node in &extrapolated {
        for j in 0..n {
            let a = trajectory.x(node - 2)[j];
            let b = trajectory.x(node - 1)[j];
            trajectory.x_mut(node)[j] = 2.0 * b - a;
        }
    }
    let objective = dp.objective_discrete(&trajectory)?;

    let delta = grid.delta();
    let alphas = lambda
        .iter()
        .map(|row| row.iter().map(|l| l / delta).collect())
        .collect();

    Ok(SolveResult {
        trajectory,
        alphas,
        raw_multipliers: lambda,
        determined: st.row_free.clone(),
        objective,
        feasibility,
        stationarity,
        coordinate_stationarity,
        outer_iters: history.len(),
        inner_iters: inner_total,
        converged,
        history,
        extrapolated_nodes: extrapolated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub trajectory: GridTrajectory,
    pub objective: f64,
    /// `Σ_i L_i · h_i` with `h_i` the grid spacing on node `i` and `L_i` the
    /// largest objective slope in that coordinate at the box endpoints.
    pub resolution: f64,
    pub evaluated: usize,
}

pub const MAX_ORACLE_FREE_NODES: usize = 4;
pub const MAX_ORACLE_STEPS: usize = 200;

/// Exhaustive search over `steps + 1` equally spaced values per free node
/// within `bounds` (one interval per free node `x(2δ), …, x(1)`). Nodes the
/// problem never touches are filled by extrapolation as in [`solve`].
pub fn brute_force_oracle(dp: &DiscreteProblem, bounds: &[(f64, f64)], steps: usize) -> Result<OracleResult> {
    if dp.n() != 1 {
        return Err(Error::Unsupported("the grid oracle handles scalar states only".into()));
    }
    let grid = dp.grid();
    let nodes = grid.steps();
    let free = nodes - 1;
    if free > MAX_ORACLE_FREE_NODES {
        return Err(Error::Unsupported(format!(
            "the grid oracle handles at most {MAX_ORACLE_FREE_NODES} free nodes, got {free}"
        )));
    }
    if steps == 0 || steps > MAX_ORACLE_STEPS {
        return Err(Error::Config(format!(
            "oracle steps must lie in 1..={MAX_ORACLE_STEPS}, got {steps}"
        )));
    }
    check_dim("oracle box", free, bounds.len())?;
    for &(lo, hi) in bounds {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("invalid oracle interval [{lo}, {hi}]")));
        }
    }
    let st = structure(dp);
    let searched: Vec<usize> = (2..=nodes).filter(|&i| st.node_used[i]).collect();
    let mut traj = initial_guess(dp, &SolverConfig::default());
    // each free row is checked at the first level where all its nodes are set
    let mut closing: Vec<Vec<(usize, usize)>> = vec![Vec::new(); searched.len()];
    for (k, c) in dp.source().constraints().iter().enumerate() {
        let m = c.depends_on;
        for i in 0..dp.num_rows() {
            if !st.row_free[k][i] {
                continue;
            }
            let last = if m.v2 {
                i + 2
            } else if m.v1 {
                i + 1
            } else {
                i
            };
            let needs_extrapolated = (2..=last).any(|nd| !st.node_used[nd]);
            let level = match searched.iter().position(|&nd| nd >= last) {
                Some(p) if !needs_extrapolated => p,
                _ => searched.len().saturating_sub(1),
            };
            if !searched.is_empty() {
                closing[level].push((k, i));
            }
        }
    }
    // rows closed before any searched node (fixed rows) are checked up front
    let fixed_rows: Vec<(usize, usize)> = (0..dp.m())
        .flat_map(|k| (0..dp.num_rows()).map(move |i| (k, i)))
        .filter(|&(k, i)| !st.row_free[k][i])
        .collect();
    let tol = DEFAULT_FEAS_TOL;

    let extrapolate = |traj: &mut GridTrajectory| {
        for node in 2..=nodes {
            if !st.node_used[node] {
                let v = 2.0 * traj.x(node - 1)[0] - traj.x(node - 2)[0];
                traj.x_mut(node)[0] = v;
            }
        }
    };
    extrapolate(&mut traj);
    for &(k, i) in &fixed_rows {
        let v = dp.phi(k, traj.x(i), traj.x(i + 1), traj.x(i + 2))?;
        if v > tol {
            return Err(Error::Infeasible(format!(
                "row {i} of constraint {k} involves only fixed nodes and is violated by {v:e}"
            )));
        }
    }

    let mut best: Option<(f64, GridTrajectory)> = None;
    let mut evaluated = 0usize;
    let mut idx = vec![0usize; searched.len()];
    let value_at = |pos: usize, step: usize| {
        let (lo, hi) = bounds[searched[pos] - 2];
        if steps == 0 {
            lo
        } else {
            lo + (hi - lo) * step as f64 / steps as f64
        }
    };
    // iterative depth-first enumeration with pruning on closed rows
    let depth = searched.len();
    if depth == 0 {
        let obj = dp.objective_discrete(&traj)?;
        best = Some((obj, traj.clone()));
    } else {
        let mut level = 0usize;
        idx[0] = 0;
        loop {
            if idx[level] > steps {
                if level == 0 {
                    break;
                }
                level -= 1;
                idx[level] += 1;
                continue;
            }
            let node = searched[level];
            traj.x_mut(node)[0] = value_at(level, idx[level]);
            if level + 1 == depth {
                extrapolate(&mut traj);
            }
            let mut ok = true;
            for &(k, i) in &closing[level] {
                let v = dp.phi(k, traj.x(i), traj.x(i + 1), traj.x(i + 2))?;
                if v > tol {
                    ok = false;
                    break;
                }
            }
            if !ok {
                idx[level] += 1;
                continue;
            }
            if level + 1 == depth {
                evaluated += 1;
                let obj = dp.objective_discrete(&traj)?;
                if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                    best = Some((obj, traj.clone()));
                }
                idx[level] += 1;
            } else {
                level += 1;
                idx[level] = 0;
            }
        }
    }
    let (objective, trajectory) =
        best.ok_or_else(|| Error::Infeasible("no feasible grid point in the search box".into()))?;

    let pc = dp.source();
    let delta = grid.delta();
    let mut resolution = 0.0;
    for &node in &searched {
        let (lo, hi) = bounds[node - 2];
        let h = (hi - lo) / steps as f64;
        let slope = |x: f64| -> Result<f64> {
            let mut g = [0.0];
            let mut s = 0.0;
            if (2..=nodes - 2).contains(&node) {
                pc.f().gradient_into(&[x], grid.t(node), &mut g)?;
                s += delta * g[0];
            }
            if node == nodes - 1 {
                pc.q().gradient_into(&[x], 1.0 - delta, &mut g)?;
                s += g[0];
            }
            Ok(s.abs())
        };
        resolution += slope(lo)?.max(slope(hi)?) * h;
    }
    Ok(OracleResult {
        trajectory,
        objective,
        resolution,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexfn::{Affine, ScalarFn};
    use crate::problem::{discretize, half_squared_norm, Constraint, ContinuousProblem};

    fn ex51() -> ContinuousProblem {
        let w = ScalarFn::affine(1, 3, Affine::constraint(vec![1.0], vec![-3.0], vec![0.0], 0.0).unwrap())
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
    fn example51_at_n100() {
        let dp = discretize(&ex51(), 100).unwrap();
        let res = solve(&dp, &SolverConfig::default(), None).unwrap();
        assert!(res.converged, "{:?}", res.history.last());
        assert!((res.objective - (1.0_f64 / 3.0).exp()).abs() < 5e-2);
        let exact = GridTrajectory::from_scalar_fn(dp.grid(), |t| (t / 3.0).exp());
        assert!(res.trajectory.max_abs_diff(&exact).unwrap() < 5e-2);
        assert!(res.alphas.iter().flatten().all(|&a| a >= 0.0));
        assert_eq!(res.extrapolated_nodes, vec![100]);
        assert!(!res.determined[0][0]);
    }

    #[test]
    fn inactive_constraint_drives_free_nodes_to_zero() {
        let pc = ContinuousProblem::new(
            half_squared_norm(1),
            ScalarFn::zero(1, 1),
            vec![Constraint::new(ScalarFn::constant(1, 3, -1.0)).unwrap()],
            vec![1.0],
            vec![2.0],
        )
        .unwrap();
        let dp = discretize(&pc, 10).unwrap();
        let res = solve(&dp, &SolverConfig::default(), None).unwrap();
        assert!(res.converged);
        for i in 2..=8 {
            assert!(res.trajectory.x(i)[0].abs() <= 1e-8 / dp.grid().delta());
        }
    }

    #[test]
    fn oracle_on_truncated_example51() {
        let dp = discretize(&ex51(), 4).unwrap();
        let out = brute_force_oracle(&dp, &[(0.5, 2.0); 3], 200).unwrap();
        assert!((out.objective - (0.75_f64 / 3.0).exp()).abs() < 2e-2);
        let res = solve(&dp, &SolverConfig::default(), None).unwrap();
        assert!(res.objective <= out.objective + 1e-6);
        // the grid optimum can only be worse, and here not by more than the
        // chained rounding of two nodes
        assert!(out.objective - res.objective <= 3.0 * out.resolution);
    }

    #[test]
    fn oracle_reports_infeasible() {
        let pc = ContinuousProblem::new(
            ScalarFn::zero(1, 1),
            ScalarFn::affine(1, 1, Affine::state(vec![1.0], 0.0)).unwrap(),
            vec![Constraint::new(ScalarFn::constant(1, 3, 1.0)).unwrap()],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let dp = discretize(&pc, 4).unwrap();
        assert!(matches!(
            brute_force_oracle(&dp, &[(0.0, 1.0); 3], 10),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn oracle_picks_box_lower_bound_for_monotone_cost() {
        let w = ScalarFn::affine(1, 3, Affine::constraint(vec![1.0], vec![0.0], vec![0.0], 100.0).unwrap())
            .unwrap();
        let pc = ContinuousProblem::new(
            ScalarFn::zero(1, 1),
            ScalarFn::affine(1, 1, Affine::state(vec![1.0], 0.0)).unwrap(),
            vec![Constraint::new(w).unwrap()],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let dp = discretize(&pc, 4).unwrap();
        let out = brute_force_oracle(&dp, &[(-1.0, 1.0); 3], 20).unwrap();
        assert_eq!(out.objective, -1.0);
        assert_eq!(out.trajectory.x(3)[0], -1.0);
    }

    #[test]
    fn bad_config_rejected() {
        let dp = discretize(&ex51(), 8).unwrap();
        let cfg = SolverConfig {
            penalty_growth: 1.0,
            ..SolverConfig::default()
        };
        assert!(matches!(solve(&dp, &cfg, None), Err(Error::Config(_))));
    }
}
