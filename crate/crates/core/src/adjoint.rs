//! Second-order adjoint variables: backward reconstruction from multipliers,
//! flavor reductions and certificate assembly.
//!
//! Normalization. The solver's raw multipliers `λ` of the rows `Φ_k ≤ 0` are
//! divided by δ to give `α`. Adjoint values are kept on the scale where the
//! full-flavor inclusion reads
//!
//! ```text
//! [ (1/δ²)(x*(t) − u*(t) + u*(t+δ) − x*(t+2δ)) − μ f'(x̃(t), t),
//!   (1/δ)(u*(t+δ) − 2x*(t+2δ)),
//!   −x*(t+2δ) ] ∈ Σ_k α_k(t) ∂W_k(x̃(t), Δx̃(t), Δ²x̃(t))
//! ```
//!
//! with `ψ*(t) = (1/δ)(u*(t) − 2x*(t+δ))` and the boundary condition
//! `−ψ*(1−δ) − Δx*(1−δ) ∈ μ ∂q(x̃(1−δ))`. On this scale `x*` and `ψ*` stay
//! bounded as δ → 0 while `u*` is of order δ.

use std::fmt;
use std::str::FromStr;

use crate::convexfn::ScalarFn;
use crate::error::{check_dim, Error, Result};
use crate::fd::extrapolate;
use crate::problem::{ContinuousProblem, DiscreteProblem, Grid, GridTrajectory};
use crate::solver::SolveResult;

/// Which set of optimality conditions a certificate is shaped for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// Unreduced `(x*, u*, ψ*, α)`.
    FullSsdfi,
    /// Constraints ignore `v1`: `u*(t) = 2x*(t+δ)`, `ψ* ≡ 0`.
    W1Reduced,
    /// Constraints ignore `v2`: `x* ≡ 0` and `u*` carries the first-order adjoint.
    W2Reduced,
    /// Affine constraints; `alphas` is the multiplier vector `λ(t)`.
    Polyhedral,
}

impl Flavor {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flavor::FullSsdfi => "FullSSDFI",
            Flavor::W1Reduced => "W1-reduced",
            Flavor::W2Reduced => "W2-reduced",
            Flavor::Polyhedral => "Polyhedral",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FullSSDFI" => Ok(Flavor::FullSsdfi),
            "W1-reduced" => Ok(Flavor::W1Reduced),
            "W2-reduced" => Ok(Flavor::W2Reduced),
            "Polyhedral" => Ok(Flavor::Polyhedral),
            other => Err(Error::Config(format!("unknown certificate flavor {other:?}"))),
        }
    }
}

/// Dual certificate on a grid. `alphas[k]` has one entry per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub mu: f64,
    pub xstar: GridTrajectory,
    pub ustar: GridTrajectory,
    pub psistar: GridTrajectory,
    pub alphas: Vec<Vec<f64>>,
    pub flavor: Flavor,
}

impl Certificate {
    pub fn new(
        mu: f64,
        xstar: GridTrajectory,
        ustar: GridTrajectory,
        psistar: GridTrajectory,
        alphas: Vec<Vec<f64>>,
        flavor: Flavor,
    ) -> Result<Self> {
        let grid = xstar.grid();
        let n = xstar.n();
        for t in [&ustar, &psistar] {
            check_dim("certificate grid steps", grid.steps(), t.grid().steps())?;
            check_dim("certificate state dimension", n, t.n())?;
        }
        for a in &alphas {
            check_dim("multiplier grid length", grid.num_nodes(), a.len())?;
        }
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::Config(format!("mu must be finite and >= 0, got {mu}")));
        }
        Ok(Certificate {
            mu,
            xstar,
            ustar,
            psistar,
            alphas,
            flavor,
        })
    }

    pub fn zeros(grid: Grid, n: usize, m: usize, flavor: Flavor) -> Self {
        Certificate {
            mu: 1.0,
            xstar: GridTrajectory::zeros(grid, n),
            ustar: GridTrajectory::zeros(grid, n),
            psistar: GridTrajectory::zeros(grid, n),
            alphas: vec![vec![0.0; grid.num_nodes()]; m],
            flavor,
        }
    }

    pub fn grid(&self) -> Grid {
        self.xstar.grid()
    }

    pub fn n(&self) -> usize {
        self.xstar.n()
    }

    pub fn m(&self) -> usize {
        self.alphas.len()
    }

    /// Max norm over every component, multipliers included.
    pub fn max_norm(&self) -> f64 {
        let trajs = [&self.xstar, &self.ustar, &self.psistar];
        let a = trajs
            .iter()
            .flat_map(|t| t.values().iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        self.alphas
            .iter()
            .flatten()
            .fold(a, |m, v| m.max(v.abs()))
    }

    /// Every dual component multiplied by `c` (μ unchanged).
    pub fn scaled(&self, c: f64) -> Certificate {
        let scale = |t: &GridTrajectory| {
            let mut out = t.clone();
            out.values_mut().iter_mut().for_each(|v| *v *= c);
            out
        };
        Certificate {
            mu: self.mu,
            xstar: scale(&self.xstar),
            ustar: scale(&self.ustar),
            psistar: scale(&self.psistar),
            alphas: self
                .alphas
                .iter()
                .map(|a| a.iter().map(|v| v * c).collect())
                .collect(),
            flavor: self.flavor,
        }
    }
}

/// Fill the entries with `known[i] == false`. Interior gaps are interpolated
/// linearly; leading and trailing gaps are extrapolated outward one node at a
/// time from up to three neighbors.
pub(crate) fn fill_gaps(values: &mut [f64], known: &[bool], clamp_nonneg: bool) {
    let len = values.len();
    let idx: Vec<usize> = (0..len).filter(|&i| known[i]).collect();
    if idx.is_empty() {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let (first, last) = (idx[0], *idx.last().unwrap());
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let s = (i - a) as f64 / (b - a) as f64;
            values[i] = (1.0 - s) * values[a] + s * values[b];
        }
    }
    let clamp = |v: f64| if clamp_nonneg { v.max(0.0) } else { v };
    let avail = last - first + 1;
    for i in (0..first).rev() {
        let take = avail.min(3).min(len - i - 1);
        let samples: Vec<f64> = (1..=take).map(|j| values[i + j]).collect();
        values[i] = clamp(extrapolate(&samples));
    }
    for i in last + 1..len {
        let take = avail.min(3).min(i);
        let samples: Vec<f64> = (1..=take).map(|j| values[i - j]).collect();
        values[i] = clamp(extrapolate(&samples));
    }
}

/// Node grid of multipliers from a solve: determined rows keep the solver
/// value, undetermined rows and the last two nodes are filled by
/// interpolation or extrapolation, clamped at zero.
pub fn alpha_node_grid(dp: &DiscreteProblem, result: &SolveResult) -> Result<Vec<Vec<f64>>> {
    let nodes = dp.grid().num_nodes();
    let rows = dp.num_rows();
    check_dim("solver multiplier families", dp.m(), result.alphas.len())?;
    let mut out = Vec::with_capacity(dp.m());
    for (a, det) in result.alphas.iter().zip(&result.determined) {
        check_dim("solver multiplier rows", rows, a.len())?;
        let mut values = vec![0.0; nodes];
        let mut known = vec![false; nodes];
        values[..rows].copy_from_slice(a);
        known[..rows].copy_from_slice(det);
        fill_gaps(&mut values, &known, true);
        out.push(values);
    }
    Ok(out)
}

fn row_gradient(w: &ScalarFn, z: &[f64]) -> Result<Vec<f64>> {
    if !w.is_smooth() {
        let s = w.subdiff(z, crate::convexfn::DEFAULT_EPS_ACT)?;
        if !s.is_singleton {
            return Err(Error::Unsupported(
                "constraint is not differentiable at a trajectory point; \
                 verify a supplied certificate instead"
                    .into(),
            ));
        }
        return Ok(s.generators[0].as_slice().to_vec());
    }
    if w.has_gradient() {
        Ok(w.gradient(z, 0.0)?.as_slice().to_vec())
    } else {
        let h = 1e-6 * z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        Ok(w.fd_gradient(z, 0.0, h)?.as_slice().to_vec())
    }
}

/// Backward pass: `x*(1) = 0`, then row by row
/// `x*(t+2δ) = −Σ α_k ∇_{v2}W_k` and `u*(t+δ) = δ Σ α_k ∇_{v1}W_k + 2x*(t+2δ)`.
/// The row at `t = 1−2δ` would define `x*(1)` and is left to the checker.
/// `x*(0), x*(δ), u*(0), u*(1)` and `ψ*(1)` are extrapolated.
///
/// `alphas[k]` is either a node grid (`N+1` entries) or a row grid (`N−1`).
pub fn reconstruct_adjoints(
    dp: &DiscreteProblem,
    traj: &GridTrajectory,
    alphas: &[Vec<f64>],
    mu: f64,
) -> Result<Certificate> {
    let grid = dp.grid();
    let steps = grid.steps();
    let n = dp.n();
    let delta = grid.delta();
    let rows = dp.num_rows();
    let nodes = grid.num_nodes();
    check_dim("multiplier families", dp.m(), alphas.len())?;
    check_dim("trajectory grid steps", steps, traj.grid().steps())?;
    let alpha_nodes: Vec<Vec<f64>> = alphas
        .iter()
        .map(|a| {
            if a.len() == nodes {
                Ok(a.clone())
            } else if a.len() == rows {
                let mut v = a.clone();
                v.resize(nodes, 0.0);
                let mut known = vec![true; rows];
                known.resize(nodes, false);
                fill_gaps(&mut v, &known, true);
                Ok(v)
            } else {
                Err(Error::Dimension {
                    context: "multiplier grid length",
                    expected: nodes,
                    got: a.len(),
                })
            }
        })
        .collect::<Result<_>>()?;

    let mut xs = vec![0.0; nodes * n];
    let mut us = vec![0.0; nodes * n];
    for i in 0..rows {
        let z = dp.w_point(traj, i)?;
        let mut gv1 = vec![0.0; n];
        let mut gv2 = vec![0.0; n];
        for (k, c) in dp.source().constraints().iter().enumerate() {
            let g = row_gradient(&c.w, &z)?;
            let a = alpha_nodes[k][i];
            for j in 0..n {
                gv1[j] += a * g[n + j];
                gv2[j] += a * g[2 * n + j];
            }
        }
        for j in 0..n {
            let x_next = if i + 2 == steps { 0.0 } else { -gv2[j] };
            xs[(i + 2) * n + j] = x_next;
            us[(i + 1) * n + j] = delta * gv1[j] - 2.0 * gv2[j];
        }
    }
    let mut known_x = vec![true; nodes];
    known_x[0] = false;
    known_x[1] = false;
    let mut known_u = vec![true; nodes];
    known_u[0] = false;
    known_u[steps] = false;
    fill_components(&mut xs, n, &known_x);
    fill_components(&mut us, n, &known_u);

    let mut ps = vec![0.0; nodes * n];
    for i in 0..steps {
        for j in 0..n {
            ps[i * n + j] = (us[i * n + j] - 2.0 * xs[(i + 1) * n + j]) / delta;
        }
    }
    let mut known_p = vec![true; nodes];
    known_p[steps] = false;
    fill_components(&mut ps, n, &known_p);

    Certificate::new(
        mu,
        GridTrajectory::new(grid, n, xs)?,
        GridTrajectory::new(grid, n, us)?,
        GridTrajectory::new(grid, n, ps)?,
        alpha_nodes,
        Flavor::FullSsdfi,
    )
}

fn fill_components(values: &mut [f64], n: usize, known: &[bool]) {
    let nodes = known.len();
    let mut col = vec![0.0; nodes];
    for j in 0..n {
        for i in 0..nodes {
            col[i] = values[i * n + j];
        }
        fill_gaps(&mut col, known, false);
        for i in 0..nodes {
            values[i * n + j] = col[i];
        }
    }
}

/// Full certificate from a converged solve with μ = 1.
pub fn reconstruct_from_solution(dp: &DiscreteProblem, result: &SolveResult) -> Result<Certificate> {
    let alphas = alpha_node_grid(dp, result)?;
    reconstruct_adjoints(dp, &result.trajectory, &alphas, 1.0)
}

fn require_flavor(cert: &Certificate, want: Flavor) -> Result<()> {
    if cert.flavor != want {
        return Err(Error::Flavor(format!(
            "expected a {} certificate, got {}",
            want.as_str(),
            cert.flavor.as_str()
        )));
    }
    Ok(())
}

/// `x* ≡ 0`, `u* := ψ*`, `ψ* := u*`. Every constraint must ignore `v2`.
pub fn reduce_to_w2(pc: &ContinuousProblem, cert: &Certificate) -> Result<Certificate> {
    require_flavor(cert, Flavor::FullSsdfi)?;
    if pc.constraints().iter().any(|c| c.depends_on.v2) {
        return Err(Error::Flavor(
            "W2 reduction needs every constraint independent of v2".into(),
        ));
    }
    let grid = cert.grid();
    Ok(Certificate {
        mu: cert.mu,
        xstar: GridTrajectory::zeros(grid, cert.n()),
        ustar: cert.psistar.clone(),
        psistar: cert.psistar.clone(),
        alphas: cert.alphas.clone(),
        flavor: Flavor::W2Reduced,
    })
}

/// `u*(t) = 2x*(t+δ)`, `ψ* ≡ 0`. Every constraint must ignore `v1`.
pub fn reduce_to_w1(pc: &ContinuousProblem, cert: &Certificate) -> Result<Certificate> {
    require_flavor(cert, Flavor::FullSsdfi)?;
    if pc.constraints().iter().any(|c| c.depends_on.v1) {
        return Err(Error::Flavor(
            "W1 reduction needs every constraint independent of v1".into(),
        ));
    }
    let grid = cert.grid();
    let n = cert.n();
    let steps = grid.steps();
    let mut us = vec![0.0; grid.num_nodes() * n];
    for i in 0..steps {
        for j in 0..n {
            us[i * n + j] = 2.0 * cert.xstar.x(i + 1)[j];
        }
    }
    let mut known = vec![true; grid.num_nodes()];
    known[steps] = false;
    fill_components(&mut us, n, &known);
    Ok(Certificate {
        mu: cert.mu,
        xstar: cert.xstar.clone(),
        ustar: GridTrajectory::new(grid, n, us)?,
        psistar: GridTrajectory::zeros(grid, n),
        alphas: cert.alphas.clone(),
        flavor: Flavor::W1Reduced,
    })
}

/// From `λ(t)` for affine constraints `⟨p0,x⟩ + ⟨p1,v1⟩ − ⟨p2,v2⟩ − d`:
/// `x* = Qᵀλ`, `ψ* = P1ᵀλ`, `u*(t) = δψ*(t) + 2x*(t+δ)`.
pub fn polyhedral_certificate(
    pc: &ContinuousProblem,
    grid: Grid,
    lambda: Vec<Vec<f64>>,
) -> Result<Certificate> {
    let n = pc.n();
    check_dim("multiplier families", pc.m(), lambda.len())?;
    let mut blocks = Vec::with_capacity(pc.m());
    for c in pc.constraints() {
        match c.w.kind() {
            crate::convexfn::FnKind::Affine(a) => blocks.push(a.blocks(n)),
            _ => {
                return Err(Error::Flavor(
                    "polyhedral certificates need affine constraints".into(),
                ))
            }
        }
    }
    let nodes = grid.num_nodes();
    for l in &lambda {
        check_dim("multiplier grid length", nodes, l.len())?;
    }
    let mut xs = vec![0.0; nodes * n];
    let mut ps = vec![0.0; nodes * n];
    for i in 0..nodes {
        for (k, (_, p1, p2, _)) in blocks.iter().enumerate() {
            for j in 0..n {
                xs[i * n + j] += lambda[k][i] * p2[j];
                ps[i * n + j] += lambda[k][i] * p1[j];
            }
        }
    }
    let delta = grid.delta();
    let steps = grid.steps();
    let mut us = vec![0.0; nodes * n];
    for i in 0..steps {
        for j in 0..n {
            us[i * n + j] = delta * ps[i * n + j] + 2.0 * xs[(i + 1) * n + j];
        }
    }
    let mut known = vec![true; nodes];
    known[steps] = false;
    fill_components(&mut us, n, &known);
    Certificate::new(
        1.0,
        GridTrajectory::new(grid, n, xs)?,
        GridTrajectory::new(grid, n, us)?,
        GridTrajectory::new(grid, n, ps)?,
        lambda,
        Flavor::Polyhedral,
    )
}

/// Closed-form duals of the worked example (`f ≡ 0`, `q(x) = x`,
/// `W = x − 3x'`): `u*(t) = −e^{(1−t)/3}`, `α(t) = (1/3)e^{(1−t)/3}`, `x* ≡ 0`.
pub fn analytic_certificate_example51(steps: usize) -> Result<Certificate> {
    let grid = Grid::new(steps)?;
    let u = GridTrajectory::from_scalar_fn(grid, |t| -((1.0 - t) / 3.0).exp());
    let alpha: Vec<f64> = grid
        .times()
        .into_iter()
        .map(|t| ((1.0 - t) / 3.0).exp() / 3.0)
        .collect();
    Certificate::new(
        1.0,
        GridTrajectory::zeros(grid, 1),
        u.clone(),
        u,
        vec![alpha],
        Flavor::W2Reduced,
    )
}

/// Worst violation of
/// `(1/δ²)(x*(t) − u*(t) + u*(t+δ) − x*(t+2δ)) = Δ²x*(t) + Δψ*(t)` over
/// `t = 0, …, 1−2δ`, relative to `max(1, scale)` of the terms.
pub fn lemma_identity_residual(cert: &Certificate) -> f64 {
    let grid = cert.grid();
    let inv = grid.inv_delta();
    let n = cert.n();
    let mut worst = 0.0_f64;
    for i in 0..=grid.steps() - 2 {
        for j in 0..n {
            let x = |k: usize| cert.xstar.x(k)[j];
            let u = |k: usize| cert.ustar.x(k)[j];
            let p = |k: usize| cert.psistar.x(k)[j];
            let lhs = (x(i) - u(i) + u(i + 1) - x(i + 2)) * inv * inv;
            let rhs = (x(i + 2) - 2.0 * x(i + 1) + x(i)) * inv * inv + (p(i + 1) - p(i)) * inv;
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexfn::{Affine, ScalarFn};
    use crate::problem::{discretize, Constraint};
    use crate::solver::{solve, SolverConfig};

    fn example51() -> ContinuousProblem {
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
    fn flavor_names_round_trip() {
        for f in [Flavor::FullSsdfi, Flavor::W1Reduced, Flavor::W2Reduced, Flavor::Polyhedral] {
            assert_eq!(f.as_str().parse::<Flavor>().unwrap(), f);
        }
        assert!("W3".parse::<Flavor>().is_err());
    }

    #[test]
    fn gap_filling() {
        let mut v = vec![0.0, 2.0, 0.0, 4.0, 5.0, 0.0, 0.0];
        let known = [false, true, false, true, true, false, false];
        fill_gaps(&mut v, &known, false);
        assert_eq!(v[2], 3.0);
        // neighbors (2, 3, 4) are linear, so extrapolation stays linear
        assert_eq!(v[0], 1.0);
        assert_eq!(v[5], 6.0);
        assert_eq!(v[6], 7.0);
        let mut w = vec![0.0, 1.0, 0.5, 0.0];
        fill_gaps(&mut w, &[false, true, true, false], true);
        assert_eq!(w[3], 0.0);
        assert_eq!(w[0], 1.5);
    }

    #[test]
    fn analytic_certificate_values() {
        let c = analytic_certificate_example51(4).unwrap();
        assert_eq!(c.flavor, Flavor::W2Reduced);
        assert_eq!(c.ustar.x(4)[0], -1.0);
        assert!((c.alphas[0][0] - 0.4652).abs() < 1e-4);
        let c = analytic_certificate_example51(37).unwrap();
        assert!(c.alphas[0].iter().all(|&a| a > 0.0));
        assert!(c.xstar.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruction_from_exact_alpha_matches_closed_form() {
        let pc = example51();
        for steps in [50, 200] {
            let dp = discretize(&pc, steps).unwrap();
            let grid = dp.grid();
            let arc = GridTrajectory::from_scalar_fn(grid, |t| (t / 3.0).exp());
            let alpha: Vec<f64> = grid.times().iter().map(|t| ((1.0 - t) / 3.0).exp() / 3.0).collect();
            let cert = reconstruct_adjoints(&dp, &arc, &[alpha], 1.0).unwrap();
            assert_eq!(cert.xstar.x(steps)[0], 0.0);
            let red = reduce_to_w2(&pc, &cert).unwrap();
            let delta = grid.delta();
            for i in 0..=steps {
                let exact = -((1.0 - grid.t(i)) / 3.0).exp();
                assert!((red.ustar.x(i)[0] - exact).abs() <= 5.0 * delta);
            }
            assert!(lemma_identity_residual(&cert) <= 1e-10);
        }
    }

    #[test]
    fn zero_alphas_give_zero_adjoints() {
        let pc = example51();
        let dp = discretize(&pc, 10).unwrap();
        let arc = GridTrajectory::from_scalar_fn(dp.grid(), |t| 1.0 + t / 3.0);
        let cert = reconstruct_adjoints(&dp, &arc, &[vec![0.0; 9]], 1.0).unwrap();
        assert_eq!(cert.max_norm(), 0.0);
    }

    #[test]
    fn solver_certificate_invariants() {
        let pc = example51();
        let dp = discretize(&pc, 60).unwrap();
        let res = solve(&dp, &SolverConfig::default(), None).unwrap();
        let cert = reconstruct_from_solution(&dp, &res).unwrap();
        assert_eq!(cert.xstar.x(60)[0], 0.0);
        assert!(cert.alphas[0].iter().all(|&a| a >= 0.0));
        assert!(lemma_identity_residual(&cert) <= 1e-10);
        let delta = dp.grid().delta();
        for i in 0..60 {
            let psi = (cert.ustar.x(i)[0] - 2.0 * cert.xstar.x(i + 1)[0]) / delta;
            assert!((cert.psistar.x(i)[0] - psi).abs() <= 1e-12 * psi.abs().max(1.0));
        }
        let red = reduce_to_w2(&pc, &cert).unwrap();
        for i in 0..=60 {
            let exact = -((1.0 - dp.grid().t(i)) / 3.0).exp();
            assert!((red.ustar.x(i)[0] - exact).abs() < 0.1);
        }
    }

    #[test]
    fn nonsmooth_constraint_rejected() {
        let pieces = vec![
            Affine::constraint(vec![0.0], vec![1.0], vec![0.0], 0.0).unwrap(),
            Affine::constraint(vec![0.0], vec![-1.0], vec![0.0], 0.0).unwrap(),
        ];
        let w = ScalarFn::max_affine(1, 3, pieces).unwrap();
        let pc = ContinuousProblem::new(
            ScalarFn::zero(1, 1),
            ScalarFn::zero(1, 1),
            vec![Constraint::new(w).unwrap()],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let dp = discretize(&pc, 6).unwrap();
        let arc = GridTrajectory::zeros(dp.grid(), 1);
        let err = reconstruct_adjoints(&dp, &arc, &[vec![1.0; 5]], 1.0).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn reductions_check_flavor_and_dependence() {
        let pc = example51();
        let cert = analytic_certificate_example51(8).unwrap();
        assert!(matches!(reduce_to_w2(&pc, &cert), Err(Error::Flavor(_))));
        let full = Certificate::zeros(Grid::new(8).unwrap(), 1, 1, Flavor::FullSsdfi);
        assert!(matches!(reduce_to_w1(&pc, &full), Err(Error::Flavor(_))));
    }

    #[test]
    fn polyhedral_from_lambda() {
        let pc = example51();
        let grid = Grid::new(20).unwrap();
        let lam: Vec<f64> = grid.times().iter().map(|t| ((1.0 - t) / 3.0).exp() / 3.0).collect();
        let cert = polyhedral_certificate(&pc, grid, vec![lam.clone()]).unwrap();
        for i in 0..=20 {
            assert_eq!(cert.xstar.x(i)[0], 0.0);
            assert!((cert.psistar.x(i)[0] + 3.0 * lam[i]).abs() < 1e-15);
        }
    }
}
