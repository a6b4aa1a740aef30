//! Residual checks of every optimality-condition set against a
//! (trajectory, certificate) pair.
//!
//! Each checker returns a [`VerificationReport`] with one [`ConditionRow`]
//! per condition. Membership rows measure the Euclidean distance from the
//! target vector to `Σ_k α_k conv(∂W_k)` with the certificate's own weights;
//! boundary rows measure the distance to `μ ∂q`. A report passes iff every
//! required row passes and the certificate is nontrivial.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adjoint::{Certificate, Flavor};
use crate::convexfn::{
    subgradient_inequality_violation, FnKind, ScalarFn, SubdiffSet, DEFAULT_EPS_ACT,
};
use crate::error::{check_dim, Error, Result};
use crate::fd;
use crate::problem::{discretize, ContinuousProblem, DiscreteProblem, GridTrajectory};
use crate::transforms::{fixed_weight_residual, grouped_cone_membership, w_to_phi, SubgradTriple};

/// Certificates with max norm at or below this count as zero.
pub const TRIVIAL_TOL: f64 = 1e-10;
pub const DEFAULT_SAMPLE_COUNT: usize = 1000;
/// Half-width of the sampling box `x̃ ± r` for the global inequalities.
pub const DEFAULT_SAMPLE_RADIUS: f64 = 5.0;

const SAMPLED_NOTE: &str = "sampled, not proven";
const SUPPORT_SLOPE_NOTE: &str = "x* is used both as the adjoint in the third component and as \
     the support slope of f in (a1)/(b1); the two roles share one grid";

/// Condition sets that can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoremId {
    /// Abstract discrete inclusions over `Φ_k(x_t, x_{t+1}, x_{t+2})`.
    DiscreteAbstract,
    /// Discrete inclusions over `W_k(x, Δx, Δ²x)`.
    DiscreteFull,
    /// Discrete inclusions when every `W_k` ignores `v1`.
    DiscreteW1,
    /// Discrete inclusions when every `W_k` ignores `v2`.
    DiscreteW2,
    /// Continuous sufficient conditions (i)–(iii).
    Sufficient,
    SufficientW1,
    SufficientW2,
    /// Continuous conditions for differentiable `W_k`, eliminated form.
    SufficientSmooth,
    SufficientPolyhedral,
    SufficientNonconvex,
}

impl TheoremId {
    pub const ALL: [TheoremId; 10] = [
        TheoremId::DiscreteAbstract,
        TheoremId::DiscreteFull,
        TheoremId::DiscreteW1,
        TheoremId::DiscreteW2,
        TheoremId::Sufficient,
        TheoremId::SufficientW1,
        TheoremId::SufficientW2,
        TheoremId::SufficientSmooth,
        TheoremId::SufficientPolyhedral,
        TheoremId::SufficientNonconvex,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::DiscreteAbstract => "T3.1",
            TheoremId::DiscreteFull => "T4.1",
            TheoremId::DiscreteW1 => "T4.2",
            TheoremId::DiscreteW2 => "T4.3",
            TheoremId::Sufficient => "T5.1",
            TheoremId::SufficientW1 => "C5.1",
            TheoremId::SufficientW2 => "T5.2",
            TheoremId::SufficientSmooth => "C5.2",
            TheoremId::SufficientPolyhedral => "C5.3",
            TheoremId::SufficientNonconvex => "T5.3",
        }
    }

    /// The certificate flavor the checker accepts.
    pub fn flavor(&self) -> Flavor {
        match self {
            TheoremId::DiscreteW1 | TheoremId::SufficientW1 => Flavor::W1Reduced,
            TheoremId::DiscreteW2 | TheoremId::SufficientW2 => Flavor::W2Reduced,
            TheoremId::SufficientPolyhedral => Flavor::Polyhedral,
            _ => Flavor::FullSsdfi,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            TheoremId::DiscreteAbstract
                | TheoremId::DiscreteFull
                | TheoremId::DiscreteW1
                | TheoremId::DiscreteW2
        )
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown theorem id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub label: String,
    /// Worst residual over the checked nodes.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Rows that are not required are reported but do not affect the verdict.
    pub required: bool,
    /// Residual scales linearly with the certificate (boundary rows against
    /// `∂q` do not).
    pub homogeneous: bool,
    pub worst_node: Option<usize>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub theorem: TheoremId,
    pub rows: Vec<ConditionRow>,
    /// Max norm over every certificate component.
    pub nontriviality: f64,
    pub trivial_tol: f64,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn row(&self, label: &str) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn failed_rows(&self) -> impl Iterator<Item = &ConditionRow> {
        self.rows.iter().filter(|r| r.required && !r.passed)
    }

    pub fn nontrivial(&self) -> bool {
        self.nontriviality > self.trivial_tol
    }

    /// Largest residual among required rows.
    pub fn max_required_residual(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.required)
            .fold(0.0, |m, r| m.max(r.residual))
    }
}

/// Analytic derivative grids. Missing entries are replaced by finite
/// differences of the corresponding grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Derivatives {
    pub traj_d1: Option<GridTrajectory>,
    pub traj_d2: Option<GridTrajectory>,
    pub xstar_d1: Option<GridTrajectory>,
    pub xstar_d2: Option<GridTrajectory>,
    pub ustar_d1: Option<GridTrajectory>,
    pub psistar_d1: Option<GridTrajectory>,
    pub alpha_d1: Option<Vec<Vec<f64>>>,
    pub alpha_d2: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub tol: f64,
    /// Activity threshold `|W_k| ≤ eps_act`; defaults to `tol`.
    pub eps_act: Option<f64>,
    pub trivial_tol: f64,
    pub derivatives: Option<Derivatives>,
    pub sample_count: usize,
    pub sample_radius: f64,
    pub seed: u64,
}

impl VerifyOptions {
    pub fn new(tol: f64) -> Self {
        VerifyOptions {
            tol,
            eps_act: None,
            trivial_tol: TRIVIAL_TOL,
            derivatives: None,
            sample_count: DEFAULT_SAMPLE_COUNT,
            sample_radius: DEFAULT_SAMPLE_RADIUS,
            seed: 0,
        }
    }

    pub fn with_derivatives(mut self, d: Derivatives) -> Self {
        self.derivatives = Some(d);
        self
    }

    fn eps_act(&self) -> f64 {
        self.eps_act.unwrap_or(self.tol)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) || !(self.eps_act() >= 0.0) || !(self.trivial_tol >= 0.0) {
            return Err(Error::Config("tolerances must be >= 0".into()));
        }
        if !(self.sample_radius > 0.0) {
            return Err(Error::Config("sample radius must be > 0".into()));
        }
        Ok(())
    }
}

/// Indices with `|W_k| ≤ eps_act`.
pub fn active_set(values: &[f64], eps_act: f64) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= eps_act)
        .map(|(k, _)| k)
        .collect()
}

/// Running maximum of a residual and the node where it occurred.
#[derive(Debug, Clone, Copy, Default)]
struct Worst {
    value: f64,
    node: Option<usize>,
}

impl Worst {
    fn update(&mut self, v: f64, node: usize) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.node.is_none() || v > self.value {
            self.value = v;
            self.node = Some(node);
        }
    }
}

struct Builder {
    theorem: TheoremId,
    rows: Vec<ConditionRow>,
    notes: Vec<String>,
}

impl Builder {
    fn new(theorem: TheoremId) -> Self {
        Builder {
            theorem,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, label: &str, w: Worst, tol: f64, required: bool, homogeneous: bool) -> &mut ConditionRow {
        self.rows.push(ConditionRow {
            label: label.to_string(),
            residual: w.value,
            tolerance: tol,
            passed: w.value <= tol,
            required,
            homogeneous,
            worst_node: w.node,
            note: None,
        });
        self.rows.last_mut().unwrap()
    }

    fn finish(self, cert: &Certificate, opts: &VerifyOptions) -> VerificationReport {
        let nontriviality = cert.max_norm();
        let passed = nontriviality > opts.trivial_tol
            && self.rows.iter().filter(|r| r.required).all(|r| r.passed);
        VerificationReport {
            theorem: self.theorem,
            rows: self.rows,
            nontriviality,
            trivial_tol: opts.trivial_tol,
            passed,
            notes: self.notes,
        }
    }
}

fn require_flavor(cert: &Certificate, theorem: TheoremId) -> Result<()> {
    let want = theorem.flavor();
    if cert.flavor != want {
        return Err(Error::Flavor(format!(
            "{} expects a {} certificate, got {}",
            theorem.as_str(),
            want.as_str(),
            cert.flavor.as_str()
        )));
    }
    Ok(())
}

fn check_grids(pc: &ContinuousProblem, traj: &GridTrajectory, cert: &Certificate) -> Result<()> {
    check_dim("trajectory grid steps", cert.grid().steps(), traj.grid().steps())?;
    check_dim("trajectory state dimension", pc.n(), traj.n())?;
    check_dim("certificate state dimension", pc.n(), cert.n())?;
    check_dim("certificate multiplier families", pc.m(), cert.m())
}

/// Subdifferential, with a finite-difference gradient for black boxes that
/// come without one.
fn subdiff_of(f: &ScalarFn, z: &[f64], t: f64) -> Result<SubdiffSet> {
    if f.has_gradient() {
        f.subdiff_at(z, t, DEFAULT_EPS_ACT)
    } else {
        let h = 1e-6 * z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        Ok(SubdiffSet::singleton(f.fd_gradient(z, t, h)?))
    }
}

fn pad(set: &SubdiffSet, dim: usize) -> SubdiffSet {
    let generators = set
        .generators
        .iter()
        .map(|g| {
            let mut v = DVector::zeros(dim);
            v.rows_mut(0, g.len()).copy_from(g);
            v
        })
        .collect();
    SubdiffSet {
        generators,
        is_singleton: set.is_singleton,
    }
}

/// Distance from `target` to `μ ∂f_pad + Σ_{k∈active} α_k ∂W_k` (restricted to
/// `keep` blocks). `f_set` is ∂f at the node, embedded in the first block.
fn membership_residual(
    target: &DVector<f64>,
    mu: f64,
    f_set: Option<&SubdiffSet>,
    w_sets: &[SubdiffSet],
    alphas: &[f64],
    active: &[usize],
) -> Result<f64> {
    let dim = target.len();
    let padded = f_set.map(|s| pad(s, dim));
    let mut sets: Vec<&SubdiffSet> = Vec::new();
    let mut weights = Vec::new();
    if let Some(p) = padded.as_ref() {
        if mu != 0.0 {
            sets.push(p);
            weights.push(mu);
        }
    }
    for &k in active {
        sets.push(&w_sets[k]);
        weights.push(alphas[k]);
    }
    if sets.is_empty() {
        return Ok(target.norm());
    }
    Ok(fixed_weight_residual(target, &weights, &sets)?.0)
}

/// Distance from `target` to `μ conv(∂q)`.
fn boundary_residual(q: &ScalarFn, x: &[f64], target: &[f64], mu: f64) -> Result<f64> {
    let set = subdiff_of(q, x, 1.0)?;
    let t = DVector::from_column_slice(target);
    if mu == 0.0 {
        return Ok(t.norm());
    }
    Ok(fixed_weight_residual(&t, &[mu], &[&set])?.0)
}

/// Sampled violation of `q(y) − q(x) ≥ ⟨target/μ, y − x⟩`.
fn boundary_sampled(q: &ScalarFn, x: &[f64], target: &[f64], mu: f64, opts: &VerifyOptions) -> Result<f64> {
    if mu == 0.0 {
        return Ok(target.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let g: Vec<f64> = target.iter().map(|v| v / mu).collect();
    subgradient_inequality_violation(q, x, &g, 1.0, opts.sample_count, opts.seed, opts.sample_radius)
}

/// Complementarity, sign and inactive-multiplier rows from `values[k][node]`.
fn slackness_rows(
    b: &mut Builder,
    cert: &Certificate,
    values: &[Vec<f64>],
    nodes: &[usize],
    opts: &VerifyOptions,
    labels: [&str; 3],
) {
    let eps = opts.eps_act();
    let mut comp = Worst::default();
    let mut sign = Worst::default();
    let mut inactive = Worst::default();
    for &i in nodes {
        for k in 0..cert.m() {
            let a = cert.alphas[k][i];
            let w = values[k][i];
            comp.update((a * w).abs(), i);
            sign.update((-a).max(0.0), i);
            inactive.update(if w.abs() > eps { a.abs() } else { 0.0 }, i);
        }
    }
    b.push(labels[0], comp, opts.tol, true, true);
    b.push(labels[1], sign, opts.tol, true, true);
    b.push(labels[2], inactive, opts.tol, true, true);
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn terminal_zero_row(b: &mut Builder, cert: &Certificate, tol: f64, label: &str) {
    let last = cert.grid().steps();
    let mut w = Worst::default();
    w.update(inf_norm(cert.xstar.x(last)), last);
    b.push(label, w, tol, true, true);
}

/// Informational: distance when the multipliers may be re-chosen freely.
fn free_alpha_row(b: &mut Builder, worst: Worst, tol: f64) {
    let r = b.push("membership with free multipliers", worst, tol, false, true);
    r.note = Some("multipliers re-fitted by nonnegative least squares".into());
}

// ---------------------------------------------------------------------------
// Discrete checkers

/// Checks the discrete conditions matching the certificate flavor:
/// full → `T4.1`, W1-reduced → `T4.2`, W2-reduced → `T4.3`.
pub fn verify_discrete(
    dp: &DiscreteProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    tol: f64,
) -> Result<VerificationReport> {
    verify_discrete_with(dp, traj, cert, &VerifyOptions::new(tol))
}

pub fn verify_discrete_with(
    dp: &DiscreteProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let theorem = match cert.flavor {
        Flavor::FullSsdfi => TheoremId::DiscreteFull,
        Flavor::W1Reduced => TheoremId::DiscreteW1,
        Flavor::W2Reduced => TheoremId::DiscreteW2,
        Flavor::Polyhedral => {
            return Err(Error::Flavor(
                "polyhedral certificates are checked by the continuous polyhedral checker".into(),
            ))
        }
    };
    discrete_checker(theorem, dp, traj, cert, opts)
}

/// The abstract discrete conditions over `Φ_k`, with the certificate mapped
/// back to the un-normalized multipliers `λ = δα` and adjoints `x*/δ`, `u*/δ`.
pub fn verify_discrete_abstract(
    dp: &DiscreteProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    discrete_checker(TheoremId::DiscreteAbstract, dp, traj, cert, opts)
}

/// Per-row data shared by the discrete checkers.
struct RowData {
    w_values: Vec<f64>,
    w_sets: Vec<SubdiffSet>,
    f_set: SubdiffSet,
}

fn row_data(dp: &DiscreteProblem, traj: &GridTrajectory, i: usize) -> Result<RowData> {
    let pc = dp.source();
    let z = dp.w_point(traj, i)?;
    let t = dp.grid().t(i);
    let mut w_values = Vec::with_capacity(dp.m());
    let mut w_sets = Vec::with_capacity(dp.m());
    for c in pc.constraints() {
        w_values.push(c.w.eval(&z)?);
        w_sets.push(subdiff_of(&c.w, &z, t)?);
    }
    Ok(RowData {
        w_values,
        w_sets,
        f_set: subdiff_of(pc.f(), traj.x(i), t)?,
    })
}

fn discrete_checker(
    theorem: TheoremId,
    dp: &DiscreteProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    opts.validate()?;
    let pc = dp.source();
    check_grids(pc, traj, cert)?;
    check_dim("certificate grid steps", dp.grid().steps(), cert.grid().steps())?;
    require_flavor(cert, theorem)?;
    match theorem {
        TheoremId::DiscreteW1 if pc.constraints().iter().any(|c| c.depends_on.v1) => {
            return Err(Error::Flavor("T4.2 needs every constraint independent of v1".into()))
        }
        TheoremId::DiscreteW2 if pc.constraints().iter().any(|c| c.depends_on.v2) => {
            return Err(Error::Flavor("T4.3 needs every constraint independent of v2".into()))
        }
        _ => {}
    }
    let grid = dp.grid();
    let steps = grid.steps();
    let n = dp.n();
    let delta = grid.delta();
    let inv = grid.inv_delta();
    let mu = cert.mu;
    let x = |k: usize, j: usize| cert.xstar.x(k)[j];
    let u = |k: usize, j: usize| cert.ustar.x(k)[j];
    let eps = opts.eps_act();

    let mut b = Builder::new(theorem);
    let mut inclusion = Worst::default();
    let mut free = Worst::default();
    let mut values = vec![vec![f64::NAN; steps + 1]; dp.m()];
    let nodes: Vec<usize> = (2..=steps - 2).collect();
    for &i in &nodes {
        let rd = row_data(dp, traj, i)?;
        for k in 0..dp.m() {
            values[k][i] = rd.w_values[k];
        }
        let active = active_set(&rd.w_values, eps);
        let alphas: Vec<f64> = (0..dp.m()).map(|k| cert.alphas[k][i]).collect();
        let (target, sets, weights, f_set): (Vec<f64>, Vec<SubdiffSet>, Vec<f64>, SubdiffSet) = match theorem {
            TheoremId::DiscreteFull => {
                let mut tg = Vec::with_capacity(3 * n);
                for j in 0..n {
                    tg.push((x(i, j) - u(i, j) + u(i + 1, j) - x(i + 2, j)) * inv * inv);
                }
                for j in 0..n {
                    tg.push((u(i + 1, j) - 2.0 * x(i + 2, j)) * inv);
                }
                for j in 0..n {
                    tg.push(-x(i + 2, j));
                }
                (tg, rd.w_sets, alphas, rd.f_set)
            }
            TheoremId::DiscreteAbstract => {
                // Φ-space: (x̂_t − û_t − μδf', û_{t+1}, −x̂_{t+2}) ∈ Σ λ ∂Φ.
                let mut tg = Vec::with_capacity(3 * n);
                for j in 0..n {
                    tg.push((x(i, j) - u(i, j)) * inv);
                }
                for j in 0..n {
                    tg.push(u(i + 1, j) * inv);
                }
                for j in 0..n {
                    tg.push(-x(i + 2, j) * inv);
                }
                let phi_sets = rd
                    .w_sets
                    .iter()
                    .map(|s| {
                        let generators = s
                            .generators
                            .iter()
                            .map(|g| {
                                let tri = SubgradTriple::from_stacked(g.as_slice())?;
                                Ok(DVector::from_vec(w_to_phi(&tri, delta)?.stacked()))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(SubdiffSet {
                            generators,
                            is_singleton: s.is_singleton,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut f_scaled = rd.f_set.clone();
                f_scaled.generators.iter_mut().for_each(|g| *g *= delta);
                (tg, phi_sets, alphas.iter().map(|a| a * delta).collect(), f_scaled)
            }
            TheoremId::DiscreteW1 => {
                let mut tg = Vec::with_capacity(2 * n);
                for j in 0..n {
                    tg.push((x(i + 2, j) - 2.0 * x(i + 1, j) + x(i, j)) * inv * inv);
                }
                for j in 0..n {
                    tg.push(-x(i + 2, j));
                }
                let sets = rd.w_sets.iter().map(|s| s.restrict_blocks(n, &[0, 2])).collect();
                (tg, sets, alphas, rd.f_set)
            }
            TheoremId::DiscreteW2 => {
                let mut tg = Vec::with_capacity(2 * n);
                for j in 0..n {
                    tg.push((u(i + 1, j) - u(i, j)) * inv);
                }
                for j in 0..n {
                    tg.push(u(i + 1, j));
                }
                let sets = rd.w_sets.iter().map(|s| s.restrict_blocks(n, &[0, 1])).collect();
                (tg, sets, alphas, rd.f_set)
            }
            _ => unreachable!("continuous theorem routed to discrete checker"),
        };
        let target = DVector::from_vec(target);
        inclusion.update(
            membership_residual(&target, mu, Some(&f_set), &sets, &weights, &active)?,
            i,
        );
        let shifted = shift_by_f(&target, mu, &f_set);
        let groups: Vec<&SubdiffSet> = active.iter().map(|&k| &sets[k]).collect();
        let (m, _) = grouped_cone_membership(&shifted, &groups, opts.tol)?;
        free.update(m.residual, i);
    }
    b.push("(a) adjoint inclusion", inclusion, opts.tol, true, true);
    free_alpha_row(&mut b, free, opts.tol);
    slackness_rows(
        &mut b,
        cert,
        &values,
        &nodes,
        opts,
        ["(b) complementary slackness", "(c) multiplier sign", "(c) inactive multipliers"],
    );

    // boundary at x̃(1−δ)
    let last = steps - 1;
    let xl = traj.x(last);
    let target: Vec<f64> = match theorem {
        TheoremId::DiscreteFull | TheoremId::DiscreteAbstract => {
            (0..n).map(|j| (x(last, j) - u(last, j)) * inv).collect()
        }
        TheoremId::DiscreteW1 => (0..n).map(|j| x(last, j) * inv).collect(),
        TheoremId::DiscreteW2 => (0..n).map(|j| -u(last, j)).collect(),
        _ => unreachable!(),
    };
    let mut bd = Worst::default();
    bd.update(boundary_residual(pc.q(), xl, &target, mu)?, last);
    b.push("(d) boundary condition", bd, opts.tol, true, false);
    let mut bs = Worst::default();
    bs.update(boundary_sampled(pc.q(), xl, &target, mu, opts)?, last);
    b.push("(d) boundary subgradient inequality", bs, opts.tol, true, false).note =
        Some(SAMPLED_NOTE.into());
    if matches!(theorem, TheoremId::DiscreteFull) {
        // ψ*(1) + Δx*(1−δ) ∈ μ∂q(x̃(1−δ)) as stated alongside the rewritten inclusions
        let psi = cert.psistar.x(steps);
        let alt: Vec<f64> = (0..n)
            .map(|j| psi[j] + (x(steps, j) - x(last, j)) * inv)
            .collect();
        let mut w = Worst::default();
        w.update(boundary_residual(pc.q(), xl, &alt, mu)?, last);
        b.push("(d) boundary condition, alternate statement form", w, opts.tol, false, false).note =
            Some("sign and node differ from the derived form; reported only".into());
    }
    terminal_zero_row(&mut b, cert, opts.tol, "(e) x*(1) = 0");
    Ok(b.finish(cert, opts))
}

fn shift_by_f(target: &DVector<f64>, mu: f64, f_set: &SubdiffSet) -> DVector<f64> {
    let mut out = target.clone();
    if mu != 0.0 {
        let g = &f_set.generators[0];
        for j in 0..g.len() {
            out[j] -= mu * g[j];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Continuous checkers

struct Resolved {
    d1: GridTrajectory,
    d2: GridTrajectory,
    xs_d1: GridTrajectory,
    xs_d2: GridTrajectory,
    us_d1: GridTrajectory,
    ps_d1: GridTrajectory,
    alpha_d1: Vec<Vec<f64>>,
    alpha_d2: Vec<Vec<f64>>,
    analytic_alpha: bool,
}

fn pick(given: Option<&GridTrajectory>, base: &GridTrajectory, order: u8) -> Result<GridTrajectory> {
    match given {
        Some(g) => {
            check_dim("derivative grid steps", base.grid().steps(), g.grid().steps())?;
            check_dim("derivative dimension", base.n(), g.n())?;
            Ok(g.clone())
        }
        None if order == 1 => fd::derivative_traj(base),
        None => fd::second_derivative_traj(base),
    }
}

fn resolve(traj: &GridTrajectory, cert: &Certificate, opts: &VerifyOptions) -> Result<Resolved> {
    let empty = Derivatives::default();
    let d = opts.derivatives.as_ref().unwrap_or(&empty);
    let h = cert.grid().delta();
    let alpha_fd = |order: u8| -> Result<Vec<Vec<f64>>> {
        cert.alphas
            .iter()
            .map(|a| if order == 1 { fd::derivative(a, h) } else { fd::second_derivative(a, h) })
            .collect()
    };
    let check_alpha = |a: &Vec<Vec<f64>>| -> Result<()> {
        check_dim("multiplier derivative families", cert.m(), a.len())?;
        for r in a {
            check_dim("multiplier derivative length", cert.grid().num_nodes(), r.len())?;
        }
        Ok(())
    };
    let alpha_d1 = match &d.alpha_d1 {
        Some(a) => {
            check_alpha(a)?;
            a.clone()
        }
        None => alpha_fd(1)?,
    };
    let alpha_d2 = match &d.alpha_d2 {
        Some(a) => {
            check_alpha(a)?;
            a.clone()
        }
        None => alpha_fd(2)?,
    };
    Ok(Resolved {
        d1: pick(d.traj_d1.as_ref(), traj, 1)?,
        d2: pick(d.traj_d2.as_ref(), traj, 2)?,
        xs_d1: pick(d.xstar_d1.as_ref(), &cert.xstar, 1)?,
        xs_d2: pick(d.xstar_d2.as_ref(), &cert.xstar, 2)?,
        us_d1: pick(d.ustar_d1.as_ref(), &cert.ustar, 1)?,
        ps_d1: pick(d.psistar_d1.as_ref(), &cert.psistar, 1)?,
        analytic_alpha: d.alpha_d1.is_some() && d.alpha_d2.is_some(),
        alpha_d1,
        alpha_d2,
    })
}

/// `(x̃(t), x̃'(t), x̃''(t))` stacked.
fn arc_point(traj: &GridTrajectory, r: &Resolved, i: usize) -> Vec<f64> {
    let mut z = traj.x(i).to_vec();
    z.extend_from_slice(r.d1.x(i));
    z.extend_from_slice(r.d2.x(i));
    z
}

struct NodeData {
    w_values: Vec<f64>,
    w_sets: Vec<SubdiffSet>,
    f_set: SubdiffSet,
    w_grads: Option<Vec<Vec<f64>>>,
}

fn node_data(pc: &ContinuousProblem, traj: &GridTrajectory, r: &Resolved, i: usize) -> Result<NodeData> {
    let z = arc_point(traj, r, i);
    let t = traj.grid().t(i);
    let mut w_values = Vec::with_capacity(pc.m());
    let mut w_sets = Vec::with_capacity(pc.m());
    for c in pc.constraints() {
        w_values.push(c.w.eval_at(&z, t)?);
        w_sets.push(subdiff_of(&c.w, &z, t)?);
    }
    let w_grads = if pc.constraints().iter().all(|c| c.w.is_smooth()) {
        Some(w_sets.iter().map(|s| s.generators[0].as_slice().to_vec()).collect())
    } else {
        None
    };
    Ok(NodeData {
        w_values,
        w_sets,
        f_set: subdiff_of(pc.f(), traj.x(i), t)?,
        w_grads,
    })
}

/// Continuous conditions (i)–(iii) (`T5.1`), plus the eliminated form for
/// differentiable constraints as an extra row.
pub fn verify_continuous(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    tol: f64,
) -> Result<VerificationReport> {
    verify_continuous_with(pc, traj, cert, &VerifyOptions::new(tol))
}

pub fn verify_continuous_with(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    continuous_full(TheoremId::Sufficient, pc, traj, cert, opts)
}

/// Same checks as [`verify_continuous_with`], reported under the smooth
/// eliminated form's identifier; every constraint must be differentiable.
pub fn verify_smooth_with(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    if !pc.constraints().iter().all(|c| c.w.is_smooth()) {
        return Err(Error::Flavor("C5.2 needs differentiable constraints".into()));
    }
    continuous_full(TheoremId::SufficientSmooth, pc, traj, cert, opts)
}

/// Sampled check of the nonconvex conditions (a1)–(d1).
pub fn verify_nonconvex(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    tol: f64,
    sample_count: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let mut opts = VerifyOptions::new(tol);
    opts.sample_count = sample_count;
    opts.seed = seed;
    verify_nonconvex_with(pc, traj, cert, &opts)
}

pub fn verify_nonconvex_with(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    continuous_full(TheoremId::SufficientNonconvex, pc, traj, cert, opts)
}

fn interior(traj: &GridTrajectory) -> Vec<usize> {
    (1..traj.grid().steps()).collect()
}

fn continuous_full(
    theorem: TheoremId,
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    opts.validate()?;
    check_grids(pc, traj, cert)?;
    require_flavor(cert, theorem)?;
    let nonconvex = theorem == TheoremId::SufficientNonconvex;
    let r = resolve(traj, cert, opts)?;
    let n = pc.n();
    let m = pc.m();
    let mu = cert.mu;
    let eps = opts.eps_act();
    let steps = traj.grid().steps();
    let nodes = interior(traj);

    let mut b = Builder::new(theorem);
    let mut inclusion = Worst::default();
    let mut free = Worst::default();
    let mut smooth = Worst::default();
    let mut smooth_ok = true;
    let mut values = vec![vec![f64::NAN; steps + 1]; m];
    // Σ α_k ∇_{v1}W_k and Σ α_k ∇_{v2}W_k on every node, for the eliminated form
    let mut g1 = vec![vec![0.0; steps + 1]; n];
    let mut g2 = vec![vec![0.0; steps + 1]; n];
    let mut gx = vec![vec![0.0; steps + 1]; n];
    let mut fprime = vec![vec![0.0; steps + 1]; n];
    for i in 0..=steps {
        let nd = node_data(pc, traj, &r, i)?;
        for k in 0..m {
            values[k][i] = nd.w_values[k];
        }
        match &nd.w_grads {
            Some(grads) => {
                for (k, g) in grads.iter().enumerate() {
                    let a = cert.alphas[k][i];
                    for j in 0..n {
                        gx[j][i] += a * g[j];
                        g1[j][i] += a * g[n + j];
                        g2[j][i] += a * g[2 * n + j];
                    }
                }
                for j in 0..n {
                    fprime[j][i] = nd.f_set.generators[0][j];
                }
            }
            None => smooth_ok = false,
        }
        if i == 0 || i == steps {
            continue;
        }
        let active = active_set(&nd.w_values, eps);
        let alphas: Vec<f64> = (0..m).map(|k| cert.alphas[k][i]).collect();
        let mut tg = Vec::with_capacity(3 * n);
        for j in 0..n {
            let head = r.xs_d2.x(i)[j] + r.ps_d1.x(i)[j];
            tg.push(if nonconvex { head - cert.xstar.x(i)[j] } else { head });
        }
        tg.extend_from_slice(cert.psistar.x(i));
        tg.extend(cert.xstar.x(i).iter().map(|v| -v));
        let target = DVector::from_vec(tg);
        let f_set = if nonconvex { None } else { Some(&nd.f_set) };
        inclusion.update(
            membership_residual(&target, mu, f_set, &nd.w_sets, &alphas, &active)?,
            i,
        );
        let shifted = match f_set {
            Some(s) => shift_by_f(&target, mu, s),
            None => target.clone(),
        };
        let groups: Vec<&SubdiffSet> = active.iter().map(|&k| &nd.w_sets[k]).collect();
        free.update(grouped_cone_membership(&shifted, &groups, opts.tol)?.0.residual, i);
    }
    let label_a = if nonconvex { "(a1) adjoint inclusion" } else { "(i) adjoint inclusion" };
    b.push(label_a, inclusion, opts.tol, true, true);
    free_alpha_row(&mut b, free, opts.tol);

    if smooth_ok && !nonconvex {
        // (Σα∇_{v2}W)'' − (Σα∇_{v1}W)' + Σα∇_xW + μf' = 0
        let affine = pc.constraints().iter().all(|c| c.w.is_affine());
        let exact = affine && r.analytic_alpha;
        let h = traj.grid().delta();
        let (mut d2g2, mut d1g1) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for j in 0..n {
            if exact {
                let mut a2 = vec![0.0; steps + 1];
                let mut a1 = vec![0.0; steps + 1];
                for (k, c) in pc.constraints().iter().enumerate() {
                    let FnKind::Affine(aff) = c.w.kind() else { unreachable!() };
                    let g = aff.gradient();
                    for i in 0..=steps {
                        a2[i] += r.alpha_d2[k][i] * g[2 * n + j];
                        a1[i] += r.alpha_d1[k][i] * g[n + j];
                    }
                }
                d2g2.push(a2);
                d1g1.push(a1);
            } else {
                d2g2.push(fd::second_derivative(&g2[j], h)?);
                d1g1.push(fd::derivative(&g1[j], h)?);
            }
        }
        for &i in &nodes {
            let mut s = 0.0_f64;
            for j in 0..n {
                let v = d2g2[j][i] - d1g1[j][i] + gx[j][i] + mu * fprime[j][i];
                s += v * v;
            }
            smooth.update(s.sqrt(), i);
        }
        let row = b.push("(i) eliminated form for differentiable W", smooth, opts.tol, true, true);
        row.note = Some(if exact {
            "product rule with supplied multiplier derivatives".into()
        } else {
            "finite differences of the weighted gradients".into()
        });
    }

    if nonconvex {
        let mut sup = Worst::default();
        for i in 0..=steps {
            let xi = traj.x(i);
            let v = subgradient_inequality_violation(
                pc.f(),
                xi,
                cert.xstar.x(i),
                traj.grid().t(i),
                opts.sample_count,
                opts.seed.wrapping_add(i as u64),
                opts.sample_radius,
            )?;
            sup.update(v, i);
        }
        b.push("(b1) support inequality for f", sup, opts.tol, true, false).note =
            Some(SAMPLED_NOTE.into());
        b.notes.push(SUPPORT_SLOPE_NOTE.into());
    }

    let labels = if nonconvex {
        ["(d1) complementary slackness", "(d1) multiplier sign", "(d1) inactive multipliers"]
    } else {
        ["(ii) complementary slackness", "(ii) multiplier sign", "(ii) inactive multipliers"]
    };
    slackness_rows(&mut b, cert, &values, &nodes, opts, labels);

    // −ψ*(1) − x*'(1) ∈ ∂q(x̃(1))
    let x1 = traj.x(steps);
    let target: Vec<f64> = (0..n)
        .map(|j| -cert.psistar.x(steps)[j] - r.xs_d1.x(steps)[j])
        .collect();
    if nonconvex {
        let mut c1 = Worst::default();
        c1.update(
            subgradient_inequality_violation(pc.q(), x1, &target, 1.0, opts.sample_count, opts.seed, opts.sample_radius)?,
            steps,
        );
        b.push("(c1) support inequality for q", c1, opts.tol, true, false).note = Some(SAMPLED_NOTE.into());
        terminal_zero_row(&mut b, cert, opts.tol, "(c1) x*(1) = 0");
    } else {
        let mut bd = Worst::default();
        bd.update(boundary_residual(pc.q(), x1, &target, mu)?, steps);
        b.push("(iii) boundary condition", bd, opts.tol, true, false);
        let mut bs = Worst::default();
        bs.update(boundary_sampled(pc.q(), x1, &target, mu, opts)?, steps);
        b.push("(iii) boundary subgradient inequality", bs, opts.tol, true, false).note =
            Some(SAMPLED_NOTE.into());
        terminal_zero_row(&mut b, cert, opts.tol, "(iii) x*(1) = 0");
    }
    Ok(b.finish(cert, opts))
}

/// Conditions (a)–(c) for constraints independent of `v1`.
pub fn verify_special_w1(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    tol: f64,
) -> Result<VerificationReport> {
    verify_special_w1_with(pc, traj, cert, &VerifyOptions::new(tol))
}

pub fn verify_special_w1_with(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    if pc.constraints().iter().any(|c| c.depends_on.v1) {
        return Err(Error::Flavor("C5.1 needs every constraint independent of v1".into()));
    }
    reduced_continuous(TheoremId::SufficientW1, pc, traj, cert, opts)
}

/// Conditions (d)–(f) for constraints independent of `v2`.
pub fn verify_special_w2(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    tol: f64,
) -> Result<VerificationReport> {
    verify_special_w2_with(pc, traj, cert, &VerifyOptions::new(tol))
}

pub fn verify_special_w2_with(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    if pc.constraints().iter().any(|c| c.depends_on.v2) {
        return Err(Error::Flavor("T5.2 needs every constraint independent of v2".into()));
    }
    reduced_continuous(TheoremId::SufficientW2, pc, traj, cert, opts)
}

fn reduced_continuous(
    theorem: TheoremId,
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    opts.validate()?;
    check_grids(pc, traj, cert)?;
    require_flavor(cert, theorem)?;
    let w1 = theorem == TheoremId::SufficientW1;
    let r = resolve(traj, cert, opts)?;
    let n = pc.n();
    let m = pc.m();
    let mu = cert.mu;
    let eps = opts.eps_act();
    let steps = traj.grid().steps();
    let nodes = interior(traj);
    let keep: &[usize] = if w1 { &[0, 2] } else { &[0, 1] };

    let mut b = Builder::new(theorem);
    let mut inclusion = Worst::default();
    let mut free = Worst::default();
    let mut values = vec![vec![f64::NAN; steps + 1]; m];
    for &i in &nodes {
        let nd = node_data(pc, traj, &r, i)?;
        for k in 0..m {
            values[k][i] = nd.w_values[k];
        }
        let sets: Vec<SubdiffSet> = nd.w_sets.iter().map(|s| s.restrict_blocks(n, keep)).collect();
        let active = active_set(&nd.w_values, eps);
        let alphas: Vec<f64> = (0..m).map(|k| cert.alphas[k][i]).collect();
        let mut tg = Vec::with_capacity(2 * n);
        if w1 {
            tg.extend_from_slice(r.xs_d2.x(i));
            tg.extend(cert.xstar.x(i).iter().map(|v| -v));
        } else {
            tg.extend_from_slice(r.us_d1.x(i));
            tg.extend_from_slice(cert.ustar.x(i));
        }
        let target = DVector::from_vec(tg);
        inclusion.update(
            membership_residual(&target, mu, Some(&nd.f_set), &sets, &alphas, &active)?,
            i,
        );
        let groups: Vec<&SubdiffSet> = active.iter().map(|&k| &sets[k]).collect();
        let shifted = shift_by_f(&target, mu, &nd.f_set);
        free.update(grouped_cone_membership(&shifted, &groups, opts.tol)?.0.residual, i);
    }
    b.push(if w1 { "(a) adjoint inclusion" } else { "(d) adjoint inclusion" }, inclusion, opts.tol, true, true);
    free_alpha_row(&mut b, free, opts.tol);

    let x1 = traj.x(steps);
    let target: Vec<f64> = if w1 {
        r.xs_d1.x(steps).iter().map(|v| -v).collect()
    } else {
        cert.ustar.x(steps).iter().map(|v| -v).collect()
    };
    let bl = if w1 { "(b) boundary condition" } else { "(e) boundary condition" };
    let mut bd = Worst::default();
    bd.update(boundary_residual(pc.q(), x1, &target, mu)?, steps);
    b.push(bl, bd, opts.tol, true, false);
    let mut bs = Worst::default();
    bs.update(boundary_sampled(pc.q(), x1, &target, mu, opts)?, steps);
    let bsl = if w1 { "(b) boundary subgradient inequality" } else { "(e) boundary subgradient inequality" };
    b.push(bsl, bs, opts.tol, true, false).note = Some(SAMPLED_NOTE.into());
    if w1 {
        terminal_zero_row(&mut b, cert, opts.tol, "(b) x*(1) = 0");
    } else {
        let mut z = Worst::default();
        for i in 0..=steps {
            z.update(inf_norm(cert.xstar.x(i)), i);
        }
        b.push("(d) x* vanishes", z, opts.tol, true, true);
    }
    let labels = if w1 {
        ["(c) complementary slackness", "(c) multiplier sign", "(c) inactive multipliers"]
    } else {
        ["(f) complementary slackness", "(f) multiplier sign", "(f) inactive multipliers"]
    };
    slackness_rows(&mut b, cert, &values, &nodes, opts, labels);
    Ok(b.finish(cert, opts))
}

/// Conditions (1)–(3) for affine constraints with `f ≡ 0`; `λ = alphas`.
pub fn verify_polyhedral(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    tol: f64,
) -> Result<VerificationReport> {
    verify_polyhedral_with(pc, traj, cert, &VerifyOptions::new(tol))
}

pub fn verify_polyhedral_with(
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    opts.validate()?;
    let theorem = TheoremId::SufficientPolyhedral;
    let n = pc.n();
    let mut blocks = Vec::with_capacity(pc.m());
    for c in pc.constraints() {
        match c.w.kind() {
            FnKind::Affine(a) => blocks.push(a.blocks(n)),
            _ => return Err(Error::Flavor("C5.3 needs affine constraints".into())),
        }
    }
    if !pc.running_cost_is_zero() {
        return Err(Error::Unsupported("C5.3 is stated for f ≡ 0".into()));
    }
    check_grids(pc, traj, cert)?;
    require_flavor(cert, theorem)?;
    let r = resolve(traj, cert, opts)?;
    let steps = traj.grid().steps();
    let nodes = interior(traj);
    let lam = &cert.alphas;
    let mut b = Builder::new(theorem);

    // (1) Qᵀλ'' + P1ᵀλ' − P0ᵀλ = 0
    let mut ode = Worst::default();
    for &i in &nodes {
        let mut s = 0.0_f64;
        for j in 0..n {
            let mut v = 0.0;
            for (k, (p0, p1, p2, _)) in blocks.iter().enumerate() {
                v += p2[j] * r.alpha_d2[k][i] + p1[j] * r.alpha_d1[k][i] - p0[j] * lam[k][i];
            }
            s += v * v;
        }
        ode.update(s.sqrt(), i);
    }
    b.push("(1) multiplier equation", ode, opts.tol, true, true);

    // (2) −ψ*(1) − x*'(1) with ψ* = P1ᵀλ, x* = Qᵀλ
    let x1 = traj.x(steps);
    let mut derived = vec![0.0; n];
    let mut literal = vec![0.0; n];
    for j in 0..n {
        for (k, (_, p1, p2, _)) in blocks.iter().enumerate() {
            derived[j] -= p2[j] * r.alpha_d1[k][steps] + p1[j] * lam[k][steps];
            literal[j] -= p1[j] * lam[k][steps];
        }
        literal[j] -= cert.xstar.x(steps)[j];
    }
    let mut bd = Worst::default();
    bd.update(boundary_residual(pc.q(), x1, &derived, cert.mu)?, steps);
    b.push("(2) boundary condition", bd, opts.tol, true, false).note =
        Some("−Qᵀλ'(1) − P1ᵀλ(1) ∈ ∂q(x̃(1))".into());
    let mut bl = Worst::default();
    bl.update(boundary_residual(pc.q(), x1, &literal, cert.mu)?, steps);
    b.push("(2) boundary condition, literal form", bl, opts.tol, false, false).note =
        Some("−x*(1) − P1ᵀλ(1) ∈ ∂q(x̃(1)); reported only".into());
    let mut xz = Worst::default();
    let mut qz = vec![0.0; n];
    for j in 0..n {
        for (k, (_, _, p2, _)) in blocks.iter().enumerate() {
            qz[j] += p2[j] * lam[k][steps];
        }
    }
    xz.update(inf_norm(cert.xstar.x(steps)).max(inf_norm(&qz)), steps);
    b.push("(2) x*(1) = 0", xz, opts.tol, true, true);

    // (3) ⟨P0x̃ + P1x̃' − Qx̃'' − d, λ⟩ = 0, λ ≥ 0
    let mut inner = Worst::default();
    let mut sign = Worst::default();
    for &i in &nodes {
        let z = arc_point(traj, &r, i);
        let mut s = 0.0;
        for (k, c) in pc.constraints().iter().enumerate() {
            s += c.w.eval(&z)? * lam[k][i];
            sign.update((-lam[k][i]).max(0.0), i);
        }
        inner.update(s.abs(), i);
    }
    b.push("(3) complementary slackness", inner, opts.tol, true, true);
    b.push("(3) multiplier sign", sign, opts.tol, true, true);
    Ok(b.finish(cert, opts))
}

/// Route to the checker for `theorem`. Discrete theorems discretize `pc` on
/// the certificate's grid.
pub fn verify_theorem(
    theorem: TheoremId,
    pc: &ContinuousProblem,
    traj: &GridTrajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    require_flavor(cert, theorem)?;
    match theorem {
        TheoremId::DiscreteAbstract
        | TheoremId::DiscreteFull
        | TheoremId::DiscreteW1
        | TheoremId::DiscreteW2 => {
            let dp = discretize(pc, cert.grid().steps())?;
            discrete_checker(theorem, &dp, traj, cert, opts)
        }
        TheoremId::Sufficient => verify_continuous_with(pc, traj, cert, opts),
        TheoremId::SufficientSmooth => verify_smooth_with(pc, traj, cert, opts),
        TheoremId::SufficientW1 => verify_special_w1_with(pc, traj, cert, opts),
        TheoremId::SufficientW2 => verify_special_w2_with(pc, traj, cert, opts),
        TheoremId::SufficientPolyhedral => verify_polyhedral_with(pc, traj, cert, opts),
        TheoremId::SufficientNonconvex => verify_nonconvex_with(pc, traj, cert, opts),
    }
}

// ---------------------------------------------------------------------------
// Sufficiency by sampling

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub samples: usize,
    /// Draws allowed before giving up (accepted or not).
    pub max_attempts: usize,
    /// Scale of the random perturbation coefficients.
    pub amplitude: f64,
    /// Number of smooth perturbation modes.
    pub modes: usize,
    pub feas_tol: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            samples: 1000,
            max_attempts: 100_000,
            amplitude: 0.1,
            modes: 3,
            feas_tol: crate::problem::DEFAULT_FEAS_TOL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingReport {
    pub j_opt: f64,
    pub accepted: usize,
    pub attempts: usize,
    pub acceptance_rate: f64,
    /// `min (J − J_opt)` over accepted samples.
    pub min_gap: f64,
    /// Accepted samples with `J < J_opt − 1e−9`.
    pub violations: usize,
    /// Set when no sample was accepted within the attempt budget.
    pub failure: Option<String>,
    pub passed: bool,
}

/// Objective gap tolerance for the sampled sufficiency test.
pub const SUFFICIENCY_GAP_TOL: f64 = 1e-9;

/// Random feasible perturbations `x = x̃ + Σ_m c_m φ_m` with
/// `φ_m(t) = t(t−δ)t^{m−1}` (vanishing on the two fixed nodes) and Gaussian
/// `c_m`; infeasible draws are discarded.
pub fn sufficiency_sampling_test(
    pc: &ContinuousProblem,
    traj_opt: &GridTrajectory,
    cfg: &SamplerConfig,
) -> Result<SamplingReport> {
    let dp = discretize(pc, traj_opt.grid().steps())?;
    sufficiency_sampling_discrete(&dp, traj_opt, cfg)
}

/// [`sufficiency_sampling_test`] on an already discretized problem.
pub fn sufficiency_sampling_discrete(
    dp: &DiscreteProblem,
    traj_opt: &GridTrajectory,
    cfg: &SamplerConfig,
) -> Result<SamplingReport> {
    if cfg.samples == 0 || cfg.modes == 0 {
        return Err(Error::Config("sampler needs samples >= 1 and modes >= 1".into()));
    }
    if !(cfg.amplitude >= 0.0) {
        return Err(Error::Config("sampler amplitude must be >= 0".into()));
    }
    let feas = dp.feasibility_residuals(traj_opt)?;
    if feas.max() > cfg.feas_tol {
        return Err(Error::Precondition(format!(
            "reference trajectory is infeasible (violation {:.3e})",
            feas.max()
        )));
    }
    let j_opt = dp.objective_discrete(traj_opt)?;
    let grid = dp.grid();
    let n = dp.n();
    let delta = grid.delta();
    let [x0, x1] = dp.fixed_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis: Vec<Vec<f64>> = (0..cfg.modes)
        .map(|m| {
            grid.times()
                .into_iter()
                .map(|t| t * (t - delta) * t.powi(m as i32))
                .collect()
        })
        .collect();
    let mut accepted = 0;
    let mut attempts = 0;
    let mut min_gap = f64::INFINITY;
    let mut violations = 0;
    let mut cand = traj_opt.clone();
    while accepted < cfg.samples && attempts < cfg.max_attempts {
        attempts += 1;
        cand.values_mut().copy_from_slice(traj_opt.values());
        for phi in &basis {
            for j in 0..n {
                let c: f64 = StandardNormal.sample(&mut rng);
                let c = c * cfg.amplitude;
                for (i, p) in phi.iter().enumerate() {
                    cand.x_mut(i)[j] += c * p;
                }
            }
        }
        cand.x_mut(0).copy_from_slice(&x0);
        cand.x_mut(1).copy_from_slice(&x1);
        if dp.feasibility_residuals(&cand)?.max() > cfg.feas_tol {
            continue;
        }
        accepted += 1;
        let gap = dp.objective_discrete(&cand)? - j_opt;
        min_gap = min_gap.min(gap);
        if gap < -SUFFICIENCY_GAP_TOL {
            violations += 1;
        }
    }
    let failure = (accepted == 0).then(|| {
        format!("no feasible sample in {attempts} attempts")
    });
    Ok(SamplingReport {
        j_opt,
        accepted,
        attempts,
        acceptance_rate: accepted as f64 / attempts.max(1) as f64,
        min_gap: if accepted == 0 { f64::NAN } else { min_gap },
        violations,
        passed: failure.is_none() && violations == 0,
        failure,
    })
}
