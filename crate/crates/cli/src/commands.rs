//! The `solve`, `verify`, `converge` and `example51` commands.
//!
//! Every command returns an [`Outcome`] carrying the process exit code:
//! 0 pass, 1 verification failure, 2 input error, 3 solver failure.

use std::fmt;
use std::path::{Path, PathBuf};

use bolza_core::adjoint::{reconstruct_from_solution, reduce_to_w1, reduce_to_w2, Certificate};
use bolza_core::example51;
use bolza_core::problem::{discretize, GridTrajectory};
use bolza_core::solver::{solve, SolveResult, SolverConfig};
use bolza_core::verify::{
    verify_discrete_with, verify_special_w2_with, verify_theorem, TheoremId, VerificationReport, VerifyOptions,
};
use bolza_core::Error;
use serde::Serialize;

use crate::canonical;
use crate::gridio;
use crate::report::{self, CertificateSummary, ReportView, SolveSummary, SolverConfigEcho};
use crate::schema::{Analytic, ProblemFile};
use crate::svg::{line_chart, Series};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Residual tolerance for the analytic certificate with analytic derivatives.
pub const ANALYTIC_TOL: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CmdError {}

impl CmdError {
    pub fn input(msg: impl fmt::Display) -> Self {
        CmdError {
            code: EXIT_INPUT,
            message: msg.to_string(),
        }
    }

    pub fn solver(msg: impl fmt::Display) -> Self {
        CmdError {
            code: EXIT_SOLVER,
            message: msg.to_string(),
        }
    }

    fn stage(stage: &str, e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::Infeasible(_) => EXIT_SOLVER,
            _ => EXIT_INPUT,
        };
        CmdError {
            code,
            message: format!("{stage}: {e}"),
        }
    }
}

fn input_err(e: anyhow::Error) -> CmdError {
    CmdError::input(format!("{e:#}"))
}

/// Exit code plus the text printed on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub text: String,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CmdError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CmdError::input(format!("creating {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CmdError::input(format!("writing {}: {e}", path.display())))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn check_steps(n: usize) -> Result<(), CmdError> {
    if n < 4 {
        return Err(CmdError::input(format!("grid too small: N = {n}, need N >= 4")));
    }
    Ok(())
}

fn solver_config(seed: u64) -> SolverConfig {
    SolverConfig {
        seed,
        ..SolverConfig::default()
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CmdError> {
    canonical::to_string(v).map_err(|e| CmdError::input(format!("serializing report: {e}")))
}

fn verdict_code(converged: bool, passed: bool) -> i32 {
    if !converged {
        EXIT_SOLVER
    } else if passed {
        EXIT_PASS
    } else {
        EXIT_VERIFY_FAIL
    }
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub problem: PathBuf,
    pub n: usize,
    pub tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SolveConfigEcho<'a> {
    problem: &'a ProblemFile,
    n: usize,
    tol: f64,
    seed: u64,
    solver: SolverConfigEcho,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    config: SolveConfigEcho<'a>,
    solve: SolveSummary,
    certificate: Option<CertificateSummary>,
    verification: Vec<ReportView>,
    grid_csv: Option<String>,
    exit_code: i32,
    timestamp: String,
}

/// Discretize, solve, reconstruct the certificate, check the discrete
/// conditions and write the run report.
pub fn cmd_solve(opts: &SolveOptions) -> Result<Outcome, CmdError> {
    let file = ProblemFile::load(&opts.problem).map_err(input_err)?;
    let pc = file.to_problem().map_err(input_err)?;
    check_steps(opts.n)?;
    if !(opts.tol > 0.0) {
        return Err(CmdError::input("tolerance must be positive"));
    }
    let dp = discretize(&pc, opts.n).map_err(|e| CmdError::stage("discretize", e))?;
    let cfg = solver_config(opts.seed);
    let res = solve(&dp, &cfg, None).map_err(|e| CmdError::stage("solve", e))?;
    let cert = reconstruct_from_solution(&dp, &res).map_err(|e| CmdError::stage("reconstruct", e))?;
    let vopts = VerifyOptions {
        seed: opts.seed,
        ..VerifyOptions::new(opts.tol)
    };
    let main = verify_discrete_with(&dp, &res.trajectory, &cert, &vopts).map_err(|e| CmdError::stage("verify", e))?;
    let mut reports = vec![(String::from("solver certificate"), main.clone())];
    // reduced flavors, reported alongside when the constraints allow them
    if let Ok(red) = reduce_to_w2(&pc, &cert) {
        let r = verify_discrete_with(&dp, &res.trajectory, &red, &vopts).map_err(|e| CmdError::stage("verify", e))?;
        reports.push(("solver certificate, W2-reduced".into(), r));
    }
    if let Ok(red) = reduce_to_w1(&pc, &cert) {
        let r = verify_discrete_with(&dp, &res.trajectory, &red, &vopts).map_err(|e| CmdError::stage("verify", e))?;
        reports.push(("solver certificate, W1-reduced".into(), r));
    }
    let code = verdict_code(res.converged, main.passed);

    let mut text = format!(
        "N = {}  objective {:.10}  feasibility {:.2e}  stationarity {:.2e}  converged {}\n",
        opts.n, res.objective, res.feasibility, res.stationarity, res.converged
    );
    for (subject, r) in &reports {
        text.push_str(&report::render(r, subject));
    }
    let csv_path = opts.out.as_ref().map(|p| p.with_extension("csv"));
    if let Some(out) = &opts.out {
        let doc = SolveReport {
            command: "solve",
            config: SolveConfigEcho {
                problem: &file,
                n: opts.n,
                tol: opts.tol,
                seed: opts.seed,
                solver: (&cfg).into(),
            },
            solve: (&res).into(),
            certificate: Some((&cert).into()),
            verification: reports.iter().map(|(s, r)| ReportView::new(s, r)).collect(),
            grid_csv: csv_path.as_deref().map(file_name),
            exit_code: code,
            timestamp: report::timestamp(),
        };
        write_file(out, &to_json(&doc)?)?;
        write_file(csv_path.as_ref().unwrap(), &gridio::write_grid_csv(&res.trajectory, Some(&cert)))?;
    }
    if !res.converged {
        text.push_str("solver did not converge; see the report for the outer-iteration history\n");
    }
    Ok(Outcome { code, text })
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone)]
pub struct VerifyCmdOptions {
    pub problem: PathBuf,
    pub trajectory: PathBuf,
    pub certificate: PathBuf,
    pub theorem: String,
    pub tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct VerifyConfigEcho<'a> {
    problem: &'a ProblemFile,
    trajectory: String,
    certificate: String,
    theorem: String,
    tol: f64,
    seed: u64,
}

#[derive(Serialize)]
struct VerifyReportDoc<'a> {
    command: &'static str,
    config: VerifyConfigEcho<'a>,
    verification: ReportView,
    exit_code: i32,
    timestamp: String,
}

/// Check a stored (trajectory, certificate) pair against one condition set.
pub fn cmd_verify(opts: &VerifyCmdOptions) -> Result<Outcome, CmdError> {
    let theorem: TheoremId = opts.theorem.parse().map_err(|e: Error| CmdError::input(e))?;
    let file = ProblemFile::load(&opts.problem).map_err(input_err)?;
    let pc = file.to_problem().map_err(input_err)?;
    if !(opts.tol > 0.0) {
        return Err(CmdError::input("tolerance must be positive"));
    }
    let traj = gridio::read_trajectory(&opts.trajectory, pc.n()).map_err(input_err)?;
    let cert = gridio::read_certificate(&opts.certificate, pc.n(), pc.m()).map_err(input_err)?;
    check_steps(traj.grid().steps())?;
    let vopts = VerifyOptions {
        seed: opts.seed,
        ..VerifyOptions::new(opts.tol)
    };
    let rep = verify_theorem(theorem, &pc, &traj, &cert, &vopts).map_err(|e| CmdError::stage("verify", e))?;
    let code = if rep.passed { EXIT_PASS } else { EXIT_VERIFY_FAIL };
    if let Some(out) = &opts.out {
        let doc = VerifyReportDoc {
            command: "verify",
            config: VerifyConfigEcho {
                problem: &file,
                trajectory: file_name(&opts.trajectory),
                certificate: file_name(&opts.certificate),
                theorem: theorem.as_str().into(),
                tol: opts.tol,
                seed: opts.seed,
            },
            verification: ReportView::new("supplied certificate", &rep),
            exit_code: code,
            timestamp: report::timestamp(),
        };
        write_file(out, &to_json(&doc)?)?;
    }
    Ok(Outcome {
        code,
        text: report::render(&rep, "supplied certificate"),
    })
}

// ---------------------------------------------------------------------------
// converge

#[derive(Debug, Clone)]
pub struct ConvergeOptions {
    pub problem: PathBuf,
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConvergeRow {
    pub n: usize,
    pub delta: f64,
    pub converged: bool,
    pub objective: Option<f64>,
    /// `max_t |x_N(t) − x̃(t)|` when the problem carries an analytic optimum.
    pub error: Option<f64>,
    /// `max_t |x_N(t) − x_{N_prev}(t)|` on the coarser grid otherwise.
    pub cauchy: Option<f64>,
    /// `log(e_prev / e) / log(N / N_prev)`.
    pub order: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Serialize)]
struct ConvergeDoc<'a> {
    command: &'static str,
    config: ConvergeConfigEcho<'a>,
    metric: &'static str,
    rows: &'a [ConvergeRow],
    exit_code: i32,
    timestamp: String,
}

#[derive(Serialize)]
struct ConvergeConfigEcho<'a> {
    problem: &'a ProblemFile,
    n_list: &'a [usize],
    seed: u64,
}

/// Linear interpolation of `traj` at `t`.
fn interpolate(traj: &GridTrajectory, t: f64) -> Vec<f64> {
    let grid = traj.grid();
    let s = (t * grid.steps() as f64).clamp(0.0, grid.steps() as f64);
    let i = (s.floor() as usize).min(grid.steps() - 1);
    let w = s - i as f64;
    traj.x(i)
        .iter()
        .zip(traj.x(i + 1))
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

fn analytic_error(traj: &GridTrajectory, a: &Analytic) -> f64 {
    let grid = traj.grid();
    (0..=grid.steps()).fold(0.0, |m, i| m.max((traj.x(i)[0] - a.eval(grid.t(i))).abs()))
}

fn cauchy_difference(coarse: &GridTrajectory, fine: &GridTrajectory) -> f64 {
    let grid = coarse.grid();
    let mut m = 0.0_f64;
    for i in 0..=grid.steps() {
        let f = interpolate(fine, grid.t(i));
        for (a, b) in coarse.x(i).iter().zip(f) {
            m = m.max((a - b).abs());
        }
    }
    m
}

/// Solve at every N concurrently, then tabulate errors or Cauchy differences.
pub fn cmd_converge(opts: &ConvergeOptions) -> Result<Outcome, CmdError> {
    let file = ProblemFile::load(&opts.problem).map_err(input_err)?;
    let pc = file.to_problem().map_err(input_err)?;
    if opts.n_list.is_empty() {
        return Err(CmdError::input("--n-list is empty"));
    }
    for &n in &opts.n_list {
        check_steps(n)?;
    }
    if opts.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CmdError::input("--n-list must be strictly ascending"));
    }
    let cfg = solver_config(opts.seed);
    let results: Vec<Result<SolveResult, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = opts
            .n_list
            .iter()
            .map(|&n| {
                let pc = &pc;
                let cfg = &cfg;
                s.spawn(move || {
                    let dp = discretize(pc, n).map_err(|e| e.to_string())?;
                    solve(&dp, cfg, None).map_err(|e| e.to_string())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("solver thread panicked".into())))
            .collect()
    });

    let metric = if file.analytic.is_some() { "error" } else { "cauchy" };
    let mut rows: Vec<ConvergeRow> = Vec::with_capacity(results.len());
    let mut prev: Option<(usize, &GridTrajectory, f64)> = None;
    let mut ok = true;
    for (&n, res) in opts.n_list.iter().zip(&results) {
        let mut row = ConvergeRow {
            n,
            delta: 1.0 / n as f64,
            converged: false,
            objective: None,
            error: None,
            cauchy: None,
            order: None,
            failure: None,
        };
        match res {
            Err(e) => {
                row.failure = Some(e.clone());
                ok = false;
                prev = None;
            }
            Ok(r) => {
                row.converged = r.converged;
                row.objective = Some(r.objective);
                if !r.converged {
                    row.failure = Some("solver did not converge".into());
                    ok = false;
                }
                let value = if let Some(a) = &file.analytic {
                    let e = analytic_error(&r.trajectory, a);
                    row.error = Some(e);
                    Some(e)
                } else if let Some((_, coarse, _)) = prev {
                    let c = cauchy_difference(coarse, &r.trajectory);
                    row.cauchy = Some(c);
                    Some(c)
                } else {
                    None
                };
                // the order needs a metric on this row and on the previous one
                let prev_metric = rows.last().and_then(|p: &ConvergeRow| p.error.or(p.cauchy));
                if let (Some(v), Some(pm), Some((pn, _, _))) = (value, prev_metric, prev) {
                    if v > 0.0 && pm > 0.0 {
                        row.order = Some((pm / v).ln() / (n as f64 / pn as f64).ln());
                    }
                }
                prev = Some((n, &r.trajectory, value.unwrap_or(f64::NAN)));
            }
        }
        rows.push(row);
    }
    let code = if ok { EXIT_PASS } else { EXIT_SOLVER };

    let show_order = rows.len() > 1;
    let mut text = format!("{:>6} {:>12} {:>14} {:>12}{}\n", "N", "delta", "objective", metric, if show_order { "        order" } else { "" });
    for r in &rows {
        let m = r.error.or(r.cauchy);
        let cell = |v: Option<f64>, w: usize| match v {
            Some(v) => format!("{v:>w$.4e}"),
            None => format!("{:>w$}", "-"),
        };
        text.push_str(&format!(
            "{:>6} {:>12.4e} {} {}{}",
            r.n,
            r.delta,
            cell(r.objective, 14),
            cell(m, 12),
            if show_order { format!(" {}", cell(r.order, 12)) } else { String::new() }
        ));
        if let Some(f) = &r.failure {
            text.push_str(&format!("  FAILED: {f}"));
        }
        text.push('\n');
    }
    if let Some(out) = &opts.out {
        let doc = ConvergeDoc {
            command: "converge",
            config: ConvergeConfigEcho {
                problem: &file,
                n_list: &opts.n_list,
                seed: opts.seed,
            },
            metric,
            rows: &rows,
            exit_code: code,
            timestamp: report::timestamp(),
        };
        let json = to_json(&doc)?;
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| Some((r.n as f64, r.error.or(r.cauchy)?)))
            .collect();
        let svg = line_chart(
            "Refinement study",
            "N",
            if metric == "error" { "max error" } else { "Cauchy difference" },
            &[Series {
                name: metric.into(),
                points,
                dashed: false,
            }],
            true,
            true,
        );
        write_file(out, &json)?;
        write_file(&out.with_extension("svg"), &svg)?;
    }
    Ok(Outcome { code, text })
}

// ---------------------------------------------------------------------------
// example51

#[derive(Debug, Clone)]
pub struct Example51Options {
    pub n: usize,
    pub tol: f64,
    pub analytic_check: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Example51Errors {
    pub trajectory: f64,
    pub adjoint: f64,
    pub multiplier: f64,
    pub objective: f64,
    pub objective_error: f64,
}

#[derive(Serialize)]
struct Example51Doc {
    command: &'static str,
    config: Example51ConfigEcho,
    solve: SolveSummary,
    certificate: CertificateSummary,
    errors: Example51Errors,
    verification: Vec<ReportView>,
    grid_csv: Option<String>,
    exit_code: i32,
    timestamp: String,
}

#[derive(Serialize)]
struct Example51ConfigEcho {
    n: usize,
    tol: f64,
    solver_tol: f64,
    analytic_check: bool,
    seed: u64,
    solver: SolverConfigEcho,
}

/// Max-norm errors of the solver trajectory, the W2-reduced adjoint and the
/// multiplier against the closed forms, and the objective error.
pub fn example51_errors(res: &SolveResult, cert: &Certificate) -> Example51Errors {
    let grid = res.trajectory.grid();
    let mut e = Example51Errors {
        trajectory: 0.0,
        adjoint: 0.0,
        multiplier: 0.0,
        objective: res.objective,
        objective_error: (res.objective - example51::optimal_value()).abs(),
    };
    for i in 0..=grid.steps() {
        let t = grid.t(i);
        e.trajectory = e.trajectory.max((res.trajectory.x(i)[0] - example51::optimal_x(t)).abs());
        e.adjoint = e.adjoint.max((cert.ustar.x(i)[0] - example51::adjoint_u(t)).abs());
        e.multiplier = e.multiplier.max((cert.alphas[0][i] - example51::multiplier(t)).abs());
    }
    e
}

/// Solve the worked example end to end and compare with the closed forms.
pub fn cmd_example51(opts: &Example51Options) -> Result<Outcome, CmdError> {
    check_steps(opts.n)?;
    if !(opts.tol > 0.0) {
        return Err(CmdError::input("tolerance must be positive"));
    }
    let pc = example51::problem();
    let dp = discretize(&pc, opts.n).map_err(|e| CmdError::stage("discretize", e))?;
    let cfg = solver_config(opts.seed);
    let res = solve(&dp, &cfg, None).map_err(|e| CmdError::stage("solve", e))?;
    if !res.converged {
        return Err(CmdError::solver(format!(
            "solve: no convergence (feasibility {:.2e}, stationarity {:.2e})",
            res.feasibility, res.stationarity
        )));
    }
    let full = reconstruct_from_solution(&dp, &res).map_err(|e| CmdError::stage("reconstruct", e))?;
    let cert = reduce_to_w2(&pc, &full).map_err(|e| CmdError::stage("reconstruct", e))?;

    // solver certificate with finite-difference derivatives: O(δ) residuals
    let delta = 1.0 / opts.n as f64;
    let solver_tol = opts.tol.max(10.0 * delta);
    let vopts = VerifyOptions {
        seed: opts.seed,
        ..VerifyOptions::new(solver_tol)
    };
    let mut reports: Vec<(String, VerificationReport)> = vec![(
        "solver certificate".into(),
        verify_special_w2_with(&pc, &res.trajectory, &cert, &vopts).map_err(|e| CmdError::stage("verify", e))?,
    )];
    if opts.analytic_check {
        let arc = example51::optimal_trajectory(opts.n).map_err(|e| CmdError::stage("verify", e))?;
        let exact = example51::analytic_certificate(opts.n).map_err(|e| CmdError::stage("verify", e))?;
        let d = example51::analytic_derivatives(opts.n).map_err(|e| CmdError::stage("verify", e))?;
        let aopts = VerifyOptions {
            seed: opts.seed,
            ..VerifyOptions::new(ANALYTIC_TOL)
        }
        .with_derivatives(d);
        reports.push((
            "analytic certificate".into(),
            verify_special_w2_with(&pc, &arc, &exact, &aopts).map_err(|e| CmdError::stage("verify", e))?,
        ));
    }
    let passed = reports.iter().all(|(_, r)| r.passed);
    let code = if passed { EXIT_PASS } else { EXIT_VERIFY_FAIL };
    let errors = example51_errors(&res, &cert);

    let grid = res.trajectory.grid();
    let mut text = format!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
        "t", "x_N", "e^(t/3)", "u*", "-e^((1-t)/3)", "alpha_1", "e^((1-t)/3)/3"
    );
    let stride = (opts.n / 10).max(1);
    let mut nodes: Vec<usize> = (0..=opts.n).step_by(stride).collect();
    if *nodes.last().unwrap() != opts.n {
        nodes.push(opts.n);
    }
    for i in nodes {
        let t = grid.t(i);
        text.push_str(&format!(
            "{:>6.3} {:>12.8} {:>12.8} {:>12.8} {:>12.8} {:>12.8} {:>12.8}\n",
            t,
            res.trajectory.x(i)[0],
            example51::optimal_x(t),
            cert.ustar.x(i)[0],
            example51::adjoint_u(t),
            cert.alphas[0][i],
            example51::multiplier(t)
        ));
    }
    text.push_str(&format!(
        "minimal value {:.10} (e^(1/3) = {:.10}, error {:.3e})\n",
        errors.objective,
        example51::optimal_value(),
        errors.objective_error
    ));
    text.push_str(&format!(
        "max errors: trajectory {:.3e}  adjoint {:.3e}  multiplier {:.3e}\n",
        errors.trajectory, errors.adjoint, errors.multiplier
    ));
    for (subject, r) in &reports {
        text.push_str(&report::render(r, subject));
    }

    if let Some(out) = &opts.out {
        let csv_path = out.with_extension("csv");
        let doc = Example51Doc {
            command: "example51",
            config: Example51ConfigEcho {
                n: opts.n,
                tol: opts.tol,
                solver_tol,
                analytic_check: opts.analytic_check,
                seed: opts.seed,
                solver: (&cfg).into(),
            },
            solve: (&res).into(),
            certificate: (&cert).into(),
            errors: errors.clone(),
            verification: reports.iter().map(|(s, r)| ReportView::new(s, r)).collect(),
            grid_csv: Some(file_name(&csv_path)),
            exit_code: code,
            timestamp: report::timestamp(),
        };
        let times = grid.times();
        let svg = line_chart(
            "Trajectory overlay",
            "t",
            "x",
            &[
                Series {
                    name: "solver".into(),
                    points: times.iter().enumerate().map(|(i, &t)| (t, res.trajectory.x(i)[0])).collect(),
                    dashed: false,
                },
                Series {
                    name: "e^(t/3)".into(),
                    points: times.iter().map(|&t| (t, example51::optimal_x(t))).collect(),
                    dashed: true,
                },
            ],
            false,
            false,
        );
        write_file(out, &to_json(&doc)?)?;
        write_file(&csv_path, &gridio::write_grid_csv(&res.trajectory, Some(&cert)))?;
        write_file(&out.with_extension("svg"), &svg)?;
    }
    Ok(Outcome { code, text })
}
