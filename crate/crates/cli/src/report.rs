//! Serializable views of solver results, certificates and verification
//! reports.

use std::time::{SystemTime, UNIX_EPOCH};

use bolza_core::adjoint::{lemma_identity_residual, Certificate};
use bolza_core::solver::{SolveResult, SolverConfig};
use bolza_core::verify::{ConditionRow, VerificationReport};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfigEcho {
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    pub grad_tol: f64,
    pub feas_tol: f64,
    pub armijo_shrink: f64,
    pub armijo_c1: f64,
    pub lbfgs_memory: usize,
    pub seed: u64,
    pub init_jitter: f64,
}

impl From<&SolverConfig> for SolverConfigEcho {
    fn from(c: &SolverConfig) -> Self {
        SolverConfigEcho {
            max_outer: c.max_outer,
            max_inner: c.max_inner,
            penalty_init: c.penalty_init,
            penalty_growth: c.penalty_growth,
            penalty_max: c.penalty_max,
            grad_tol: c.grad_tol,
            feas_tol: c.feas_tol,
            armijo_shrink: c.armijo_shrink,
            armijo_c1: c.armijo_c1,
            lbfgs_memory: c.lbfgs_memory,
            seed: c.seed,
            init_jitter: c.init_jitter,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub objective: f64,
    pub feasibility: f64,
    pub stationarity: f64,
    pub coordinate_stationarity: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub extrapolated_nodes: Vec<usize>,
}

impl From<&SolveResult> for SolveSummary {
    fn from(r: &SolveResult) -> Self {
        SolveSummary {
            objective: r.objective,
            feasibility: r.feasibility,
            stationarity: r.stationarity,
            coordinate_stationarity: r.coordinate_stationarity,
            outer_iters: r.outer_iters,
            inner_iters: r.inner_iters,
            converged: r.converged,
            extrapolated_nodes: r.extrapolated_nodes.clone(),
        }
    }
}

/// Scalar facts about a certificate; the grids go to the CSV sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub flavor: String,
    pub mu: f64,
    pub nontriviality: f64,
    pub lemma_identity_residual: f64,
}

impl From<&Certificate> for CertificateSummary {
    fn from(c: &Certificate) -> Self {
        CertificateSummary {
            flavor: c.flavor.as_str().to_string(),
            mu: c.mu,
            nontriviality: c.max_norm(),
            lemma_identity_residual: lemma_identity_residual(c),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RowView {
    pub label: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub required: bool,
    pub homogeneous: bool,
    pub worst_node: Option<usize>,
    pub note: Option<String>,
}

impl From<&ConditionRow> for RowView {
    fn from(r: &ConditionRow) -> Self {
        RowView {
            label: r.label.clone(),
            residual: r.residual,
            tolerance: r.tolerance,
            passed: r.passed,
            required: r.required,
            homogeneous: r.homogeneous,
            worst_node: r.worst_node,
            note: r.note.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportView {
    pub theorem: String,
    /// What was checked, e.g. "solver certificate".
    pub subject: String,
    pub passed: bool,
    pub nontriviality: f64,
    pub trivial_tol: f64,
    pub rows: Vec<RowView>,
    pub notes: Vec<String>,
}

impl ReportView {
    pub fn new(subject: &str, r: &VerificationReport) -> Self {
        ReportView {
            theorem: r.theorem.as_str().to_string(),
            subject: subject.to_string(),
            passed: r.passed,
            nontriviality: r.nontriviality,
            trivial_tol: r.trivial_tol,
            rows: r.rows.iter().map(RowView::from).collect(),
            notes: r.notes.clone(),
        }
    }
}

/// Seconds since the Unix epoch, the only field allowed to differ between
/// identical runs.
pub fn timestamp() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    secs.to_string()
}

/// Plain-text rendering of a verification report.
pub fn render(r: &VerificationReport, subject: &str) -> String {
    let mut out = format!(
        "{} ({subject}): {}  nontriviality {:.3e}\n",
        r.theorem.as_str(),
        if r.passed { "PASS" } else { "FAIL" },
        r.nontriviality
    );
    for row in &r.rows {
        out.push_str(&format!(
            "  [{}] {:<48} residual {:>10.3e}  tol {:>9.2e}{}\n",
            if row.passed { "ok" } else { "--" },
            row.label,
            row.residual,
            row.tolerance,
            if row.required { "" } else { "  (reported only)" }
        ));
    }
    for n in &r.notes {
        out.push_str(&format!("  note: {n}\n"));
    }
    out
}
