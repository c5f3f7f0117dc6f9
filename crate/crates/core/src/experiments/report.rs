use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns of the CSV report, in order.
pub const CSV_COLUMNS: [&str; 14] = [
    "study",
    "config_hash",
    "N",
    "seed",
    "excess_u",
    "excess_e",
    "stderr_u",
    "freq_dev",
    "freq_error",
    "gap_eq5_eq6",
    "lemma1_resid",
    "kkt",
    "disagree",
    "converged",
];

/// One `(N, seed)` measurement. Quantities a study does not measure are `None`
/// and appear as empty CSV fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study: String,
    pub config_hash: String,
    pub n: usize,
    pub seed: u64,
    /// `U(sgn f^z) − U*`.
    pub excess_u: Option<f64>,
    /// `E(f^z) − E*`.
    pub excess_e: Option<f64>,
    /// Standard error of the `U` estimate.
    pub stderr_u: Option<f64>,
    /// Standard error of the `E` estimate.
    pub stderr_e: Option<f64>,
    /// `max_t |p(t) − m_t/N|`.
    pub freq_dev: Option<f64>,
    pub freq_error: Option<f64>,
    /// Relative gap between the coupled and the ρ-form primal objectives,
    /// `|P − P_ρ| / max(1, P)`; CSV column `gap_eq5_eq6`.
    pub objective_gap: Option<f64>,
    /// Largest probe residual of the shared-component identity; CSV column
    /// `lemma1_resid`.
    pub shared_resid: Option<f64>,
    pub kkt: Option<f64>,
    /// Mean over tasks of the multi-task vs single-task disagreement rate.
    pub disagree: Option<f64>,
    pub converged: bool,
    /// Per-task `R_t(sgn f_t) − R*_t`.
    pub task_excess: Vec<f64>,
    /// Per-task disagreement rates.
    pub task_disagree: Vec<f64>,
    /// Per-task agreement with the Bayes rule on an evaluation grid.
    pub grid_agreement: Vec<f64>,
    /// `U − U*` of the single-task baseline.
    pub baseline_excess_u: Option<f64>,
    /// Smallest slack of the trained-solution norm and loss bounds.
    pub bound_slack: Option<f64>,
    pub bound_violations: Option<usize>,
    /// Dual objective and the primal objective.
    pub dual_objective: Option<f64>,
    pub primal_objective: Option<f64>,
    pub redraws: u32,
    pub passes: usize,
}

impl StudyRecord {
    /// Bridge slack `excess_e + k·√(se_U² + se_E²) − excess_u`.
    pub fn bridge_slack(&self, sigmas: f64) -> Option<f64> {
        let (u, e) = (self.excess_u?, self.excess_e?);
        let se = self.stderr_u?.hypot(self.stderr_e?);
        Some(e + sigmas * se - u)
    }
}

/// A fitted log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub name: String,
    pub slope: Option<f64>,
    pub stderr: Option<f64>,
    /// Why the fit was skipped, when it was.
    pub skipped: Option<String>,
}

/// A named pass/fail assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Per-grid-point summary across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n: usize,
    pub median_excess_u: Option<f64>,
    pub median_disagree: Option<f64>,
    pub median_baseline_excess_u: Option<f64>,
    pub mean_freq_dev: Option<f64>,
    pub mean_abs_freq_error: Option<f64>,
    pub excluded: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub config_hash: String,
    pub records: Vec<StudyRecord>,
    pub summary: Vec<GridSummary>,
    pub slopes: Vec<SlopeFit>,
    pub checks: Vec<Check>,
    /// Records left out of medians because training did not converge.
    pub excluded: usize,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn slope(&self, name: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV rendering of the records under [`CSV_COLUMNS`].
pub fn write_csv_report(report: &StudyReport) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.study,
            r.config_hash,
            r.n,
            r.seed,
            opt(r.excess_u),
            opt(r.excess_e),
            opt(r.stderr_u),
            opt(r.freq_dev),
            opt(r.freq_error),
            opt(r.objective_gap),
            opt(r.shared_resid),
            opt(r.kkt),
            opt(r.disagree),
            r.converged
        );
    }
    out
}

/// Writes the report as CSV records or as the full JSON document.
pub fn emit_report(
    report: &StudyReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Csv => write_csv_report(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| Error::invalid(format!("report serialization failed: {e}")))?;
            s.push('\n');
            s
        }
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
