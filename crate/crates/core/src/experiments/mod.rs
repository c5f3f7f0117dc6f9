//! Reproducible studies that turn the asymptotic guarantees of the
//! multi-task SVM into measurable desk-scale checks.
//!
//! Every study is a pure function of its [`StudyConfig`]: each `(N, seed)`
//! record draws its dataset and Monte-Carlo points from sub-seeds of the
//! record seed, records may be computed on a worker pool in any order, and
//! the report is assembled in `(N, seed)` order.

mod report;
pub mod stats;
mod studies;

pub use report::{
    emit_report, write_csv_report, Check, GridSummary, ReportFormat, SlopeFit, StudyRecord,
    StudyReport, CSV_COLUMNS,
};
pub use studies::{
    convergence_study, equivalence_study, frequency_scaling_study, interaction_vanishing_study,
    run_study, Study,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SamplingSpec;
use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::risk::{DEFAULT_MC, MIN_MC};
use crate::solver::{RegularizationParams, SolverOptions};

/// How `(λ₁, λ₂)` vary across the sample-size grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LambdaSchedule {
    /// The configured values at every `N`.
    #[default]
    Fixed,
    /// `λ(N) = λ · (N / reference_n)^exponent`.
    Scaled { exponent: f64, reference_n: usize },
}

/// Pass/fail thresholds applied by the studies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Largest allowed median `U − U*` at the largest `N`.
    pub final_excess_u: f64,
    /// Size of the single rise tolerated in a decreasing median series.
    pub inversion_tolerance: f64,
    /// Largest allowed median task disagreement at the largest `N`.
    pub final_disagreement: f64,
    /// Minimum agreement with the Bayes rule on the evaluation grid at the largest `N`.
    pub grid_agreement: f64,
    pub grid_points: usize,
    pub deviation_slope_min: f64,
    pub deviation_slope_max: f64,
    pub frequency_error_slope_max: f64,
    /// Allowed factor between the largest-`N` frequency error and the
    /// `N^{-3/2}` trend extrapolated from the smallest `N`.
    pub envelope_factor: f64,
    pub shared_identity: f64,
    pub objective_gap: f64,
    /// Number of Monte-Carlo standard errors allowed in the bridge inequality.
    pub bridge_sigmas: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            final_excess_u: 0.02,
            inversion_tolerance: 0.005,
            final_disagreement: 0.02,
            grid_agreement: 0.95,
            grid_points: 1001,
            deviation_slope_min: -0.65,
            deviation_slope_max: -0.35,
            frequency_error_slope_max: -1.0,
            envelope_factor: 10.0,
            shared_identity: 1e-8,
            objective_gap: 1e-6,
            bridge_sigmas: 3.0,
        }
    }
}

fn default_n_mc() -> usize {
    DEFAULT_MC
}

fn default_surrogate_n() -> usize {
    2000
}

fn default_probes() -> usize {
    100
}

/// Configuration shared by all studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub spec: SamplingSpec,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub reg: RegularizationParams,
    #[serde(default)]
    pub kernel: GaussianKernel,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub lambda_schedule: LambdaSchedule,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Training size of the surrogate functions used by the frequency study.
    #[serde(default = "default_surrogate_n")]
    pub surrogate_n: usize,
    /// Probe points for pointwise identities.
    #[serde(default = "default_probes")]
    pub probes: usize,
}

impl StudyConfig {
    pub fn new(
        spec: SamplingSpec,
        n_grid: Vec<usize>,
        seeds: Vec<u64>,
        reg: RegularizationParams,
        kernel: GaussianKernel,
    ) -> Self {
        StudyConfig {
            spec,
            n_grid,
            seeds,
            reg,
            kernel,
            n_mc: DEFAULT_MC,
            solver: SolverOptions::default(),
            lambda_schedule: LambdaSchedule::Fixed,
            thresholds: Thresholds::default(),
            surrogate_n: default_surrogate_n(),
            probes: default_probes(),
        }
    }

    /// Checks what every study needs: a valid spec, a nonempty strictly
    /// increasing grid, at least one seed and an adequate Monte-Carlo size.
    pub fn validate_basic(&self) -> Result<()> {
        self.spec.validate()?;
        self.solver.validate()?;
        if self.n_grid.is_empty() {
            return Err(Error::invalid("n_grid must not be empty"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("n_grid must be strictly increasing"));
        }
        if self.n_grid[0] < self.spec.task_count() {
            return Err(Error::invalid(
                "n_grid entries must be at least the task count",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        if self.n_mc < MIN_MC {
            return Err(Error::invalid(format!("n_mc must be at least {MIN_MC}")));
        }
        if self.probes == 0 {
            return Err(Error::invalid("probes must be at least 1"));
        }
        if let LambdaSchedule::Scaled {
            exponent,
            reference_n,
        } = self.lambda_schedule
        {
            if !exponent.is_finite() || reference_n == 0 {
                return Err(Error::invalid(
                    "lambda_schedule needs a finite exponent and positive reference_n",
                ));
            }
        }
        Ok(())
    }

    /// Full invariants for a study run from a configuration file: at least
    /// three grid points, and enough seeds for scaling studies (10, or 50 for
    /// the frequency study).
    pub fn validate_for(&self, study: Study) -> Result<()> {
        self.validate_basic()?;
        if self.n_grid.len() < 3 {
            return Err(Error::invalid(format!(
                "n_grid needs at least 3 points, got {}",
                self.n_grid.len()
            )));
        }
        let min_seeds = match study {
            Study::Frequency => 50,
            Study::Convergence | Study::Interaction => 10,
            Study::Equivalence => 1,
        };
        if self.seeds.len() < min_seeds {
            return Err(Error::invalid(format!(
                "seeds: the {} study needs at least {min_seeds} seeds, got {}",
                study.name(),
                self.seeds.len()
            )));
        }
        Ok(())
    }

    /// Regularization at sample size `n` under the configured schedule.
    pub fn reg_at(&self, n: usize) -> Result<RegularizationParams> {
        match self.lambda_schedule {
            LambdaSchedule::Fixed => Ok(self.reg),
            LambdaSchedule::Scaled {
                exponent,
                reference_n,
            } => {
                let scale = (n as f64 / reference_n as f64).powf(exponent);
                RegularizationParams::new(self.reg.lambda1() * scale, self.reg.lambda2() * scale)
            }
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}
