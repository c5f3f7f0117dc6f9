//! Risk functionals: per-task and average misclassification error, hinge
//! generalization error, empirical error, the frequency error, and an
//! excess-risk decomposition.
//!
//! Monte-Carlo estimates integrate the label out analytically using the
//! generator's exact `η`: for a point `x` the misclassification integrand is
//! `(1−η)·1{f=+1} + η·1{f=−1}` and the hinge integrand is
//! `η·ℓ(f) + (1−η)·ℓ(−f)`. Draws are split into fixed-size batches with
//! sub-seeds derived from the master seed, so results do not depend on how
//! many worker threads evaluate them.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_dataset, sign_of_eta, Generator, SamplingSpec, TaskDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::solver::{hinge, train, Geometry, RegularizationParams, SolverOptions, TrainedModel};

/// Smallest Monte-Carlo sample accepted by the estimators.
pub const MIN_MC: usize = 1_000;
/// Default Monte-Carlo sample size.
pub const DEFAULT_MC: usize = 200_000;
const BATCH: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    /// Monte-Carlo standard error; zero for exact values.
    pub stderr: f64,
    pub n_mc: usize,
    pub method: Method,
}

impl RiskEstimate {
    pub fn exact(value: f64, method: Method) -> Self {
        RiskEstimate {
            value,
            stderr: 0.0,
            n_mc: 0,
            method,
        }
    }
}

/// Running sums of one or more integrands.
#[derive(Clone, Debug, Default)]
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Moments {
            n: 0,
            sum: vec![0.0; k],
            sum_sq: vec![0.0; k],
        }
    }

    fn push(&mut self, v: &[f64]) {
        self.n += 1;
        for (i, x) in v.iter().enumerate() {
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        self.n += other.n;
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self
    }

    fn estimate(&self, i: usize) -> RiskEstimate {
        let n = self.n as f64;
        let mean = self.sum[i] / n;
        let var = ((self.sum_sq[i] - n * mean * mean) / (n - 1.0)).max(0.0);
        RiskEstimate {
            value: mean,
            stderr: (var / n).sqrt(),
            n_mc: self.n,
            method: Method::MonteCarlo,
        }
    }
}

fn check_mc(n_mc: usize) -> Result<()> {
    if n_mc < MIN_MC {
        return Err(Error::invalid(format!(
            "n_mc must be at least {MIN_MC}, got {n_mc}"
        )));
    }
    Ok(())
}

/// Averages `k` integrands over `n_mc` draws of `X` from `gen`'s marginal.
/// `integrands(x, η(x), out)` fills `out` with the `k` values at `x`.
fn integrate_x<F>(gen: &Generator, n_mc: usize, seed: u64, k: usize, integrands: F) -> Moments
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    let batches = n_mc.div_ceil(BATCH);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng: ChaCha8Rng = stream(seed, &[b as u64]);
            let len = BATCH.min(n_mc - b * BATCH);
            let mut m = Moments::new(k);
            let mut out = vec![0.0; k];
            for _ in 0..len {
                let x = gen.draw_x(&mut rng);
                let eta = gen.eta_unchecked(&x);
                integrands(&x, eta, &mut out);
                m.push(&out);
            }
            m
        })
        .collect();
    parts.iter().fold(Moments::new(k), |acc, p| acc.merge(p))
}

#[inline]
fn misclass_integrand(label: i8, eta: f64) -> f64 {
    if label >= 0 {
        1.0 - eta
    } else {
        eta
    }
}

#[inline]
fn hinge_integrand(f: f64, eta: f64) -> f64 {
    eta * hinge(f) + (1.0 - eta) * hinge(-f)
}

/// `R_t(f) = P(f(X) ≠ Y)` for one task.
pub fn misclassification_error<C>(
    classifier: C,
    gen: &Generator,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate>
where
    C: Fn(&[f64]) -> i8 + Sync,
{
    check_mc(n_mc)?;
    gen.validate()?;
    let m = integrate_x(gen, n_mc, seed, 1, |x, eta, out| {
        out[0] = misclass_integrand(classifier(x), eta);
    });
    Ok(m.estimate(0))
}

/// Type of a per-task label function.
pub type Classifier<'a> = &'a (dyn Fn(&[f64]) -> i8 + Sync);
/// Type of a per-task real-valued decision function.
pub type Decision<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

fn check_per_task(count: usize, spec: &SamplingSpec) -> Result<()> {
    spec.validate()?;
    if count != spec.task_count() {
        return Err(Error::invalid(format!(
            "expected {} per-task functions, got {count}",
            spec.task_count()
        )));
    }
    Ok(())
}

fn combine(spec: &SamplingSpec, parts: &[RiskEstimate]) -> RiskEstimate {
    let value = spec
        .task_probs
        .iter()
        .zip(parts)
        .map(|(p, r)| p * r.value)
        .sum();
    let var: f64 = spec
        .task_probs
        .iter()
        .zip(parts)
        .map(|(p, r)| (p * r.stderr).powi(2))
        .sum();
    RiskEstimate {
        value,
        stderr: var.sqrt(),
        n_mc: parts.iter().map(|r| r.n_mc).sum(),
        method: Method::MonteCarlo,
    }
}

fn task_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, &[t as u64])
}

/// `U = Σ_t p(t) R_t(f_t)`, standard errors combined in quadrature.
pub fn average_misclassification(
    classifiers: &[Classifier<'_>],
    spec: &SamplingSpec,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    check_per_task(classifiers.len(), spec)?;
    let parts = classifiers
        .iter()
        .zip(&spec.generators)
        .enumerate()
        .map(|(t, (c, g))| misclassification_error(c, g, n_mc, task_seed(seed, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(spec, &parts))
}

/// `E = Σ_t p(t) E[ℓ(Y f_t(X))]`, estimated from labeled draws `(X, Y)`.
pub fn hinge_generalization_error(
    functions: &[Decision<'_>],
    spec: &SamplingSpec,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    check_per_task(functions.len(), spec)?;
    check_mc(n_mc)?;
    let parts: Vec<RiskEstimate> = functions
        .iter()
        .zip(&spec.generators)
        .enumerate()
        .map(|(t, (f, g))| {
            let seed = task_seed(seed, t);
            let batches = n_mc.div_ceil(BATCH);
            let parts: Vec<Moments> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let mut rng: ChaCha8Rng = stream(seed, &[b as u64]);
                    let mut m = Moments::new(1);
                    for _ in 0..BATCH.min(n_mc - b * BATCH) {
                        let (x, y) = g.draw(&mut rng);
                        m.push(&[hinge(f64::from(y) * f(&x))]);
                    }
                    m
                })
                .collect();
            parts
                .iter()
                .fold(Moments::new(1), |a, p| a.merge(p))
                .estimate(0)
        })
        .collect();
    Ok(combine(spec, &parts))
}

/// `E_z = (1/N) Σ_i ℓ(y_i f_{t_i}(x_i))`.
pub fn empirical_error(functions: &[Decision<'_>], data: &TaskDataset) -> Result<f64> {
    if functions.len() < data.task_count() {
        return Err(Error::invalid("fewer functions than dataset tasks"));
    }
    if data.is_empty() {
        return Err(Error::invalid("empirical error of an empty dataset"));
    }
    let total: f64 = data
        .samples()
        .iter()
        .map(|s| hinge(s.label() * functions[s.task](&s.x)))
        .sum();
    Ok(total / data.len() as f64)
}

/// Empirical hinge error of a trained model on `data`.
pub fn model_empirical_error(model: &TrainedModel, data: &TaskDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empirical error of an empty dataset"));
    }
    let mut total = 0.0;
    for s in data.samples() {
        total += hinge(s.label() * model.decision(&s.x, s.task)?);
    }
    Ok(total / data.len() as f64)
}

/// The frequency error
///
/// ```text
/// F = −(ρ₁/N) Σ_t (p(t) − m_t/N) ‖f_t‖²
///     + (ρ₂/N) ‖Σ_t (p(t) − m_t/N) f_t‖ · Σ_t ‖f_t − Σ_s (m_s/N) f_s‖
/// ```
///
/// for the task functions described by `geometry`, the true task
/// probabilities `task_probs` and observed counts `counts`.
pub fn frequency_error(
    geometry: &Geometry,
    task_probs: &[f64],
    counts: &[usize],
    reg: &RegularizationParams,
) -> Result<f64> {
    let t_count = geometry.tasks.len();
    if task_probs.len() != t_count || counts.len() != t_count {
        return Err(Error::invalid(
            "task probabilities, counts and model tasks differ in length",
        ));
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::invalid("counts sum to zero"));
    }
    let nf = n as f64;
    let freq: Vec<f64> = counts.iter().map(|&m| m as f64 / nf).collect();
    let dev: Vec<f64> = task_probs.iter().zip(&freq).map(|(p, w)| p - w).collect();
    if dev.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let own: f64 = dev
        .iter()
        .enumerate()
        .map(|(t, d)| d * geometry.task_norm(t).powi(2))
        .sum();
    let spread: f64 = (0..t_count)
        .map(|t| geometry.deviation_norm(t, &freq))
        .sum();
    Ok(-(reg.rho1() / nf) * own + (reg.rho2() / nf) * geometry.combination_norm(&dev) * spread)
}

/// `max_t |p(t) − m_t/N|`.
pub fn max_frequency_deviation(task_probs: &[f64], counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    task_probs
        .iter()
        .zip(counts)
        .map(|(p, &m)| (p - m as f64 / n as f64).abs())
        .fold(0.0, f64::max)
}

/// Per-task Monte-Carlo risks of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRisk {
    pub misclassification: RiskEstimate,
    pub hinge: RiskEstimate,
    pub bayes: f64,
}

impl TaskRisk {
    pub fn excess(&self) -> f64 {
        self.misclassification.value - self.bayes
    }
}

/// Risks of a model against a sampling spec, from one shared set of draws
/// per task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRisk {
    pub tasks: Vec<TaskRisk>,
    /// `U(sgn f_1, …, sgn f_T)`.
    pub average_misclassification: RiskEstimate,
    /// `E(f_1, …, f_T)`.
    pub generalization: RiskEstimate,
    /// `U*`.
    pub bayes_average: f64,
}

impl ModelRisk {
    /// `U − U*`.
    pub fn excess_u(&self) -> f64 {
        self.average_misclassification.value - self.bayes_average
    }

    /// `E − E*` with `E* = 2U*` for the hinge loss.
    pub fn excess_e(&self) -> f64 {
        self.generalization.value - 2.0 * self.bayes_average
    }

    /// `√(se_U² + se_E²)`.
    pub fn combined_stderr(&self) -> f64 {
        self.average_misclassification
            .stderr
            .hypot(self.generalization.stderr)
    }

    /// Slack of `U − U* ≤ E − E* + 3·se`; nonnegative when the bridge holds.
    pub fn bridge_slack(&self) -> f64 {
        self.excess_e() + 3.0 * self.combined_stderr() - self.excess_u()
    }
}

/// Estimates every task's misclassification and hinge risk for real-valued
/// decision functions, plus the averages `U` and `E`.
pub fn evaluate_functions(
    functions: &[Decision<'_>],
    spec: &SamplingSpec,
    n_mc: usize,
    seed: u64,
) -> Result<ModelRisk> {
    check_per_task(functions.len(), spec)?;
    check_mc(n_mc)?;
    let tasks = functions
        .iter()
        .zip(&spec.generators)
        .enumerate()
        .map(|(t, (f, g))| {
            let m = integrate_x(g, n_mc, task_seed(seed, t), 2, |x, eta, out| {
                let v = f(x);
                out[0] = misclass_integrand(if v >= 0.0 { 1 } else { -1 }, eta);
                out[1] = hinge_integrand(v, eta);
            });
            Ok(TaskRisk {
                misclassification: m.estimate(0),
                hinge: m.estimate(1),
                bayes: g.bayes_risk()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let u: Vec<RiskEstimate> = tasks.iter().map(|r| r.misclassification).collect();
    let e: Vec<RiskEstimate> = tasks.iter().map(|r| r.hinge).collect();
    Ok(ModelRisk {
        average_misclassification: combine(spec, &u),
        generalization: combine(spec, &e),
        bayes_average: spec.average_bayes_risk()?,
        tasks,
    })
}

/// [`evaluate_functions`] for a trained model.
pub fn evaluate_model(
    model: &TrainedModel,
    spec: &SamplingSpec,
    n_mc: usize,
    seed: u64,
) -> Result<ModelRisk> {
    if model.task_count() != spec.task_count() || model.dim() != spec.dim() {
        return Err(Error::invalid(
            "model and sampling spec disagree on tasks or dimension",
        ));
    }
    let fns: Vec<_> = (0..model.task_count())
        .map(|t| move |x: &[f64]| model.decision(x, t).unwrap_or(0.0))
        .collect();
    let refs: Vec<Decision<'_>> = fns.iter().map(|f| f as Decision<'_>).collect();
    evaluate_functions(&refs, spec, n_mc, seed)
}

/// `P_X[sgn a(X) ≠ sgn b(X)]` under `gen`'s marginal.
pub fn disagreement_rate<A, B>(
    a: A,
    b: B,
    gen: &Generator,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate>
where
    A: Fn(&[f64]) -> f64 + Sync,
    B: Fn(&[f64]) -> f64 + Sync,
{
    check_mc(n_mc)?;
    let m = integrate_x(gen, n_mc, seed, 1, |x, _, out| {
        out[0] = f64::from((a(x) >= 0.0) != (b(x) >= 0.0));
    });
    Ok(m.estimate(0))
}

/// Terms of the excess-risk decomposition. `sample_error`,
/// `regularization_error` and both frequency errors involve the large-sample
/// surrogate of the regularized-risk minimizer and are approximations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub excess_u: f64,
    pub excess_e: f64,
    pub stderr_u: f64,
    pub stderr_e: f64,
    pub sample_error: f64,
    /// Frequency error evaluated on the trained functions.
    pub frequency_error: f64,
    /// Frequency error evaluated on the surrogate functions.
    pub frequency_error_surrogate: f64,
    pub regularization_error: f64,
    pub surrogate_n: usize,
}

impl ErrorDecomposition {
    pub fn combined_stderr(&self) -> f64 {
        self.stderr_u.hypot(self.stderr_e)
    }
}

/// Options for [`excess_decomposition`].
#[derive(Clone, Copy, Debug)]
pub struct DecompositionOptions {
    pub surrogate_n: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

/// Splits the excess risk of `model` (trained on `data` drawn from `spec`)
/// into sample, regularization and frequency terms. The minimizer of the
/// regularized expected risk is replaced by a model trained on an
/// independent `surrogate_n`-sample dataset from the same spec.
pub fn excess_decomposition(
    model: &TrainedModel,
    spec: &SamplingSpec,
    data: &TaskDataset,
    opts: &DecompositionOptions,
) -> Result<ErrorDecomposition> {
    let n = data.len();
    if opts.surrogate_n < n {
        return Err(Error::invalid(
            "surrogate_n must be at least the training size",
        ));
    }
    let surrogate_spec = spec.with_seed(derive_seed(spec.seed, &[0x5u64, opts.surrogate_n as u64]));
    let surrogate_data = sample_dataset(&surrogate_spec, opts.surrogate_n)?.dataset;
    let surrogate = train(&surrogate_data, model.reg(), model.kernel(), &opts.solver)?.model;

    let z = evaluate_model(model, spec, opts.n_mc, opts.seed)?;
    let h = evaluate_model(&surrogate, spec, opts.n_mc, derive_seed(opts.seed, &[1]))?;
    let e_star = 2.0 * z.bayes_average;

    let ez_z = model_empirical_error(model, data)?;
    let ez_h = model_empirical_error(&surrogate, data)?;
    let sample_error = (z.generalization.value - ez_z) + (ez_h - h.generalization.value);

    let reg = model.reg();
    let nf = n as f64;
    let geo_h = surrogate.geometry();
    let p = &spec.task_probs;
    let penalty: f64 = (0..geo_h.tasks.len())
        .map(|t| {
            reg.rho1() / nf * p[t] * geo_h.task_norm(t).powi(2)
                + reg.rho2() / nf * geo_h.deviation_norm(t, p).powi(2)
        })
        .sum();
    let regularization_error = h.generalization.value - e_star + penalty;

    Ok(ErrorDecomposition {
        excess_u: z.excess_u(),
        excess_e: z.excess_e(),
        stderr_u: z.average_misclassification.stderr,
        stderr_e: z.generalization.stderr,
        sample_error,
        frequency_error: frequency_error(&model.geometry(), p, data.counts(), reg)?,
        frequency_error_surrogate: frequency_error(&geo_h, p, data.counts(), reg)?,
        regularization_error,
        surrogate_n: opts.surrogate_n,
    })
}

/// Largest support handled by [`bayes_oracle_finite`].
pub const MAX_FINITE_SUPPORT: usize = 12;

/// Outcome of exhaustive minimization of `E` over `±1` labelings.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteBayes {
    /// Per task, an `E`-minimizing labeling found by enumeration.
    pub minimizers: Vec<Vec<i8>>,
    /// Smallest `E` over all labelings.
    pub min_e: f64,
    /// `E` of the Bayes rules `sgn(η − 1/2)`.
    pub bayes_e: f64,
    /// Whether every minimizer equals the Bayes rule wherever `η ≠ 1/2`.
    pub agrees: bool,
    /// Number of labelings per task attaining the minimum.
    pub tie_counts: Vec<usize>,
}

/// Minimizes `E = Σ_t p(t) Σ_x μ_t(x) [η ℓ(f(x)) + (1−η) ℓ(−f(x))]` over all
/// labelings `f: X → {±1}` of a finite support by enumeration.
///
/// `eta[t][k]` and `weights[t][k]` give `η_t` and the marginal mass of point
/// `k` under task `t`.
pub fn bayes_oracle_finite(
    eta: &[Vec<f64>],
    weights: &[Vec<f64>],
    task_probs: &[f64],
) -> Result<FiniteBayes> {
    if eta.len() != weights.len() || eta.len() != task_probs.len() || eta.is_empty() {
        return Err(Error::invalid(
            "eta, weights and task_probs must have one entry per task",
        ));
    }
    let size = eta[0].len();
    if size > MAX_FINITE_SUPPORT {
        return Err(Error::Unsupported(format!(
            "enumeration over {size} points exceeds the limit of {MAX_FINITE_SUPPORT}"
        )));
    }
    if eta.iter().chain(weights).any(|v| v.len() != size) {
        return Err(Error::invalid(
            "every task needs one eta and one weight per point",
        ));
    }
    let mut minimizers = Vec::new();
    let mut tie_counts = Vec::new();
    let (mut min_e, mut bayes_e) = (0.0, 0.0);
    let mut agrees = true;
    for t in 0..eta.len() {
        let risk = |labels: &dyn Fn(usize) -> i8| -> f64 {
            (0..size)
                .map(|k| weights[t][k] * hinge_integrand(f64::from(labels(k)), eta[t][k]))
                .sum()
        };
        let bayes = risk(&|k| sign_of_eta(eta[t][k]));
        let mut best = f64::INFINITY;
        let mut best_mask = 0u32;
        let scores: Vec<f64> = (0..1u32 << size)
            .map(|mask| risk(&|k| if mask >> k & 1 == 1 { 1 } else { -1 }))
            .collect();
        for (mask, &s) in scores.iter().enumerate() {
            if s < best {
                best = s;
                best_mask = mask as u32;
            }
        }
        let ties = scores
            .iter()
            .filter(|&&s| (s - best).abs() <= 1e-12)
            .count();
        let labels: Vec<i8> = (0..size)
            .map(|k| if best_mask >> k & 1 == 1 { 1 } else { -1 })
            .collect();
        let pointwise = (0..size).all(|k| {
            eta[t][k] == 0.5 || weights[t][k] == 0.0 || labels[k] == sign_of_eta(eta[t][k])
        });
        agrees &= pointwise && (best - bayes).abs() <= 1e-12;
        min_e += task_probs[t] * best;
        bayes_e += task_probs[t] * bayes;
        minimizers.push(labels);
        tie_counts.push(ties);
    }
    Ok(FiniteBayes {
        minimizers,
        min_e,
        bayes_e,
        agrees,
        tie_counts,
    })
}
