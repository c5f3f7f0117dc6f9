use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::report::{Check, GridSummary, SlopeFit, StudyRecord, StudyReport};
use super::stats::{loglog_slope, mean, median, non_increasing_with_one_inversion};
use super::StudyConfig;
use crate::data::{sample_dataset, Generator, TaskDataset};
use crate::error::{Error, Result};
use crate::risk::{
    disagreement_rate, evaluate_functions, evaluate_model, frequency_error,
    max_frequency_deviation, Decision,
};
use crate::rng::{derive_seed, stream};
use crate::solver::{
    bound_report, dual_objective, kkt_residual, primal_objective, primal_objective_rho,
    shared_component_residual, train, Fit, SolverOptions, TrainedModel,
};

/// The available studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Convergence,
    Interaction,
    Frequency,
    Equivalence,
}

impl Study {
    pub const ALL: [Study; 4] = [
        Study::Convergence,
        Study::Interaction,
        Study::Frequency,
        Study::Equivalence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::Convergence => "convergence",
            Study::Interaction => "interaction",
            Study::Frequency => "frequency",
            Study::Equivalence => "equivalence",
        }
    }
}

impl FromStr for Study {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Study::ALL.iter().map(|st| st.name()).collect();
                Error::invalid(format!(
                    "unknown study `{s}`; valid studies: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Validates `cfg` against the full study invariants and runs the study.
pub fn run_study(study: Study, cfg: &StudyConfig, jobs: usize) -> Result<StudyReport> {
    cfg.validate_for(study)?;
    match study {
        Study::Convergence => convergence_study(cfg, jobs),
        Study::Interaction => interaction_vanishing_study(cfg, jobs),
        Study::Frequency => frequency_scaling_study(cfg, jobs),
        Study::Equivalence => equivalence_study(cfg, jobs),
    }
}

// Sub-seed streams of one record seed.
const DATA: u64 = 0;
const SOLVER: u64 = 1;
const EVAL: u64 = 2;
const PROBES: u64 = 3;
const BASELINE: u64 = 4;
const SURROGATE: u64 = 5;

fn sub_seed(seed: u64, n: usize, stream_id: u64) -> u64 {
    derive_seed(seed, &[n as u64, stream_id])
}

/// Runs `f` on every `(N, seed)` pair on a pool of `jobs` workers and returns
/// the results in grid-major order.
fn for_each_record<T: Send>(
    cfg: &StudyConfig,
    jobs: usize,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let items: Vec<(usize, u64)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let jobs = if jobs == 0 {
        std::thread::available_parallelism().map_or(1, |p| p.get())
    } else {
        jobs
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(|&(n, s)| f(n, s)).collect())
}

struct Trained {
    data: TaskDataset,
    redraws: u32,
    fit: Fit,
}

fn train_record(cfg: &StudyConfig, n: usize, seed: u64) -> Result<Trained> {
    let draw = sample_dataset(&cfg.spec.with_seed(sub_seed(seed, n, DATA)), n)?;
    let opts = SolverOptions {
        seed: sub_seed(seed, n, SOLVER),
        ..cfg.solver
    };
    let fit = train(&draw.dataset, &cfg.reg_at(n)?, &cfg.kernel, &opts)?;
    Ok(Trained {
        data: draw.dataset,
        redraws: draw.redraws,
        fit,
    })
}

fn base_record(study: Study, cfg_hash: &str, n: usize, seed: u64) -> StudyRecord {
    StudyRecord {
        study: study.name().to_string(),
        config_hash: cfg_hash.to_string(),
        n,
        seed,
        ..Default::default()
    }
}

fn probe_points(cfg: &StudyConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng: ChaCha8Rng = stream(seed, &[]);
    let gens = &cfg.spec.generators;
    (0..cfg.probes)
        .map(|k| gens[k % gens.len()].draw_x(&mut rng))
        .collect()
}

/// Fills the solver-identity columns of `rec` for a trained model.
fn record_identities(
    rec: &mut StudyRecord,
    cfg: &StudyConfig,
    t: &Trained,
    probe_seed: u64,
) -> Result<()> {
    let model = &t.fit.model;
    let coupled = primal_objective(model, &t.data)?;
    let rho_form = primal_objective_rho(model, &t.data)?;
    rec.objective_gap = Some((coupled - rho_form).abs() / coupled.max(1.0));
    rec.primal_objective = Some(coupled);
    rec.dual_objective = Some(dual_objective(model, &t.data)?);
    rec.shared_resid = Some(shared_component_residual(
        model,
        &probe_points(cfg, probe_seed),
    )?);
    rec.kkt = Some(kkt_residual(model, &t.data)?);
    let l6 = bound_report(model, &t.data)?;
    rec.bound_slack = Some(l6.min_slack());
    rec.bound_violations = Some(l6.violations());
    rec.converged = t.fit.converged;
    rec.redraws = t.redraws;
    rec.passes = t.fit.passes;
    rec.freq_dev = Some(max_frequency_deviation(
        &cfg.spec.task_probs,
        t.data.counts(),
    ));
    Ok(())
}

/// Fraction of an evenly spaced grid over the marginal's support where
/// `sgn f_t` equals the Bayes rule. Only defined for 1-D box marginals.
fn grid_agreement(
    model: &TrainedModel,
    gen: &Generator,
    t: usize,
    points: usize,
) -> Result<Option<f64>> {
    let (low, high) = match gen {
        Generator::FlipNoiseThreshold { low, high, .. }
        | Generator::SmoothLogistic { low, high, .. } => (*low, *high),
        Generator::GaussianMixture { .. } => return Ok(None),
    };
    if gen.dim() != 1 || points < 2 {
        return Ok(None);
    }
    let mut hits = 0;
    for k in 0..points {
        let x = [low + (high - low) * k as f64 / (points - 1) as f64];
        let (_, label) = model.predict_task(&x, t)?;
        hits += usize::from(label == gen.bayes_label(&x)?);
    }
    Ok(Some(hits as f64 / points as f64))
}

fn record_risks(
    rec: &mut StudyRecord,
    cfg: &StudyConfig,
    model: &TrainedModel,
    eval_seed: u64,
) -> Result<()> {
    let risk = evaluate_model(model, &cfg.spec, cfg.n_mc, eval_seed)?;
    rec.excess_u = Some(risk.excess_u());
    rec.excess_e = Some(risk.excess_e());
    rec.stderr_u = Some(risk.average_misclassification.stderr);
    rec.stderr_e = Some(risk.generalization.stderr);
    rec.task_excess = risk.tasks.iter().map(|r| r.excess()).collect();
    Ok(())
}

/// Medians over converged records at each grid point.
fn grid_medians(
    cfg: &StudyConfig,
    records: &[StudyRecord],
    value: impl Fn(&StudyRecord) -> Option<f64>,
) -> Vec<Option<f64>> {
    cfg.n_grid
        .iter()
        .map(|&n| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.converged)
                .filter_map(&value)
                .collect();
            median(&v)
        })
        .collect()
}

fn excluded_at(records: &[StudyRecord], n: usize) -> usize {
    records.iter().filter(|r| r.n == n && !r.converged).count()
}

fn monotone_check(name: &str, series: &[Option<f64>], tolerance: f64) -> Check {
    if series.len() < 2 {
        return Check::new(name, true, "skipped: fewer than two grid points");
    }
    let Some(values) = series.iter().copied().collect::<Option<Vec<f64>>>() else {
        return Check::new(name, false, "some grid point has no converged record");
    };
    Check::new(
        name,
        non_increasing_with_one_inversion(&values, tolerance),
        format!("medians {values:?}, one rise of at most {tolerance} allowed"),
    )
}

fn bridge_check(records: &[StudyRecord], sigmas: f64) -> Check {
    let slacks: Vec<f64> = records
        .iter()
        .filter_map(|r| r.bridge_slack(sigmas))
        .collect();
    let worst = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    let failures = slacks.iter().filter(|&&s| s < 0.0).count();
    Check::new(
        "bridge_inequality",
        failures == 0 && slacks.len() == records.len(),
        format!("{failures} violations of excess_u <= excess_e + {sigmas} se; smallest slack {worst:.3e}"),
    )
}

fn bound_check(records: &[StudyRecord]) -> Check {
    let violations: usize = records.iter().filter_map(|r| r.bound_violations).sum();
    let worst = records
        .iter()
        .filter_map(|r| r.bound_slack)
        .fold(f64::INFINITY, f64::min);
    Check::new(
        "norm_and_loss_bounds",
        violations == 0,
        format!("{violations} violations; smallest slack {worst:.3e}"),
    )
}

fn summarize(cfg: &StudyConfig, records: &[StudyRecord]) -> Vec<GridSummary> {
    let u = grid_medians(cfg, records, |r| r.excess_u);
    let d = grid_medians(cfg, records, |r| r.disagree);
    cfg.n_grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let at: Vec<&StudyRecord> = records.iter().filter(|r| r.n == n).collect();
            let devs: Vec<f64> = at.iter().filter_map(|r| r.freq_dev).collect();
            let fe: Vec<f64> = at
                .iter()
                .filter_map(|r| r.freq_error.map(f64::abs))
                .collect();
            GridSummary {
                n,
                median_excess_u: u[g],
                median_disagree: d[g],
                median_baseline_excess_u: median(
                    &at.iter()
                        .filter_map(|r| r.baseline_excess_u)
                        .collect::<Vec<_>>(),
                ),
                mean_freq_dev: (!devs.is_empty()).then(|| mean(&devs)),
                mean_abs_freq_error: (!fe.is_empty()).then(|| mean(&fe)),
                excluded: excluded_at(records, n),
            }
        })
        .collect()
}

fn finish(
    study: Study,
    cfg: &StudyConfig,
    records: Vec<StudyRecord>,
    slopes: Vec<SlopeFit>,
    checks: Vec<Check>,
) -> StudyReport {
    StudyReport {
        study: study.name().to_string(),
        config_hash: cfg.hash(),
        summary: summarize(cfg, &records),
        excluded: records.iter().filter(|r| !r.converged).count(),
        records,
        slopes,
        checks,
    }
}

/// Excess misclassification risk of the trained multi-task classifier as the
/// sample size grows.
pub fn convergence_study(cfg: &StudyConfig, jobs: usize) -> Result<StudyReport> {
    cfg.validate_basic()?;
    let hash = cfg.hash();
    let th = cfg.thresholds;
    let records = for_each_record(cfg, jobs, |n, seed| {
        let t = train_record(cfg, n, seed)?;
        let mut rec = base_record(Study::Convergence, &hash, n, seed);
        record_identities(&mut rec, cfg, &t, sub_seed(seed, n, PROBES))?;
        record_risks(&mut rec, cfg, &t.fit.model, sub_seed(seed, n, EVAL))?;
        rec.freq_error = Some(frequency_error(
            &t.fit.model.geometry(),
            &cfg.spec.task_probs,
            t.data.counts(),
            t.fit.model.reg(),
        )?);
        rec.grid_agreement = (0..cfg.spec.task_count())
            .map(|task| {
                grid_agreement(
                    &t.fit.model,
                    &cfg.spec.generators[task],
                    task,
                    th.grid_points,
                )
            })
            .collect::<Result<Option<Vec<f64>>>>()?
            .unwrap_or_default();
        Ok(rec)
    })?;

    let medians = grid_medians(cfg, &records, |r| r.excess_u);
    let last_n = *cfg.n_grid.last().expect("nonempty grid");
    let mut checks = vec![monotone_check(
        "median_excess_u_non_increasing",
        &medians,
        th.inversion_tolerance,
    )];
    let final_median = *medians.last().expect("nonempty grid");
    checks.push(Check::new(
        "final_median_excess_u",
        final_median.is_some_and(|m| m <= th.final_excess_u),
        format!(
            "median excess_u at N={last_n}: {final_median:?} (limit {})",
            th.final_excess_u
        ),
    ));
    checks.push(bridge_check(&records, th.bridge_sigmas));
    let agreement: Vec<f64> = records
        .iter()
        .filter(|r| r.n == last_n)
        .flat_map(|r| r.grid_agreement.iter().copied())
        .collect();
    if !agreement.is_empty() {
        let worst = agreement.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            "grid_agreement",
            worst >= th.grid_agreement,
            format!(
                "smallest per-task agreement with the Bayes rule on {} grid points at N={last_n}: {worst} (limit {})",
                th.grid_points, th.grid_agreement
            ),
        ));
    }
    checks.push(bound_check(&records));
    Ok(finish(Study::Convergence, cfg, records, Vec::new(), checks))
}

/// Agreement between the multi-task classifiers and independently trained
/// single-task classifiers as the sample size grows.
///
/// The single-task baseline for task `t` is the same solver run on task
/// `t`'s samples alone with the same `(λ₁, λ₂)`; with one task the coupled
/// objective reduces to `Σ ξ + ρ₁‖f‖²`.
pub fn interaction_vanishing_study(cfg: &StudyConfig, jobs: usize) -> Result<StudyReport> {
    cfg.validate_basic()?;
    let hash = cfg.hash();
    let th = cfg.thresholds;
    let records = for_each_record(cfg, jobs, |n, seed| {
        let t = train_record(cfg, n, seed)?;
        let mut rec = base_record(Study::Interaction, &hash, n, seed);
        record_identities(&mut rec, cfg, &t, sub_seed(seed, n, PROBES))?;
        record_risks(&mut rec, cfg, &t.fit.model, sub_seed(seed, n, EVAL))?;
        let reg = cfg.reg_at(n)?;
        let opts = SolverOptions {
            seed: sub_seed(seed, n, SOLVER),
            ..cfg.solver
        };
        let mut converged = t.fit.converged;
        let mut singles = Vec::with_capacity(cfg.spec.task_count());
        for (task, gen) in cfg.spec.generators.iter().enumerate() {
            let single = train(&t.data.task_subset(task)?, &reg, &cfg.kernel, &opts)?;
            converged &= single.converged;
            let mtl = &t.fit.model;
            let d = disagreement_rate(
                |x| mtl.decision(x, task).unwrap_or(0.0),
                |x| single.model.decision(x, 0).unwrap_or(0.0),
                gen,
                cfg.n_mc,
                derive_seed(sub_seed(seed, n, BASELINE), &[task as u64]),
            )?;
            rec.task_disagree.push(d.value);
            singles.push(single.model);
        }
        // same Monte-Carlo points as the multi-task evaluation
        let fns: Vec<_> = singles
            .iter()
            .map(|m| move |x: &[f64]| m.decision(x, 0).unwrap_or(0.0))
            .collect();
        let refs: Vec<Decision<'_>> = fns.iter().map(|f| f as Decision<'_>).collect();
        let baseline = evaluate_functions(&refs, &cfg.spec, cfg.n_mc, sub_seed(seed, n, EVAL))?;
        rec.baseline_excess_u = Some(baseline.excess_u());
        rec.converged = converged;
        rec.disagree = Some(mean(&rec.task_disagree));
        Ok(rec)
    })?;

    let last_n = *cfg.n_grid.last().expect("nonempty grid");
    let mut checks = Vec::new();
    for task in 0..cfg.spec.task_count() {
        let series = grid_medians(cfg, &records, |r| r.task_disagree.get(task).copied());
        let mut c = monotone_check(
            &format!("task{}_disagreement_decreasing", task + 1),
            &series,
            th.inversion_tolerance,
        );
        if let (Some(Some(first)), Some(Some(last))) = (series.first(), series.last()) {
            if series.len() > 1 && !(last < first || *last == 0.0) {
                c.passed = false;
                c.detail.push_str("; last median is not below the first");
            }
        }
        checks.push(c);
        let last = *series.last().expect("nonempty grid");
        checks.push(Check::new(
            &format!("task{}_final_disagreement", task + 1),
            last.is_some_and(|d| d <= th.final_disagreement),
            format!(
                "median disagreement at N={last_n}: {last:?} (limit {})",
                th.final_disagreement
            ),
        ));
    }
    for (name, series) in [
        (
            "multi_task_excess_u",
            grid_medians(cfg, &records, |r| r.excess_u),
        ),
        (
            "single_task_excess_u",
            grid_medians(cfg, &records, |r| r.baseline_excess_u),
        ),
    ] {
        let last = *series.last().expect("nonempty grid");
        let first = series[0];
        let shrinking = series.len() < 2 || matches!((first, last), (Some(f), Some(l)) if l <= f);
        checks.push(Check::new(
            name,
            shrinking && last.is_some_and(|v| v <= th.final_excess_u),
            format!("medians {series:?}; final limit {}", th.final_excess_u),
        ));
    }
    checks.push(bridge_check(&records, th.bridge_sigmas));
    checks.push(bound_check(&records));
    Ok(finish(Study::Interaction, cfg, records, Vec::new(), checks))
}

/// Scaling of the task-frequency deviation `max_t |p(t) − m_t/N|` and of the
/// frequency error with `N`.
///
/// Counts come from the same task-id streams [`sample_dataset`] uses, so no
/// model is trained per record. The frequency error is evaluated on one
/// fixed set of task functions: a model trained once on an independent
/// `surrogate_n`-sample dataset, standing in for the regularized-risk
/// minimizer.
pub fn frequency_scaling_study(cfg: &StudyConfig, jobs: usize) -> Result<StudyReport> {
    cfg.validate_basic()?;
    let hash = cfg.hash();
    let th = cfg.thresholds;
    let p = &cfg.spec.task_probs;
    let surrogate_spec = cfg
        .spec
        .with_seed(sub_seed(cfg.seeds[0], cfg.surrogate_n, SURROGATE));
    let surrogate_data = sample_dataset(&surrogate_spec, cfg.surrogate_n)?.dataset;
    let surrogate = train(&surrogate_data, &cfg.reg, &cfg.kernel, &cfg.solver)?;
    let geometry = surrogate.model.geometry();

    let records = for_each_record(cfg, jobs, |n, seed| {
        let counts = cfg.spec.with_seed(sub_seed(seed, n, DATA)).task_counts(n);
        let mut rec = base_record(Study::Frequency, &hash, n, seed);
        rec.freq_dev = Some(max_frequency_deviation(p, &counts));
        rec.freq_error = Some(frequency_error(&geometry, p, &counts, &cfg.reg_at(n)?)?);
        rec.converged = surrogate.converged;
        Ok(rec)
    })?;

    let by_grid = |value: &dyn Fn(&StudyRecord) -> f64| -> Vec<Vec<f64>> {
        cfg.n_grid
            .iter()
            .map(|&n| records.iter().filter(|r| r.n == n).map(value).collect())
            .collect()
    };
    let devs = by_grid(&|r| r.freq_dev.unwrap_or(0.0));
    let errs = by_grid(&|r| r.freq_error.unwrap_or(0.0).abs());
    let fit = |name: &str, values: &[Vec<f64>]| -> SlopeFit {
        let all_zero = values.iter().flatten().all(|&v| v == 0.0);
        let fitted = if all_zero || cfg.n_grid.len() < 2 {
            None
        } else {
            loglog_slope(&cfg.n_grid, values)
        };
        SlopeFit {
            name: name.to_string(),
            slope: fitted.map(|f| f.0),
            stderr: fitted.map(|f| f.1),
            skipped: match (all_zero, fitted) {
                (true, _) => {
                    Some("deterministic task frequencies: every value is zero".to_string())
                }
                (false, None) => {
                    Some("not enough grid points or a zero mean at some N".to_string())
                }
                _ => None,
            },
        }
    };
    let dev_fit = fit("freq_dev", &devs);
    let err_fit = fit("freq_error", &errs);

    let mut checks = Vec::new();
    checks.push(match dev_fit.slope {
        Some(b) => Check::new(
            "freq_dev_slope",
            (th.deviation_slope_min..=th.deviation_slope_max).contains(&b),
            format!(
                "slope {b:.4} (window [{}, {}])",
                th.deviation_slope_min, th.deviation_slope_max
            ),
        ),
        None => Check::new(
            "freq_dev_slope",
            true,
            format!("skipped: {}", dev_fit.skipped.clone().unwrap_or_default()),
        ),
    });
    checks.push(match err_fit.slope {
        Some(b) => Check::new(
            "freq_error_slope",
            b <= th.frequency_error_slope_max,
            format!("slope {b:.4} (limit {})", th.frequency_error_slope_max),
        ),
        None => Check::new(
            "freq_error_slope",
            true,
            format!("skipped: {}", err_fit.skipped.clone().unwrap_or_default()),
        ),
    });
    if err_fit.slope.is_some() {
        let first = mean(&errs[0]);
        let last = mean(errs.last().expect("nonempty grid"));
        let ratio = *cfg.n_grid.last().expect("nonempty grid") as f64 / cfg.n_grid[0] as f64;
        let envelope = first * ratio.powf(-1.5);
        checks.push(Check::new(
            "freq_error_envelope",
            last <= th.envelope_factor * envelope,
            format!(
                "mean |F| at largest N {last:.3e} vs {} x N^-3/2 trend {envelope:.3e}",
                th.envelope_factor
            ),
        ));
    }
    Ok(finish(
        Study::Frequency,
        cfg,
        records,
        vec![dev_fit, err_fit],
        checks,
    ))
}

/// Solver identities on every trained model: primal objective equivalence,
/// the shared-component identity, the a-priori bounds, and KKT residuals.
pub fn equivalence_study(cfg: &StudyConfig, jobs: usize) -> Result<StudyReport> {
    cfg.validate_basic()?;
    let hash = cfg.hash();
    let th = cfg.thresholds;
    let records = for_each_record(cfg, jobs, |n, seed| {
        let t = train_record(cfg, n, seed)?;
        let mut rec = base_record(Study::Equivalence, &hash, n, seed);
        record_identities(&mut rec, cfg, &t, sub_seed(seed, n, PROBES))?;
        Ok(rec)
    })?;
    let worst = |f: &dyn Fn(&StudyRecord) -> Option<f64>| {
        records.iter().filter_map(f).fold(0.0f64, f64::max)
    };
    let shared = worst(&|r| r.shared_resid);
    let gap = worst(&|r| r.objective_gap);
    let kkt = worst(&|r| if r.converged { r.kkt } else { None });
    let unconverged = records.iter().filter(|r| !r.converged).count();
    let checks = vec![
        Check::new(
            "shared_component_identity",
            shared <= th.shared_identity,
            format!(
                "largest residual {shared:.3e} (limit {})",
                th.shared_identity
            ),
        ),
        Check::new(
            "objective_equivalence",
            gap <= th.objective_gap,
            format!(
                "largest relative gap {gap:.3e} (limit {})",
                th.objective_gap
            ),
        ),
        bound_check(&records),
        Check::new(
            "kkt_residual",
            kkt <= cfg.solver.tol,
            format!("largest residual {kkt:.3e} (limit {})", cfg.solver.tol),
        ),
        Check::new(
            "all_converged",
            unconverged == 0,
            format!("{unconverged} runs hit max_passes"),
        ),
    ];
    Ok(finish(Study::Equivalence, cfg, records, Vec::new(), checks))
}
