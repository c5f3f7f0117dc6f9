use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use mtsvm::data::{load_csv, sample_dataset, write_csv};
use mtsvm::experiments::{
    emit_report, run_study, write_csv_report, ReportFormat, Study, StudyConfig,
};
use mtsvm::risk::{evaluate_model, MIN_MC};
use mtsvm::solver::{bound_report, load_model, train, write_model};

use crate::config::{self, EvaluateConfig, GenerateConfig, TrainConfig};
use crate::{Command, Format};

/// A failure with the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Library(#[from] mtsvm::Error),
}

impl CliError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// Every library error is an input or configuration problem; numerical
    /// failures are reported through results, not errors.
    pub fn code(&self) -> u8 {
        2
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Generate { config, seed, out } => generate(&config, seed, out),
        Command::Train {
            config,
            data,
            seed,
            out,
        } => cmd_train(&config, data, seed, out),
        Command::Predict { model, data, out } => predict(&model, &data, out),
        Command::Evaluate {
            config,
            model,
            seed,
            out,
        } => evaluate(&config, &model, seed, out),
        Command::Study {
            name,
            config,
            seed,
            out,
            format,
            jobs,
        } => study(&name, &config, seed, out, format, jobs),
    }
}

/// `--out` wins over the config's `out`; `None` means standard output.
fn destination(
    flag: Option<PathBuf>,
    config_path: &Path,
    from_config: Option<&PathBuf>,
) -> Option<PathBuf> {
    flag.or_else(|| from_config.map(|p| config::resolve(config_path, p)))
}

fn write_output(dest: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match dest {
        Some(path) => {
            fs::write(path, bytes)
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
            info!("wrote {}", path.display());
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Input(format!("cannot write to standard output: {e}")))?,
    }
    Ok(())
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn generate(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8> {
    let cfg: GenerateConfig = config::load(path)?;
    let mut spec = cfg.spec.clone();
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    if cfg.n < spec.task_count() {
        return Err(CliError::config(format!(
            "`n` must be at least the task count {}",
            spec.task_count()
        )));
    }
    let draw = sample_dataset(&spec, cfg.n)?;
    let mut buf = Vec::new();
    write_csv(&draw.dataset, &mut buf).map_err(|e| CliError::Input(e.to_string()))?;
    write_output(destination(out, path, cfg.out.as_ref()).as_deref(), &buf)?;
    let ds = &draw.dataset;
    info!(
        "N = {}, T = {}, m_t = [{}], redraws = {}",
        ds.len(),
        ds.task_count(),
        join(ds.counts()),
        draw.redraws
    );
    eprintln!(
        "RESULT status=ok n={} tasks={} counts={}",
        ds.len(),
        ds.task_count(),
        join(ds.counts())
    );
    Ok(0)
}

fn cmd_train(
    path: &Path,
    data: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<u8> {
    let mut cfg: TrainConfig = config::load(path)?;
    let reg = cfg.reg()?;
    let kernel = cfg.kernel()?;
    if let Some(s) = seed {
        cfg.solver.seed = s;
    }
    cfg.solver
        .validate()
        .map_err(|e| CliError::config(format!("[solver]: {e}")))?;
    let data_path = data.unwrap_or_else(|| config::resolve(path, &cfg.data));
    let dataset = load_csv(&data_path)?;

    let fit = train(&dataset, &reg, &kernel, &cfg.solver)?;
    let mut buf = Vec::new();
    write_model(&fit.model, &mut buf).map_err(|e| CliError::Input(e.to_string()))?;
    write_output(destination(out, path, cfg.out.as_ref()).as_deref(), &buf)?;

    let bounds = bound_report(&fit.model, &dataset)?;
    let sol = &fit.solution;
    info!(
        "dual objective {:.10e}, KKT residual {:.3e}, {} support vectors, {} passes",
        sol.objective,
        sol.kkt_residual,
        fit.model.support().len(),
        fit.passes
    );
    for (t, (norm, bound)) in bounds.norms.iter().zip(&bounds.norm_bounds).enumerate() {
        info!("task {}: ||f_t||_K = {norm:.6e} (bound {bound:.6e})", t + 1);
    }
    if !fit.converged {
        warn!(
            "solver did not converge within {} passes",
            cfg.solver.max_passes
        );
    }
    eprintln!(
        "RESULT status={} converged={} dual_objective={:e} kkt={:e} support_vectors={} passes={} bound_violations={}",
        if fit.converged { "ok" } else { "not-converged" },
        fit.converged,
        sol.objective,
        sol.kkt_residual,
        fit.model.support().len(),
        fit.passes,
        bounds.violations()
    );
    Ok(if fit.converged { 0 } else { 3 })
}

fn predict(model_path: &Path, data_path: &Path, out: Option<PathBuf>) -> Result<u8> {
    let model = load_model(model_path)?;
    let dataset = load_csv(data_path)?;
    let samples = dataset.samples();
    if !samples.is_empty() && dataset.dim() != model.dim() {
        return Err(CliError::Input(format!(
            "dataset has {} features but the model expects {}",
            dataset.dim(),
            model.dim()
        )));
    }
    if let Some(i) = samples.iter().position(|s| s.task >= model.task_count()) {
        return Err(CliError::Input(format!(
            "row {}: task id {} is unknown to the model ({} tasks)",
            i + 1,
            samples[i].task + 1,
            model.task_count()
        )));
    }
    let mut text = String::from("task,score,label\n");
    let mut correct = 0usize;
    for s in samples {
        let (score, label) = model.predict_task(&s.x, s.task)?;
        correct += usize::from(label == s.y);
        let _ = writeln!(text, "{},{:.16e},{}", s.task + 1, score, label);
    }
    write_output(out.as_deref(), text.as_bytes())?;
    if samples.is_empty() {
        eprintln!("RESULT status=ok rows=0");
        return Ok(0);
    }
    let accuracy = correct as f64 / samples.len() as f64;
    info!(
        "accuracy on the given labels: {accuracy:.6} ({correct}/{})",
        samples.len()
    );
    eprintln!(
        "RESULT status=ok rows={} accuracy={accuracy}",
        samples.len()
    );
    Ok(0)
}

fn evaluate(path: &Path, model_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8> {
    let cfg: EvaluateConfig = config::load(path)?;
    cfg.spec.validate()?;
    if cfg.n_mc < MIN_MC {
        return Err(CliError::config(format!(
            "`n_mc` must be at least {MIN_MC}, got {}",
            cfg.n_mc
        )));
    }
    let model = load_model(model_path)?;
    let risk = evaluate_model(&model, &cfg.spec, cfg.n_mc, seed.unwrap_or(cfg.seed))?;

    let mut text =
        String::from("task,risk,risk_stderr,bayes_risk,excess,hinge_risk,hinge_stderr\n");
    for (t, r) in risk.tasks.iter().enumerate() {
        info!(
            "task {}: R_t = {:.6} ± {:.1e}, R*_t = {:.6}, excess = {:.6}",
            t + 1,
            r.misclassification.value,
            r.misclassification.stderr,
            r.bayes,
            r.excess()
        );
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            t + 1,
            r.misclassification.value,
            r.misclassification.stderr,
            r.bayes,
            r.excess(),
            r.hinge.value,
            r.hinge.stderr
        );
    }
    let se = risk.combined_stderr();
    info!(
        "U = {:.6}, U* = {:.6}, excess_u = {:.6}, excess_e = {:.6}",
        risk.average_misclassification.value,
        risk.bayes_average,
        risk.excess_u(),
        risk.excess_e()
    );
    info!(
        "bridge: excess_u = {:.6} <= excess_e + 3*stderr = {:.6}",
        risk.excess_u(),
        risk.excess_e() + 3.0 * se
    );
    write_output(
        destination(out, path, cfg.out.as_ref()).as_deref(),
        text.as_bytes(),
    )?;
    eprintln!(
        "RESULT status=ok u={} u_star={} excess_u={} excess_e={} stderr={} bridge_lhs={} bridge_rhs={} bridge_holds={}",
        risk.average_misclassification.value,
        risk.bayes_average,
        risk.excess_u(),
        risk.excess_e(),
        se,
        risk.excess_u(),
        risk.excess_e() + 3.0 * se,
        risk.bridge_slack() >= 0.0
    );
    Ok(0)
}

fn study(
    name: &str,
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Format,
    jobs: Option<usize>,
) -> Result<u8> {
    let study: Study = name.parse()?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))?;
    let report_out = match table.get("out") {
        Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(CliError::config("`out` must be a string")),
        None => None,
    };
    let mut body = table;
    body.remove("out");
    let mut cfg: StudyConfig = body.try_into().map_err(|e: toml::de::Error| {
        CliError::config(format!("{}: {}", path.display(), e.message()))
    })?;
    if let Some(s) = seed {
        cfg.seeds = (0..cfg.seeds.len() as u64).map(|k| s + k).collect();
    }
    let jobs = jobs.unwrap_or(0);
    info!("running the {} study (config {})", study.name(), cfg.hash());
    let report = run_study(study, &cfg, jobs)?;

    let format = match format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    match destination(out, path, report_out.as_ref()) {
        Some(dest) => {
            emit_report(&report, &dest, format)?;
            info!("wrote {}", dest.display());
        }
        None => {
            let text = match format {
                ReportFormat::Csv => write_csv_report(&report),
                ReportFormat::Json => serde_json::to_string_pretty(&report)
                    .map(|s| s + "\n")
                    .map_err(|e| CliError::Input(e.to_string()))?,
            };
            write_output(None, text.as_bytes())?;
        }
    }
    for c in &report.checks {
        if c.passed {
            info!("check {}: pass ({})", c.name, c.detail);
        } else {
            warn!("check {}: FAIL ({})", c.name, c.detail);
        }
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    eprintln!(
        "RESULT status={} study={} config_hash={} records={} excluded={} checks={} failed={}",
        if failed == 0 { "ok" } else { "failed-checks" },
        study.name(),
        report.config_hash,
        report.records.len(),
        report.excluded,
        report.checks.len(),
        failed
    );
    Ok(if failed == 0 { 0 } else { 3 })
}
