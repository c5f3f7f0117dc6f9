use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use mtsvm_cli::Cli;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mtsvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtsvm"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn result_line(out: &Output) -> String {
    stderr(out)
        .lines()
        .rev()
        .find(|l| l.starts_with("RESULT "))
        .expect("RESULT line")
        .to_string()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}` in {line}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SPEC: &str = r#"
[spec]
task_probs = [0.6, 0.4]
seed = 3

[[spec.generators]]
kind = "flip-noise-threshold"
direction = [1.0]
threshold = 0.0
flip = 0.1

[[spec.generators]]
kind = "flip-noise-threshold"
direction = [1.0]
threshold = 0.1
flip = 0.1
"#;

fn train_tiny(dir: &Path) -> (PathBuf, PathBuf) {
    let model = dir.join("tiny.model");
    let out = mtsvm(&[
        "train",
        "--config",
        s(&configs().join("train.toml")),
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (model, configs().join("tiny.csv"))
}

#[test]
fn generate_writes_n_rows_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "gen.toml", &format!("n = 100\n{SPEC}"));
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = mtsvm(&["generate", "--config", s(&cfg), "--out", s(p)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let line = result_line(&out);
        assert_eq!(field(&line, "n"), "100");
        assert_eq!(field(&line, "tasks"), "2");
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 101);
    assert!(text.starts_with("task,label,f1\n"));
    assert_eq!(text, fs::read_to_string(&b).unwrap());

    let out = mtsvm(&[
        "generate",
        "--config",
        s(&cfg),
        "--seed",
        "4",
        "--out",
        s(&b),
    ]);
    assert_eq!(code(&out), 0);
    assert_ne!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn generate_rejects_probabilities_not_summing_to_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "gen.toml",
        &format!("n = 100\n{}", SPEC.replace("[0.6, 0.4]", "[0.6, 0.5]")),
    );
    let out = mtsvm(&[
        "generate",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("task_probs"), "{}", stderr(&out));
}

#[test]
fn train_on_bundled_dataset_converges() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.txt");
    let out = mtsvm(&[
        "train",
        "--config",
        s(&configs().join("train.toml")),
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let line = result_line(&out);
    assert_eq!(field(&line, "converged"), "true");
    let kkt: f64 = field(&line, "kkt").parse().unwrap();
    assert!(kkt <= 1e-6, "kkt {kkt}");
    assert_eq!(field(&line, "bound_violations"), "0");
    assert!(stderr(&out).contains("||f_t||_K"));
    assert!(fs::read_to_string(&model)
        .unwrap()
        .starts_with("mtsvm-model"));
}

#[test]
fn train_reports_non_convergence_with_code_3_and_writes_the_model() {
    let dir = TempDir::new().unwrap();
    let data = configs().join("tiny.csv");
    let cfg = write(
        dir.path(),
        "train.toml",
        &format!(
            "data = {:?}\nlambda1 = 0.01\nlambda2 = 0.01\nsigma = 0.3\n[solver]\nmax_passes = 1\nfree_block_limit = 0\n",
            s(&data)
        ),
    );
    let model = dir.path().join("m.txt");
    let out = mtsvm(&["train", "--config", s(&cfg), "--out", s(&model)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert_eq!(field(&result_line(&out), "converged"), "false");
    assert!(model.exists());
}

#[test]
fn train_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let missing = write(
        dir.path(),
        "missing.toml",
        "data = \"nope.csv\"\nlambda1 = 1.0\nlambda2 = 1.0\n",
    );
    let out = mtsvm(&["train", "--config", s(&missing)]);
    assert_eq!(code(&out), 2);
    let out = mtsvm(&["train", "--config", s(&dir.path().join("absent.toml"))]);
    assert_eq!(code(&out), 2);

    let bad = write(
        dir.path(),
        "bad.toml",
        "data = \"nope.csv\"\nlambda1 = 0.0\nlambda2 = 1.0\n",
    );
    let out = mtsvm(&["train", "--config", s(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lambda1"), "{}", stderr(&out));

    let unknown = write(
        dir.path(),
        "unknown.toml",
        "data = \"x.csv\"\nlambda1 = 1.0\nlambda2 = 1.0\nlamda3 = 2\n",
    );
    let out = mtsvm(&["train", "--config", s(&unknown)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lamda3"), "{}", stderr(&out));
}

#[test]
fn predict_scores_rows_and_reports_accuracy() {
    let dir = TempDir::new().unwrap();
    let (model, data) = train_tiny(dir.path());
    let preds = dir.path().join("p.csv");
    let out = mtsvm(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&preds),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let accuracy: f64 = field(&result_line(&out), "accuracy").parse().unwrap();
    assert!(accuracy > 0.7, "accuracy {accuracy}");

    let text = fs::read_to_string(&preds).unwrap();
    let rows = fs::read_to_string(&data).unwrap().lines().count() - 1;
    assert_eq!(text.lines().next(), Some("task,score,label"));
    assert_eq!(text.lines().count(), rows + 1);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let score: f64 = f[1].parse().unwrap();
        assert_eq!(f[2], if score >= 0.0 { "1" } else { "-1" });
    }

    let again = dir.path().join("q.csv");
    mtsvm(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&again),
    ]);
    assert_eq!(text, fs::read_to_string(&again).unwrap());
}

#[test]
fn predict_edge_cases() {
    let dir = TempDir::new().unwrap();
    let (model, _) = train_tiny(dir.path());

    let empty = write(dir.path(), "empty.csv", "task,label,f1\n");
    let preds = dir.path().join("p.csv");
    let out = mtsvm(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&empty),
        "--out",
        s(&preds),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&preds).unwrap(), "task,score,label\n");

    let wide = write(dir.path(), "wide.csv", "task,label,f1,f2\n1,1,0.5,0.5\n");
    let out = mtsvm(&["predict", "--model", s(&model), "--data", s(&wide)]);
    assert_eq!(code(&out), 2);

    let unknown = write(
        dir.path(),
        "unknown.csv",
        "task,label,f1\n1,1,0.5\n2,-1,0.1\n3,1,0.2\n",
    );
    let out = mtsvm(&["predict", "--model", s(&model), "--data", s(&unknown)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));
}

#[test]
fn evaluate_prints_risks_and_the_bridge() {
    let dir = TempDir::new().unwrap();
    let (model, _) = train_tiny(dir.path());
    let cfg = write(
        dir.path(),
        "eval.toml",
        &format!("n_mc = 20000\nseed = 5\n{SPEC}"),
    );
    let table = dir.path().join("risk.csv");
    let out = mtsvm(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--model",
        s(&model),
        "--out",
        s(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let line = result_line(&out);
    let lhs: f64 = field(&line, "bridge_lhs").parse().unwrap();
    let rhs: f64 = field(&line, "bridge_rhs").parse().unwrap();
    assert!(lhs <= rhs, "{line}");
    assert_eq!(field(&line, "bridge_holds"), "true");
    let text = fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("task,risk,risk_stderr,bayes_risk,excess,"));
    let log = stderr(&out);
    assert!(log.contains("R*_t") && log.contains("excess_u"), "{log}");

    let low = write(dir.path(), "low.toml", &format!("n_mc = 10\n{SPEC}"));
    let out = mtsvm(&["evaluate", "--config", s(&low), "--model", s(&model)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_mc"));
}

fn study_config(dir: &Path, grid: &str, seeds: &str) -> PathBuf {
    write(
        dir,
        "study.toml",
        &format!(
            "n_grid = {grid}\nseeds = {seeds}\nn_mc = 1000\n[reg]\nlambda1 = 1.0\nlambda2 = 1.0\n[kernel]\nsigma = 0.3\n{SPEC}"
        ),
    )
}

#[test]
fn equivalence_study_on_bundled_config_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("study-equivalence.toml");
    let mut reports = Vec::new();
    for (k, jobs) in ["1", "2"].iter().enumerate() {
        let path = dir.path().join(format!("r{k}.json"));
        let out = mtsvm(&[
            "study",
            "equivalence",
            "--config",
            s(&cfg),
            "--out",
            s(&path),
            "--format",
            "json",
            "--jobs",
            jobs,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert_eq!(field(&result_line(&out), "failed"), "0");
        reports.push(fs::read(&path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn study_rejects_bad_names_and_configs() {
    let dir = TempDir::new().unwrap();
    let cfg = study_config(dir.path(), "[100]", "[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]");
    let out = mtsvm(&["study", "convergence", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_grid"), "{}", stderr(&out));

    let out = mtsvm(&["study", "bogus", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    let log = stderr(&out);
    for name in ["convergence", "interaction", "frequency", "equivalence"] {
        assert!(log.contains(name), "{log}");
    }
}

#[test]
fn study_with_failing_checks_exits_3() {
    let dir = TempDir::new().unwrap();
    // Too few samples and a zero excess threshold: the final-risk check cannot pass.
    let cfg = write(
        dir.path(),
        "study.toml",
        &format!(
            "n_grid = [4, 6, 8]\nseeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]\nn_mc = 1000\n[reg]\nlambda1 = 1.0\nlambda2 = 1.0\n[thresholds]\nfinal_excess_u = 0.0\n{SPEC}"
        ),
    );
    let out = mtsvm(&[
        "study",
        "convergence",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert_eq!(field(&result_line(&out), "status"), "failed-checks");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&mtsvm(&[])), 2);
    assert_eq!(code(&mtsvm(&["train"])), 2);
    assert_eq!(code(&mtsvm(&["train", "--config", "x", "--bogus"])), 2);
    assert_eq!(
        code(&mtsvm(&[
            "study",
            "frequency",
            "--config",
            "x",
            "--format",
            "xml"
        ])),
        2
    );
}

#[test]
fn help_documents_every_flag() {
    let root = Cli::command();
    for sub in root.get_subcommands() {
        let name = sub.get_name();
        let out = mtsvm(&[name, "--help"]);
        assert_eq!(code(&out), 0);
        let help = String::from_utf8_lossy(&out.stdout).into_owned();
        for arg in sub.get_arguments() {
            assert!(
                arg.get_help()
                    .is_some_and(|h| !h.to_string().trim().is_empty()),
                "`{name}` argument `{}` has no help text",
                arg.get_id()
            );
            if let Some(long) = arg.get_long() {
                assert!(
                    help.contains(&format!("--{long}")),
                    "`{name} --help` omits --{long}"
                );
            }
        }
    }
}
