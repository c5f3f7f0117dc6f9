//! Model files.
//!
//! A line-oriented text document; every real number is written with 17
//! significant digits so that a reloaded model reproduces its scores exactly:
//!
//! ```text
//! mtsvm-model 1
//! sigma 3.0000000000000000e-1
//! lambda1 1.0000000000000000e0
//! lambda2 1.0000000000000000e0
//! tasks 2
//! dim 1
//! total 100
//! counts 61 39
//! support 2
//! 4 1 -1 1.0000000000000000e0 -2.5000000000000000e-1
//! 17 2 1 3.3300000000000002e-1 5.0000000000000000e-1
//! end
//! ```
//!
//! Support rows are `index task label alpha f1 ... fd` with 1-based task ids.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::model::{SupportVector, TrainedModel};
use super::RegularizationParams;
use crate::error::{Error, Result};
use crate::kernel::{GaussianKernel, TaskWeights};

pub const MODEL_SCHEMA_VERSION: &str = "1";
const MAGIC: &str = "mtsvm-model";

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_model(&text)
}

pub fn write_model(model: &TrainedModel, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} {MODEL_SCHEMA_VERSION}")?;
    writeln!(out, "sigma {:.16e}", model.kernel().sigma())?;
    writeln!(out, "lambda1 {:.16e}", model.reg().lambda1())?;
    writeln!(out, "lambda2 {:.16e}", model.reg().lambda2())?;
    writeln!(out, "tasks {}", model.task_count())?;
    writeln!(out, "dim {}", model.dim())?;
    writeln!(out, "total {}", model.weights().total())?;
    let counts: Vec<String> = model
        .weights()
        .counts()
        .iter()
        .map(|m| m.to_string())
        .collect();
    writeln!(out, "counts {}", counts.join(" "))?;
    writeln!(out, "support {}", model.support().len())?;
    for sv in model.support() {
        write!(
            out,
            "{} {} {} {:.16e}",
            sv.index,
            sv.task + 1,
            sv.y,
            sv.alpha
        )?;
        for v in &sv.x {
            write!(out, " {v:.16e}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "end")
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(Error::parse(self.last + 1, "unexpected end of model file")),
        }
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (line, text) = self.next_line()?;
        match text.split_once(' ') {
            Some((k, v)) if k == key => Ok((line, v.trim())),
            _ => Err(Error::parse(line, format!("expected `{key} <value>`"))),
        }
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, v) = self.field(key)?;
        v.parse()
            .map_err(|_| Error::parse(line, format!("invalid value for `{key}`: `{v}`")))
    }
}

fn parse<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{s}`")))
}

pub fn read_model(text: &str) -> Result<TrainedModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (line, head) = lines.next_line()?;
    let version = head
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::parse(line, "not a model file"))?;
    if version != MODEL_SCHEMA_VERSION {
        return Err(Error::Version {
            found: version.to_string(),
            expected: MODEL_SCHEMA_VERSION.to_string(),
        });
    }
    let sigma: f64 = lines.number("sigma")?;
    let lambda1: f64 = lines.number("lambda1")?;
    let lambda2: f64 = lines.number("lambda2")?;
    let tasks: usize = lines.number("tasks")?;
    let dim: usize = lines.number("dim")?;
    let total: usize = lines.number("total")?;
    let (line, counts) = lines.field("counts")?;
    let counts = counts
        .split_whitespace()
        .map(|c| parse(line, c, "count"))
        .collect::<Result<Vec<usize>>>()?;
    if counts.len() != tasks {
        return Err(Error::parse(
            line,
            format!("expected {tasks} counts, found {}", counts.len()),
        ));
    }
    let weights = TaskWeights::new(counts).map_err(|e| Error::parse(line, e.to_string()))?;
    if weights.total() != total {
        return Err(Error::parse(line, "counts do not sum to total"));
    }
    let kernel = GaussianKernel::new(sigma).map_err(|e| Error::parse(2, e.to_string()))?;
    let reg =
        RegularizationParams::new(lambda1, lambda2).map_err(|e| Error::parse(3, e.to_string()))?;

    let n_support: usize = lines.number("support")?;
    let mut support = Vec::with_capacity(n_support);
    for _ in 0..n_support {
        let (line, row) = lines.next_line()?;
        let f: Vec<&str> = row.split_whitespace().collect();
        if f.len() != 4 + dim {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", 4 + dim, f.len()),
            ));
        }
        let task: usize = parse(line, f[1], "task id")?;
        if task == 0 || task > tasks {
            return Err(Error::parse(line, format!("task id {task} out of range")));
        }
        support.push(SupportVector {
            index: parse(line, f[0], "index")?,
            task: task - 1,
            y: parse(line, f[2], "label")?,
            alpha: parse(line, f[3], "alpha")?,
            x: f[4..]
                .iter()
                .map(|v| parse(line, v, "feature"))
                .collect::<Result<_>>()?,
        });
    }
    let (line, end) = lines.next_line()?;
    if end.trim() != "end" {
        return Err(Error::parse(line, "expected `end`"));
    }
    TrainedModel::new(support, reg, kernel, weights, dim)
        .map_err(|e| Error::parse(line, e.to_string()))
}
