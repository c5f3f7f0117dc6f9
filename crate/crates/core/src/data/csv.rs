//! Dataset files: header `task,label,f1,...,fd`, one observation per line,
//! 1-based task ids, labels `-1`/`1`, features written with 17 significant
//! digits so that a save/load cycle is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{TaskDataset, TaskedSample};
use crate::error::{Error, Result};

pub fn load_csv(path: impl AsRef<Path>) -> Result<TaskDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_csv(&text)
}

/// Parses dataset text. The task count is the largest task id present.
pub fn read_csv(text: &str) -> Result<TaskDataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .filter(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::invalid("empty dataset file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 3 || columns[0] != "task" || columns[1] != "label" {
        return Err(Error::parse(1, "header must be `task,label,f1,...,fd`"));
    }
    for (k, c) in columns[2..].iter().enumerate() {
        if *c != format!("f{}", k + 1) {
            return Err(Error::parse(
                1,
                format!("expected column `f{}`, found `{c}`", k + 1),
            ));
        }
    }
    let dim = columns.len() - 2;

    let mut samples = Vec::new();
    let mut task_count = 0;
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(Error::parse(
                line,
                format!("expected {} columns, found {}", dim + 2, fields.len()),
            ));
        }
        let task: usize = fields[0]
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| Error::parse(line, format!("invalid task id `{}`", fields[0])))?;
        let y: i8 = match fields[1] {
            "1" | "+1" => 1,
            "-1" => -1,
            other => {
                return Err(Error::parse(
                    line,
                    format!("label must be -1 or 1, found `{other}`"),
                ))
            }
        };
        let x = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line, format!("invalid feature `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        task_count = task_count.max(task);
        samples.push(TaskedSample {
            x,
            y,
            task: task - 1,
        });
    }
    TaskDataset::new(samples, task_count.max(1), dim)
}

pub fn save_csv(dataset: &TaskDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_csv(dataset, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_csv(dataset: &TaskDataset, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "task,label")?;
    for k in 1..=dataset.dim() {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for s in dataset.samples() {
        write!(out, "{},{}", s.task + 1, s.y)?;
        for v in &s.x {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
