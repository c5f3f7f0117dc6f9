//! Multi-task datasets, the task-sampling model, and dataset files.
//!
//! Observations arrive one at a time: a task `t` is drawn with probability
//! `p(t)` and then `(x, y)` is drawn from that task's generator. Task ids are
//! 0-based inside the library and 1-based in files.

mod csv;
mod generator;

pub use self::csv::{load_csv, read_csv, save_csv, write_csv};
pub use generator::{sign_of_eta, Generator};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::TaskWeights;
use crate::rng::stream;

/// One observation: features, a `±1` label and the task it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskedSample {
    pub x: Vec<f64>,
    pub y: i8,
    pub task: usize,
}

impl TaskedSample {
    pub fn new(x: Vec<f64>, y: i8, task: usize) -> Result<Self> {
        if y != 1 && y != -1 {
            return Err(Error::invalid(format!("label must be -1 or 1, got {y}")));
        }
        Ok(TaskedSample { x, y, task })
    }

    #[inline]
    pub fn label(&self) -> f64 {
        f64::from(self.y)
    }
}

/// An ordered multi-task sample of fixed feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    samples: Vec<TaskedSample>,
    task_count: usize,
    dim: usize,
    counts: Vec<usize>,
}

impl TaskDataset {
    pub fn new(samples: Vec<TaskedSample>, task_count: usize, dim: usize) -> Result<Self> {
        if task_count == 0 {
            return Err(Error::invalid("task count must be at least 1"));
        }
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        let mut counts = vec![0; task_count];
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(Error::invalid(format!(
                    "sample {i} has dimension {} (expected {dim})",
                    s.x.len()
                )));
            }
            if s.task >= task_count {
                return Err(Error::invalid(format!(
                    "sample {i} has task id {} beyond task count {task_count}",
                    s.task + 1
                )));
            }
            counts[s.task] += 1;
        }
        Ok(TaskDataset {
            samples,
            task_count,
            dim,
            counts,
        })
    }

    pub fn samples(&self) -> &[TaskedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn task_count(&self) -> usize {
        self.task_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-task sample counts `m_t`, zeros included.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Task weights; fails when some task owns no samples.
    pub fn weights(&self) -> Result<TaskWeights> {
        TaskWeights::new(self.counts.clone())
    }

    /// The samples of task `t`, relabelled as a single-task dataset.
    pub fn task_subset(&self, t: usize) -> Result<TaskDataset> {
        let samples = self
            .samples
            .iter()
            .filter(|s| s.task == t)
            .map(|s| TaskedSample {
                x: s.x.clone(),
                y: s.y,
                task: 0,
            })
            .collect();
        TaskDataset::new(samples, 1, self.dim)
    }
}

/// The sampling model: task probabilities, one generator per task, and a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub task_probs: Vec<f64>,
    pub generators: Vec<Generator>,
    pub seed: u64,
}

/// Maximum whole-dataset redraws when some task ends up empty.
pub const MAX_REDRAWS: u32 = 100;

/// A sampled dataset plus the number of redraws needed to fill every task.
#[derive(Clone, Debug)]
pub struct Draw {
    pub dataset: TaskDataset,
    pub redraws: u32,
}

impl SamplingSpec {
    pub fn new(task_probs: Vec<f64>, generators: Vec<Generator>, seed: u64) -> Result<Self> {
        let spec = SamplingSpec {
            task_probs,
            generators,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_probs.is_empty() {
            return Err(Error::invalid("task_probs must not be empty"));
        }
        if self.task_probs.len() != self.generators.len() {
            return Err(Error::invalid(format!(
                "task_probs has {} entries but {} generators were given",
                self.task_probs.len(),
                self.generators.len()
            )));
        }
        if self.task_probs.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("task_probs entries must be positive"));
        }
        let total: f64 = self.task_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "task_probs must sum to 1, got {total}"
            )));
        }
        let dim = self.generators[0].dim();
        for (t, g) in self.generators.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::invalid(format!("generator for task {}: {e}", t + 1)))?;
            if g.dim() != dim {
                return Err(Error::invalid(
                    "all generators must share one feature dimension",
                ));
            }
        }
        Ok(())
    }

    pub fn task_count(&self) -> usize {
        self.task_probs.len()
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplingSpec {
            seed,
            ..self.clone()
        }
    }

    /// Average Bayes risk `U* = Σ p(t) R*_t`.
    pub fn average_bayes_risk(&self) -> Result<f64> {
        self.task_probs
            .iter()
            .zip(&self.generators)
            .map(|(p, g)| Ok(p * g.bayes_risk()?))
            .sum()
    }

    fn draw_tasks(&self, n: usize, attempt: u32) -> Vec<usize> {
        let mut rng: ChaCha8Rng = stream(self.seed, &[u64::from(attempt), 0]);
        (0..n)
            .map(|_| pick_task(&self.task_probs, rng.random()))
            .collect()
    }

    /// Task counts `m_t` of the dataset `sample_dataset(self, n)` would
    /// produce, without drawing features. Zero counts are possible here.
    pub fn task_counts(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![0; self.task_count()];
        for t in self.draw_tasks(n, 0) {
            counts[t] += 1;
        }
        counts
    }
}

fn pick_task(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (t, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return t;
        }
    }
    probs.len() - 1
}

/// Draws `n` i.i.d. observations from the sampling model.
///
/// Whole-dataset redraws (with a fresh sub-seed) happen whenever some task
/// receives no samples; after [`MAX_REDRAWS`] failures the draw is rejected.
pub fn sample_dataset(spec: &SamplingSpec, n: usize) -> Result<Draw> {
    spec.validate()?;
    let t_count = spec.task_count();
    if n < t_count {
        return Err(Error::invalid(format!(
            "sample size {n} is smaller than the task count {t_count}"
        )));
    }
    for attempt in 0..MAX_REDRAWS {
        let tasks = spec.draw_tasks(n, attempt);
        let mut seen = vec![false; t_count];
        tasks.iter().for_each(|&t| seen[t] = true);
        if seen.contains(&false) {
            continue;
        }
        let mut rng: ChaCha8Rng = stream(spec.seed, &[u64::from(attempt), 1]);
        let samples = tasks
            .into_iter()
            .map(|t| {
                let (x, y) = spec.generators[t].draw(&mut rng);
                TaskedSample { x, y, task: t }
            })
            .collect();
        return Ok(Draw {
            dataset: TaskDataset::new(samples, t_count, spec.dim())?,
            redraws: attempt,
        });
    }
    Err(Error::DegenerateSampling {
        attempts: MAX_REDRAWS,
    })
}
