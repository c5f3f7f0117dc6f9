//! Gaussian base kernel and the task-coupled kernel it induces.
//!
//! The multi-task regularizer `λ₁ Σ (m_t/N)‖f_t − f₀‖² + λ₂‖f₀‖²` makes every
//! task function an expansion over the coupled kernel
//!
//! ```text
//! G((x,t),(x',s)) = (1/λ₂ + [t = s]·N/(λ₁ m_t)) · K(x, x')
//! ```
//!
//! where `K` is the Gaussian kernel. Cross-task entries only see the shared
//! `1/λ₂` part; same-task entries add the task-private increment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TaskedSample;
use crate::error::{Error, Result};

/// Gaussian (RBF) kernel `exp(−‖x−x'‖² / (2σ²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    sigma: f64,
}

impl Default for GaussianKernel {
    fn default() -> Self {
        GaussianKernel { sigma: 1.0 }
    }
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(GaussianKernel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `κ = sup_x √K(x,x)`, which is 1 for every Gaussian kernel.
    pub fn kappa(&self) -> f64 {
        1.0
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        if x.len() != x2.len() || x.is_empty() {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                x.len(),
                x2.len()
            )));
        }
        Ok(self.eval_unchecked(x, x2))
    }

    /// Evaluates without the dimension check. Callers guarantee equal lengths.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
        (-sq / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Per-task sample counts `m_t` and their total `N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskWeights {
    counts: Vec<usize>,
    total: usize,
}

impl TaskWeights {
    /// Builds weights from per-task counts. Every task must own at least one sample.
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("at least one task is required"));
        }
        if let Some(t) = counts.iter().position(|&m| m == 0) {
            return Err(Error::invalid(format!("task {} has no samples", t + 1)));
        }
        let total = counts.iter().sum();
        Ok(TaskWeights { counts, total })
    }

    pub fn from_tasks(tasks: impl IntoIterator<Item = usize>, task_count: usize) -> Result<Self> {
        let mut counts = vec![0; task_count];
        for t in tasks {
            if t >= task_count {
                return Err(Error::invalid(format!("task id {} out of range", t + 1)));
            }
            counts[t] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn task_count(&self) -> usize {
        self.counts.len()
    }

    /// Observed frequency `m_t / N`.
    pub fn frequency(&self, t: usize) -> f64 {
        self.counts[t] as f64 / self.total as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|t| self.frequency(t)).collect()
    }
}

/// Gaussian base kernel coupled across tasks by the two regularization weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTaskKernel {
    base: GaussianKernel,
    lambda1: f64,
    lambda2: f64,
    weights: TaskWeights,
}

impl MultiTaskKernel {
    pub fn new(
        base: GaussianKernel,
        lambda1: f64,
        lambda2: f64,
        weights: TaskWeights,
    ) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(MultiTaskKernel {
            base,
            lambda1,
            lambda2,
            weights,
        })
    }

    pub fn base(&self) -> &GaussianKernel {
        &self.base
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn weights(&self) -> &TaskWeights {
        &self.weights
    }

    /// Shared part of the coupling, `1/λ₂`.
    #[inline]
    pub fn shared_scale(&self) -> f64 {
        1.0 / self.lambda2
    }

    /// Task-private increment `N/(λ₁ m_t)`.
    #[inline]
    pub fn task_scale(&self, t: usize) -> f64 {
        self.weights.total as f64 / (self.lambda1 * self.weights.counts[t] as f64)
    }

    /// Multiplier applied to `K(x,x')` for the task pair `(t, s)`.
    #[inline]
    pub fn coupling(&self, t: usize, s: usize) -> f64 {
        if t == s {
            self.shared_scale() + self.task_scale(t)
        } else {
            self.shared_scale()
        }
    }

    fn check_task(&self, t: usize) -> Result<()> {
        if t >= self.weights.task_count() {
            return Err(Error::invalid(format!(
                "unknown task id {} (model has {} tasks)",
                t + 1,
                self.weights.task_count()
            )));
        }
        Ok(())
    }

    /// `G((x,t),(x2,s))`.
    pub fn eval(&self, x: &[f64], t: usize, x2: &[f64], s: usize) -> Result<f64> {
        self.check_task(t)?;
        self.check_task(s)?;
        Ok(self.coupling(t, s) * self.base.eval(x, x2)?)
    }

    /// Dense coupled Gram matrix over `samples`.
    pub fn gram(&self, samples: &[TaskedSample]) -> Result<SymMatrix> {
        validate_samples(samples)?;
        for s in samples {
            self.check_task(s.task)?;
        }
        let coupling: Vec<Vec<f64>> = (0..self.weights.task_count())
            .map(|t| {
                (0..self.weights.task_count())
                    .map(|s| self.coupling(t, s))
                    .collect()
            })
            .collect();
        Ok(SymMatrix::from_upper(samples.len(), |i, j| {
            let (a, b) = (&samples[i], &samples[j]);
            coupling[a.task][b.task] * self.base.eval_unchecked(&a.x, &b.x)
        }))
    }
}

/// Base-kernel Gram matrix `K(x_i, x_j)` over a list of points.
pub fn base_gram(kernel: &GaussianKernel, points: &[&[f64]]) -> SymMatrix {
    SymMatrix::from_upper(points.len(), |i, j| {
        kernel.eval_unchecked(points[i], points[j])
    })
}

fn validate_samples(samples: &[TaskedSample]) -> Result<()> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("empty sample list"))?;
    let d = first.x.len();
    if let Some(i) = samples.iter().position(|s| s.x.len() != d) {
        return Err(Error::invalid(format!(
            "sample {i} has dimension {} (expected {d})",
            samples[i].x.len()
        )));
    }
    Ok(())
}

/// Dense symmetric matrix in row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Computes every entry with `i ≤ j` exactly once (rows in parallel) and
    /// mirrors it into the lower triangle.
    pub fn from_upper(n: usize, entry: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate().skip(i) {
                    *v = entry(i, j);
                }
            });
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        SymMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `aᵀ M b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                if a[i] == 0.0 {
                    return 0.0;
                }
                let row = self.row(i);
                a[i] * row.iter().zip(b).map(|(m, v)| m * v).sum::<f64>()
            })
            .sum()
    }

    /// `vᵀ M v`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        self.bilinear(v, v)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}
