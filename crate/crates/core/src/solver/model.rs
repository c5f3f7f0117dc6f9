use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::kernel::{base_gram, GaussianKernel, SymMatrix, TaskWeights};

use super::RegularizationParams;

/// A training observation with a nonzero dual coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportVector {
    /// Position in the training set.
    pub index: usize,
    pub task: usize,
    pub y: i8,
    pub alpha: f64,
    pub x: Vec<f64>,
}

/// Everything needed to evaluate every task function `f_t` and the shared
/// component `f₀`.
///
/// Evaluation groups the expansion as
/// `f_t(x) = f₀(x) + g_t(x)` with `f₀ = (1/(2λ₂)) Σ_j v_j K(x_j, ·)` and
/// `g_t = N/(2λ₁ m_t) Σ_{j ∈ t} v_j K(x_j, ·)`, which is the coupled-kernel
/// expansion `½ Σ_j v_j G((x_j,t_j),(·,t))` regrouped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    support: Vec<SupportVector>,
    reg: RegularizationParams,
    kernel: GaussianKernel,
    weights: TaskWeights,
    dim: usize,
    // flattened support points and `v_j = α_j y_j`
    points: Vec<f64>,
    coef: Vec<f64>,
}

impl TrainedModel {
    pub fn new(
        support: Vec<SupportVector>,
        reg: RegularizationParams,
        kernel: GaussianKernel,
        weights: TaskWeights,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be at least 1"));
        }
        for sv in &support {
            if sv.x.len() != dim {
                return Err(Error::invalid("support vector dimension mismatch"));
            }
            if sv.task >= weights.task_count() {
                return Err(Error::invalid(format!(
                    "support vector task {} out of range",
                    sv.task + 1
                )));
            }
            if !(sv.alpha > 0.0 && sv.alpha <= 1.0) || (sv.y != 1 && sv.y != -1) {
                return Err(Error::invalid("support vector has invalid alpha or label"));
            }
        }
        let points = support.iter().flat_map(|sv| sv.x.iter().copied()).collect();
        let coef = support
            .iter()
            .map(|sv| sv.alpha * f64::from(sv.y))
            .collect();
        Ok(TrainedModel {
            support,
            reg,
            kernel,
            weights,
            dim,
            points,
            coef,
        })
    }

    pub(crate) fn from_alpha(
        data: &TaskDataset,
        alpha: &[f64],
        reg: RegularizationParams,
        kernel: GaussianKernel,
        weights: TaskWeights,
    ) -> Result<Self> {
        let support = data
            .samples()
            .iter()
            .zip(alpha)
            .enumerate()
            .filter(|(_, (_, &a))| a > 0.0)
            .map(|(index, (s, &alpha))| SupportVector {
                index,
                task: s.task,
                y: s.y,
                alpha,
                x: s.x.clone(),
            })
            .collect();
        Self::new(support, reg, kernel, weights, data.dim())
    }

    pub fn support(&self) -> &[SupportVector] {
        &self.support
    }

    pub fn reg(&self) -> &RegularizationParams {
        &self.reg
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn weights(&self) -> &TaskWeights {
        &self.weights
    }

    pub fn task_count(&self) -> usize {
        self.weights.task_count()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Scale of the shared expansion, `1/(2λ₂)`.
    fn shared_scale(&self) -> f64 {
        0.5 / self.reg.lambda2()
    }

    /// Scale of task `t`'s private expansion, `N/(2λ₁ m_t)`.
    fn private_scale(&self, t: usize) -> f64 {
        0.5 * self.weights.total() as f64 / (self.reg.lambda1() * self.weights.counts()[t] as f64)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: point has {} features, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn check_task(&self, t: usize) -> Result<()> {
        if t >= self.task_count() {
            return Err(Error::invalid(format!(
                "unknown task id {} (model has {} tasks)",
                t + 1,
                self.task_count()
            )));
        }
        Ok(())
    }

    /// `(f₀(x), [Σ_{j∈t} v_j K(x_j, x)]_t)`.
    fn expansions(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut shared = 0.0;
        let mut private = vec![0.0; self.task_count()];
        for (j, sv) in self.support.iter().enumerate() {
            let p = &self.points[j * self.dim..(j + 1) * self.dim];
            let term = self.coef[j] * self.kernel.eval_unchecked(p, x);
            shared += term;
            private[sv.task] += term;
        }
        (shared * self.shared_scale(), private)
    }

    /// Decision values `f_t(x)` for every task.
    pub fn decision_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let (f0, private) = self.expansions(x);
        Ok(private
            .iter()
            .enumerate()
            .map(|(t, p)| f0 + self.private_scale(t) * p)
            .collect())
    }

    /// `f_t(x)`.
    pub fn decision(&self, x: &[f64], t: usize) -> Result<f64> {
        self.check_task(t)?;
        self.check_point(x)?;
        let (f0, private) = self.expansions(x);
        Ok(f0 + self.private_scale(t) * private[t])
    }

    /// Score `f_t(x)` and label `sgn f_t(x)` (with `sgn 0 = +1`).
    pub fn predict_task(&self, x: &[f64], t: usize) -> Result<(f64, i8)> {
        let score = self.decision(x, t)?;
        Ok((score, sign(score)))
    }

    /// The shared component `f₀`.
    pub fn f0_component(&self) -> SharedComponent<'_> {
        SharedComponent { model: self }
    }

    /// Expansion coefficients of every `f_t` over the support points.
    pub fn task_coefficients(&self) -> Vec<Vec<f64>> {
        (0..self.task_count())
            .map(|t| {
                let private = self.private_scale(t);
                self.support
                    .iter()
                    .zip(&self.coef)
                    .map(|(sv, v)| {
                        v * (self.shared_scale() + if sv.task == t { private } else { 0.0 })
                    })
                    .collect()
            })
            .collect()
    }

    /// Expansion coefficients of `f₀`.
    pub fn shared_coefficients(&self) -> Vec<f64> {
        self.coef.iter().map(|v| v * self.shared_scale()).collect()
    }

    /// Expansion coefficients of `g_t = f_t − f₀`.
    pub fn private_coefficients(&self, t: usize) -> Vec<f64> {
        let scale = self.private_scale(t);
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, v)| if sv.task == t { v * scale } else { 0.0 })
            .collect()
    }

    /// RKHS geometry of the model's functions (base Gram over the support).
    pub fn geometry(&self) -> Geometry {
        let pts: Vec<&[f64]> = self.support.iter().map(|sv| sv.x.as_slice()).collect();
        Geometry {
            gram: base_gram(&self.kernel, &pts),
            tasks: self.task_coefficients(),
        }
    }
}

#[inline]
pub(crate) fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Handle on `f₀ = (1/(2λ₂)) Σ_j α_j y_j K(x_j, ·)`.
#[derive(Clone, Copy, Debug)]
pub struct SharedComponent<'a> {
    model: &'a TrainedModel,
}

impl SharedComponent<'_> {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.model.check_point(x)?;
        let mut acc = 0.0;
        for (j, v) in self.model.coef.iter().enumerate() {
            let p = &self.model.points[j * self.model.dim..(j + 1) * self.model.dim];
            acc += v * self.model.kernel.eval_unchecked(p, x);
        }
        Ok(acc * self.model.shared_scale())
    }
}

/// Base-kernel Gram matrix over the support points together with each task
/// function's expansion coefficients; all RKHS norms are exact quadratic
/// forms in it.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub gram: SymMatrix,
    pub tasks: Vec<Vec<f64>>,
}

impl Geometry {
    /// Squared norm of the expansion with coefficients `c`.
    pub fn norm_sq(&self, c: &[f64]) -> f64 {
        self.gram.quadratic(c).max(0.0)
    }

    /// Coefficients of `Σ_t w_t f_t`.
    pub fn combine(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.gram.dim()];
        for (wt, c) in w.iter().zip(&self.tasks) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += wt * ci;
            }
        }
        out
    }

    /// `‖Σ_t w_t f_t‖_K`.
    pub fn combination_norm(&self, w: &[f64]) -> f64 {
        self.norm_sq(&self.combine(w)).sqrt()
    }

    /// `‖f_t‖_K`.
    pub fn task_norm(&self, t: usize) -> f64 {
        self.norm_sq(&self.tasks[t]).sqrt()
    }

    /// `‖f_t − Σ_s w_s f_s‖_K`.
    pub fn deviation_norm(&self, t: usize, w: &[f64]) -> f64 {
        let mut c = self.combine(w);
        for (ci, ti) in c.iter_mut().zip(&self.tasks[t]) {
            *ci = ti - *ci;
        }
        self.norm_sq(&c).sqrt()
    }

    /// Task-by-task inner products `⟨f_t, f_s⟩_K`.
    pub fn inner_products(&self) -> Vec<Vec<f64>> {
        self.tasks
            .iter()
            .map(|a| {
                self.tasks
                    .iter()
                    .map(|b| self.gram.bilinear(a, b))
                    .collect()
            })
            .collect()
    }
}
