//! Primal and dual objective values and the optimality identities a trained
//! model must satisfy.

use crate::data::TaskDataset;
use crate::error::{Error, Result};

use super::model::TrainedModel;
use super::violation;

/// Hinge loss `max(0, 1 − z)`.
#[inline]
pub fn hinge(z: f64) -> f64 {
    (1.0 - z).max(0.0)
}

fn check_dataset(model: &TrainedModel, data: &TaskDataset) -> Result<()> {
    if data.dim() != model.dim() {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match model dimension {}",
            data.dim(),
            model.dim()
        )));
    }
    if data.task_count() > model.task_count() {
        return Err(Error::invalid("dataset has more tasks than the model"));
    }
    Ok(())
}

/// `f_{t_i}(x_i)` for every sample.
pub(crate) fn decisions(model: &TrainedModel, data: &TaskDataset) -> Result<Vec<f64>> {
    check_dataset(model, data)?;
    data.samples()
        .iter()
        .map(|s| model.decision(&s.x, s.task))
        .collect()
}

fn hinge_sum(model: &TrainedModel, data: &TaskDataset) -> Result<f64> {
    Ok(decisions(model, data)?
        .iter()
        .zip(data.samples())
        .map(|(f, s)| hinge(s.label() * f))
        .sum())
}

/// `Σ ξ + λ₁ Σ_t (m_t/N)‖g_t‖² + λ₂‖f₀‖²` with `g_t = f_t − f₀`.
pub fn primal_objective(model: &TrainedModel, data: &TaskDataset) -> Result<f64> {
    let loss = hinge_sum(model, data)?;
    let geo = model.geometry();
    let w = model.weights();
    let private: f64 = (0..model.task_count())
        .map(|t| w.frequency(t) * geo.norm_sq(&model.private_coefficients(t)))
        .sum();
    let shared = geo.norm_sq(&model.shared_coefficients());
    Ok(loss + model.reg().lambda1() * private + model.reg().lambda2() * shared)
}

/// `Σ ξ + ρ₁ Σ_t (m_t/N)‖f_t‖² + ρ₂ Σ_t (m_t/N)‖f_t − Σ_s (m_s/N) f_s‖²`.
pub fn primal_objective_rho(model: &TrainedModel, data: &TaskDataset) -> Result<f64> {
    let loss = hinge_sum(model, data)?;
    let geo = model.geometry();
    let freq = model.weights().frequencies();
    let mut own = 0.0;
    let mut spread = 0.0;
    for (t, wt) in freq.iter().enumerate() {
        own += wt * geo.task_norm(t).powi(2);
        spread += wt * geo.deviation_norm(t, &freq).powi(2);
    }
    Ok(loss + model.reg().rho1() * own + model.reg().rho2() * spread)
}

/// Dual coefficients of `data`'s samples as stored in the model.
fn dual_coefficients(model: &TrainedModel, data: &TaskDataset) -> Result<Vec<f64>> {
    let mut alpha = vec![0.0; data.len()];
    for sv in model.support() {
        let s = data
            .samples()
            .get(sv.index)
            .filter(|s| s.task == sv.task && s.y == sv.y && s.x == sv.x)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "support vector {} is not part of this dataset",
                    sv.index
                ))
            })?;
        debug_assert_eq!(s.y, sv.y);
        alpha[sv.index] = sv.alpha;
    }
    Ok(alpha)
}

/// Dual objective `Σ α_i − ½ Σ α_i y_i f_{t_i}(x_i)`.
pub fn dual_objective(model: &TrainedModel, data: &TaskDataset) -> Result<f64> {
    let alpha = dual_coefficients(model, data)?;
    let f = decisions(model, data)?;
    Ok(alpha
        .iter()
        .zip(&f)
        .zip(data.samples())
        .map(|((a, fi), s)| a - 0.5 * a * s.label() * fi)
        .sum())
}

/// Largest violation of the optimality conditions over the training set:
/// `α = 0 ⇒ y f ≥ 1`, `0 < α < 1 ⇒ y f = 1`, `α = 1 ⇒ y f ≤ 1`.
pub fn kkt_residual(model: &TrainedModel, data: &TaskDataset) -> Result<f64> {
    let alpha = dual_coefficients(model, data)?;
    let f = decisions(model, data)?;
    Ok(alpha
        .iter()
        .zip(&f)
        .zip(data.samples())
        .map(|((a, fi), s)| violation(*a, 1.0 - s.label() * fi))
        .fold(0.0, f64::max))
}

/// Largest `|f₀(x) − (λ₁/(λ₁+λ₂)) Σ_t (m_t/N) f_t(x)|` over `probes`.
pub fn shared_component_residual(model: &TrainedModel, probes: &[Vec<f64>]) -> Result<f64> {
    let (l1, l2) = (model.reg().lambda1(), model.reg().lambda2());
    let freq = model.weights().frequencies();
    let f0 = model.f0_component();
    probes.iter().try_fold(0.0f64, |acc, x| {
        let f = model.decision_all(x)?;
        let mean: f64 = f.iter().zip(&freq).map(|(a, w)| a * w).sum();
        Ok(acc.max((f0.eval(x)? - l1 / (l1 + l2) * mean).abs()))
    })
}

/// Per-task norms and hinge sums next to their a-priori bounds
/// `‖f_t‖_K ≤ N/√(ρ₁ m_t)` and `Σ_{i∈t} ℓ(y_i f_t(x_i)) ≤ N`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub norms: Vec<f64>,
    pub norm_bounds: Vec<f64>,
    pub hinge_sums: Vec<f64>,
    pub hinge_bound: f64,
}

impl BoundReport {
    /// Smallest `bound − value` over all tasks and both bounds.
    pub fn min_slack(&self) -> f64 {
        let norm = self.norms.iter().zip(&self.norm_bounds).map(|(v, b)| b - v);
        let loss = self.hinge_sums.iter().map(|v| self.hinge_bound - v);
        norm.chain(loss).fold(f64::INFINITY, f64::min)
    }

    pub fn violations(&self) -> usize {
        let norm = self
            .norms
            .iter()
            .zip(&self.norm_bounds)
            .filter(|(v, b)| v > b)
            .count();
        norm + self
            .hinge_sums
            .iter()
            .filter(|&&v| v > self.hinge_bound)
            .count()
    }
}

pub fn bound_report(model: &TrainedModel, data: &TaskDataset) -> Result<BoundReport> {
    let f = decisions(model, data)?;
    let geo = model.geometry();
    let w = model.weights();
    let n = w.total() as f64;
    let mut hinge_sums = vec![0.0; model.task_count()];
    for (fi, s) in f.iter().zip(data.samples()) {
        hinge_sums[s.task] += hinge(s.label() * fi);
    }
    Ok(BoundReport {
        norms: (0..model.task_count()).map(|t| geo.task_norm(t)).collect(),
        norm_bounds: w
            .counts()
            .iter()
            .map(|&m| n / (model.reg().rho1() * m as f64).sqrt())
            .collect(),
        hinge_sums,
        hinge_bound: n,
    })
}
