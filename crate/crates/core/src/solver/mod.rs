//! Training by exact coordinate ascent on the dual of the multi-task SVM.
//!
//! With `v_i = α_i y_i` and the coupled Gram matrix `G`, the dual is
//!
//! ```text
//! maximize  Σ α_i − ¼ vᵀ G v    subject to 0 ≤ α_i ≤ 1
//! ```
//!
//! and every task function is `f_t(x) = ½ Σ_j v_j G((x_j,t_j),(x,t))`. There
//! is no bias term, so there is no equality constraint and each coordinate
//! can be maximized exactly and clipped to the box.
//!
//! Between passes the coordinates strictly inside the box take one projected
//! Newton step together, with the bound coordinates held fixed. Gaussian Gram
//! blocks are badly conditioned, so coordinate ascent alone only creeps
//! toward the optimum on this block.

mod io;
mod model;
mod objective;

pub use io::{load_model, read_model, save_model, write_model, MODEL_SCHEMA_VERSION};
pub use model::{Geometry, SharedComponent, SupportVector, TrainedModel};
pub use objective::{
    bound_report, dual_objective, hinge, kkt_residual, primal_objective, primal_objective_rho,
    shared_component_residual, BoundReport,
};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::kernel::{GaussianKernel, MultiTaskKernel, SymMatrix};
use crate::rng::stream;

/// `(ρ₁, ρ₂) = (λ₁λ₂/(λ₁+λ₂), λ₁²/(λ₁+λ₂))`.
pub fn rho_from_lambda(lambda1: f64, lambda2: f64) -> Result<(f64, f64)> {
    for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let sum = lambda1 + lambda2;
    Ok((lambda1 * lambda2 / sum, lambda1 * lambda1 / sum))
}

/// The two regularization weights and their equivalent `(ρ₁, ρ₂)` form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRegularization", into = "RawRegularization")]
pub struct RegularizationParams {
    lambda1: f64,
    lambda2: f64,
    rho1: f64,
    rho2: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRegularization {
    lambda1: f64,
    lambda2: f64,
}

impl TryFrom<RawRegularization> for RegularizationParams {
    type Error = Error;
    fn try_from(raw: RawRegularization) -> Result<Self> {
        RegularizationParams::new(raw.lambda1, raw.lambda2)
    }
}

impl From<RegularizationParams> for RawRegularization {
    fn from(r: RegularizationParams) -> Self {
        RawRegularization {
            lambda1: r.lambda1,
            lambda2: r.lambda2,
        }
    }
}

impl RegularizationParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let (rho1, rho2) = rho_from_lambda(lambda1, lambda2)?;
        Ok(RegularizationParams {
            lambda1,
            lambda2,
            rho1,
            rho2,
        })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    pub fn rho2(&self) -> f64 {
        self.rho2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Bound on per-coordinate change and on the KKT violation seen in a pass.
    pub tol: f64,
    pub max_passes: usize,
    /// Seed for the per-pass coordinate shuffles.
    pub seed: u64,
    /// Largest training set for which the Gram matrix is stored densely;
    /// above it rows are recomputed when needed.
    pub dense_limit: usize,
    /// Largest free block that takes a Newton step between passes; 0 turns
    /// the step off.
    pub free_block_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_passes: 10_000,
            seed: 0,
            dense_limit: 8192,
            free_block_limit: 300,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::invalid("max_passes must be at least 1"));
        }
        Ok(())
    }
}

/// Dual variables at termination.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct Fit {
    pub model: TrainedModel,
    pub solution: DualSolution,
    pub converged: bool,
    pub passes: usize,
    /// Dual objective after each pass, tracked incrementally.
    pub pass_objectives: Vec<f64>,
}

enum GramRows<'a> {
    Dense(SymMatrix),
    OnDemand {
        kernel: &'a MultiTaskKernel,
        data: &'a TaskDataset,
        buf: Vec<f64>,
    },
}

impl GramRows<'_> {
    fn diag(&self, i: usize) -> f64 {
        match self {
            GramRows::Dense(g) => g.get(i, i),
            GramRows::OnDemand { kernel, data, .. } => {
                let t = data.samples()[i].task;
                kernel.coupling(t, t)
            }
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        match self {
            GramRows::Dense(g) => g.row(i),
            GramRows::OnDemand { kernel, data, buf } => {
                let s = data.samples();
                let (xi, ti) = (&s[i].x, s[i].task);
                buf.clear();
                buf.extend(
                    s.iter().map(|b| {
                        kernel.coupling(ti, b.task) * kernel.base().eval_unchecked(xi, &b.x)
                    }),
                );
                buf
            }
        }
    }
}

/// Trains the multi-task SVM on `data`.
///
/// Non-convergence is not an error: the returned [`Fit`] carries
/// `converged = false` together with the final KKT residual.
pub fn train(
    data: &TaskDataset,
    reg: &RegularizationParams,
    kernel: &GaussianKernel,
    opts: &SolverOptions,
) -> Result<Fit> {
    opts.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let weights = data.weights()?;
    let mt = MultiTaskKernel::new(*kernel, reg.lambda1(), reg.lambda2(), weights.clone())?;
    let n = data.len();
    let y: Vec<f64> = data.samples().iter().map(|s| s.label()).collect();

    let mut rows = if n <= opts.dense_limit {
        GramRows::Dense(mt.gram(data.samples())?)
    } else {
        GramRows::OnDemand {
            kernel: &mt,
            data,
            buf: Vec::with_capacity(n),
        }
    };
    let diag: Vec<f64> = (0..n).map(|i| rows.diag(i)).collect();

    let mut alpha = vec![0.0; n];
    // f[i] = f_{t_i}(x_i) = ½ (G v)_i
    let mut f = vec![0.0; n];
    let mut objective = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut pass_objectives = Vec::new();
    let mut converged = false;
    let mut passes = 0;
    let mut damping_hint = 0.0;

    while passes < opts.max_passes {
        let mut rng: ChaCha8Rng = stream(opts.seed, &[passes as u64]);
        order.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let grad = 1.0 - y[i] * f[i];
            let a = alpha[i];
            max_violation = max_violation.max(violation(a, grad));
            let next = (a + 2.0 * grad / diag[i]).clamp(0.0, 1.0);
            let delta = next - a;
            if delta == 0.0 {
                continue;
            }
            alpha[i] = next;
            objective += delta * grad - 0.25 * diag[i] * delta * delta;
            max_change = max_change.max(delta.abs());
            let c = 0.5 * delta * y[i];
            for (fj, gij) in f.iter_mut().zip(rows.row(i)) {
                *fj += c * gij;
            }
        }
        passes += 1;
        pass_objectives.push(objective);
        if max_change <= opts.tol && max_violation <= opts.tol {
            // confirm on the final iterate: later updates in the pass move earlier margins
            f = margins(&mut rows, &alpha, &y);
            if kkt(&alpha, &y, &f) <= opts.tol {
                converged = true;
                break;
            }
        }
        objective += free_block_step(
            &mut rows,
            &mut alpha,
            &mut f,
            &y,
            opts.free_block_limit,
            &mut damping_hint,
        );
    }

    // recompute margins from scratch to shed accumulated rounding
    let fresh = margins(&mut rows, &alpha, &y);
    let kkt_residual = kkt(&alpha, &y, &fresh);
    let v: Vec<f64> = alpha.iter().zip(&y).map(|(a, yi)| a * yi).collect();
    let objective =
        alpha.iter().sum::<f64>() - 0.5 * v.iter().zip(&fresh).map(|(a, b)| a * b).sum::<f64>();

    let model = TrainedModel::from_alpha(data, &alpha, *reg, *kernel, weights)?;
    Ok(Fit {
        model,
        solution: DualSolution {
            alpha,
            objective,
            kkt_residual,
        },
        converged,
        passes,
        pass_objectives,
    })
}

/// One projected Newton step on the coordinates with `0 < α < 1`, clipped
/// to the box and exactly line-searched. Returns the objective increase.
fn free_block_step(
    rows: &mut GramRows<'_>,
    alpha: &mut [f64],
    f: &mut [f64],
    y: &[f64],
    limit: usize,
    damping_hint: &mut f64,
) -> f64 {
    let free: Vec<usize> = (0..alpha.len())
        .filter(|&i| alpha[i] > 0.0 && alpha[i] < 1.0)
        .collect();
    let m = free.len();
    if m < 2 || m > limit {
        return 0.0;
    }
    // the dual's Hessian on the block is −H with H = ½ (Y G Y)_FF
    let mut h = DMatrix::zeros(m, m);
    for (a, &i) in free.iter().enumerate() {
        let row = rows.row(i);
        for (b, &j) in free.iter().enumerate() {
            h[(a, b)] = 0.5 * y[i] * y[j] * row[j];
        }
    }
    let g = DVector::from_iterator(m, free.iter().map(|&i| 1.0 - y[i] * f[i]));
    let scale = (0..m).map(|a| h[(a, a)]).fold(0.0, f64::max);
    // damp until the direction stays within a unit box: the undamped
    // direction runs along near-null eigenvectors and is useless
    let mut damping = (*damping_hint * 1e-2).clamp(1e-10 * scale, 1e3 * scale);
    let d = loop {
        let mut hd = h.clone();
        for a in 0..m {
            hd[(a, a)] += damping;
        }
        if let Some(d) = hd.cholesky().map(|ch| ch.solve(&g)) {
            if d.amax() <= 1.0 {
                *damping_hint = damping;
                break d;
            }
        }
        damping *= 10.0;
        if damping > 1e3 * scale {
            return 0.0;
        }
    };
    let gd = g.dot(&d);
    let dhd = d.dot(&(&h * &d));
    if !(gd > 0.0 && dhd > 0.0) {
        return 0.0;
    }
    // projected arc: clip α + s·d to the box, halving s until the exact gain is positive
    let mut step = gd / dhd;
    let mut best = None;
    for _ in 0..40 {
        let delta = DVector::from_iterator(
            m,
            free.iter()
                .enumerate()
                .map(|(a, &i)| (alpha[i] + step * d[a]).clamp(0.0, 1.0) - alpha[i]),
        );
        let gain = g.dot(&delta) - 0.5 * delta.dot(&(&h * &delta));
        if gain > 0.0 {
            best = Some((delta, gain));
            break;
        }
        step *= 0.5;
    }
    let Some((delta, gain)) = best else {
        return 0.0;
    };
    for (a, &i) in free.iter().enumerate() {
        alpha[i] = (alpha[i] + step * d[a]).clamp(0.0, 1.0);
        let c = 0.5 * delta[a] * y[i];
        for (fj, gij) in f.iter_mut().zip(rows.row(i)) {
            *fj += c * gij;
        }
    }
    gain
}

fn margins(rows: &mut GramRows<'_>, alpha: &[f64], y: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; alpha.len()];
    for (i, (a, yi)) in alpha.iter().zip(y).enumerate() {
        if *a == 0.0 {
            continue;
        }
        let c = 0.5 * a * yi;
        for (fj, gij) in f.iter_mut().zip(rows.row(i)) {
            *fj += c * gij;
        }
    }
    f
}

fn kkt(alpha: &[f64], y: &[f64], f: &[f64]) -> f64 {
    (0..alpha.len())
        .map(|i| violation(alpha[i], 1.0 - y[i] * f[i]))
        .fold(0.0, f64::max)
}

/// Violation of the optimality conditions for one coordinate given
/// `grad = 1 − y f(x)`.
#[inline]
pub(crate) fn violation(alpha: f64, grad: f64) -> f64 {
    if alpha <= 0.0 {
        grad.max(0.0)
    } else if alpha >= 1.0 {
        (-grad).max(0.0)
    } else {
        grad.abs()
    }
}
