#![allow(dead_code)]

use mtsvm::data::{TaskDataset, TaskedSample};
use mtsvm::kernel::GaussianKernel;
use mtsvm::solver::RegularizationParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub data: TaskDataset,
    pub reg: RegularizationParams,
    pub kernel: GaussianKernel,
}

/// Random small instance: every task gets at least one sample.
pub fn random_instance(seed: u64, max_n: usize, max_tasks: usize, max_dim: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_count = rng.random_range(1..=max_tasks);
    let n = rng.random_range(t_count..=max_n);
    let dim = rng.random_range(1..=max_dim);
    let samples = (0..n)
        .map(|i| {
            let task = if i < t_count {
                i
            } else {
                rng.random_range(0..t_count)
            };
            let x = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
            let y = if rng.random_bool(0.5) { 1 } else { -1 };
            TaskedSample::new(x, y, task).unwrap()
        })
        .collect();
    let log_lambda = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-1.0..1.0));
    let reg = RegularizationParams::new(log_lambda(&mut rng), log_lambda(&mut rng)).unwrap();
    let kernel = GaussianKernel::new(rng.random_range(0.3..2.0)).unwrap();
    Instance {
        data: TaskDataset::new(samples, t_count, dim).unwrap(),
        reg,
        kernel,
    }
}

pub fn gauss(sigma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Coupled Gram matrix written out from scratch.
pub fn coupled_gram(inst: &Instance) -> Vec<Vec<f64>> {
    let s = inst.data.samples();
    let n = s.len() as f64;
    let (l1, l2) = (inst.reg.lambda1(), inst.reg.lambda2());
    let m = inst.data.counts();
    s.iter()
        .map(|a| {
            s.iter()
                .map(|b| {
                    let private = if a.task == b.task {
                        n / (l1 * m[a.task] as f64)
                    } else {
                        0.0
                    };
                    (1.0 / l2 + private) * gauss(inst.kernel.sigma(), &a.x, &b.x)
                })
                .collect()
        })
        .collect()
}

pub fn dual_value(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let quad: f64 = (0..alpha.len())
        .map(|i| {
            (0..alpha.len())
                .map(|j| alpha[i] * q[i][j] * alpha[j])
                .sum::<f64>()
        })
        .sum();
    alpha.iter().sum::<f64>() - 0.25 * quad
}

/// Box QP `max Σα − ¼ αᵀQα, 0 ≤ α ≤ 1` with `Q = YGY`, solved by
/// accelerated projected gradient with restarts until the iterate stops
/// moving. Step `1/L` with `L` a Gershgorin bound on `½Q`.
pub fn qp_oracle(inst: &Instance) -> (Vec<f64>, f64) {
    let g = coupled_gram(inst);
    let y: Vec<f64> = inst.data.samples().iter().map(|s| s.label()).collect();
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * g[i][j]).collect())
        .collect();
    let lip = (0..n)
        .map(|i| 0.5 * q[i].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lip;
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| 1.0 - 0.5 * (0..n).map(|j| q[i][j] * a[j]).sum::<f64>())
            .collect()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut value = dual_value(&q, &x);
    for _ in 0..2_000_000 {
        let gz = grad(&z);
        let next: Vec<f64> = (0..n)
            .map(|i| (z[i] + step * gz[i]).clamp(0.0, 1.0))
            .collect();
        let next_value = dual_value(&q, &next);
        let moved = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if next_value < value {
            // restart momentum
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = (0..n)
            .map(|i| next[i] + (t - 1.0) / t_next * (next[i] - x[i]))
            .collect();
        t = t_next;
        x = next;
        value = next_value;
        if moved < 1e-15 {
            break;
        }
    }
    (x, value)
}

/// Coupled-form primal evaluated from raw expansion coefficients over the
/// training points: `shared` gives `f₀`, `private[t]` gives `g_t`.
pub fn primal_from_coefficients(inst: &Instance, shared: &[f64], private: &[Vec<f64>]) -> f64 {
    let s = inst.data.samples();
    let n = s.len();
    let sigma = inst.kernel.sigma();
    let k: Vec<Vec<f64>> = s
        .iter()
        .map(|a| s.iter().map(|b| gauss(sigma, &a.x, &b.x)).collect())
        .collect();
    let quad = |c: &[f64]| -> f64 {
        (0..n)
            .map(|i| (0..n).map(|j| c[i] * k[i][j] * c[j]).sum::<f64>())
            .sum()
    };
    let eval = |c: &[f64], i: usize| -> f64 { (0..n).map(|j| c[j] * k[j][i]).sum() };
    let loss: f64 = s
        .iter()
        .enumerate()
        .map(|(i, smp)| {
            (1.0 - smp.label() * (eval(shared, i) + eval(&private[smp.task], i))).max(0.0)
        })
        .sum();
    let m = inst.data.counts();
    let private_pen: f64 = private
        .iter()
        .enumerate()
        .map(|(t, c)| m[t] as f64 / n as f64 * quad(c))
        .sum();
    loss + inst.reg.lambda1() * private_pen + inst.reg.lambda2() * quad(shared)
}
