mod common;

use approx::assert_abs_diff_eq;
use common::{coupled_gram, primal_from_coefficients, qp_oracle, random_instance, Instance};
use mtsvm::data::{sample_dataset, Generator, SamplingSpec, TaskDataset, TaskedSample};
use mtsvm::kernel::{GaussianKernel, TaskWeights};
use mtsvm::solver::{
    bound_report, dual_objective, kkt_residual, load_model, primal_objective, primal_objective_rho,
    read_model, save_model, shared_component_residual, train, write_model, Fit,
    RegularizationParams, SolverOptions, SupportVector, TrainedModel,
};
use mtsvm::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fit(inst: &Instance) -> Fit {
    train(
        &inst.data,
        &inst.reg,
        &inst.kernel,
        &SolverOptions::default(),
    )
    .unwrap()
}

fn two_task_spec(seed: u64) -> SamplingSpec {
    SamplingSpec::new(
        vec![0.6, 0.4],
        vec![
            Generator::threshold_1d(0.0, 0.1).unwrap(),
            Generator::threshold_1d(0.1, 0.1).unwrap(),
        ],
        seed,
    )
    .unwrap()
}

fn three_task_spec(seed: u64) -> SamplingSpec {
    SamplingSpec::new(
        vec![0.5, 0.3, 0.2],
        vec![
            Generator::threshold_1d(-0.2, 0.1).unwrap(),
            Generator::threshold_1d(0.0, 0.05).unwrap(),
            Generator::logistic_1d(4.0, 0.5, -1.0, 1.0).unwrap(),
        ],
        seed,
    )
    .unwrap()
}

fn probes(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect()
}

/// Shared and private coefficients of a model spread over all training points.
fn full_coefficients(model: &TrainedModel, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let spread = |c: Vec<f64>| {
        let mut out = vec![0.0; n];
        for (sv, v) in model.support().iter().zip(c) {
            out[sv.index] = v;
        }
        out
    };
    let shared = spread(model.shared_coefficients());
    let private = (0..model.task_count())
        .map(|t| spread(model.private_coefficients(t)))
        .collect();
    (shared, private)
}

fn kkt_of(inst: &Instance, alpha: &[f64]) -> f64 {
    let g = coupled_gram(inst);
    let y: Vec<f64> = inst.data.samples().iter().map(|s| s.label()).collect();
    (0..alpha.len())
        .map(|i| {
            let f: f64 = 0.5
                * (0..alpha.len())
                    .map(|j| alpha[j] * y[j] * g[i][j])
                    .sum::<f64>();
            let grad = 1.0 - y[i] * f;
            if alpha[i] <= 0.0 {
                grad.max(0.0)
            } else if alpha[i] >= 1.0 {
                (-grad).max(0.0)
            } else {
                grad.abs()
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn dual_objective_matches_box_qp_oracle() {
    for seed in 0..50 {
        let inst = random_instance(seed, 8, 3, 2);
        let f = fit(&inst);
        assert!(f.converged, "instance {seed} did not converge");
        let (alpha, value) = qp_oracle(&inst);
        assert!(
            (f.solution.objective - value).abs() <= 1e-6,
            "instance {seed}: solver {} oracle {value}",
            f.solution.objective
        );
        assert!(
            kkt_of(&inst, &alpha) <= 1e-6,
            "oracle KKT on instance {seed}"
        );
    }
}

#[test]
fn trained_functions_minimize_the_primal_locally() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 100..120 {
        let inst = random_instance(seed, 8, 3, 2);
        let f = fit(&inst);
        let n = inst.data.len();
        let (shared, private) = full_coefficients(&f.model, n);
        let base = primal_from_coefficients(&inst, &shared, &private);
        assert_abs_diff_eq!(
            base,
            primal_objective(&f.model, &inst.data).unwrap(),
            epsilon = 1e-9
        );
        for _ in 0..50 {
            let eps = [1e-3, 1e-2, 1e-1][rng.random_range(0..3)];
            let s2: Vec<f64> = shared
                .iter()
                .map(|c| c + eps * rng.random_range(-1.0..1.0))
                .collect();
            let p2: Vec<Vec<f64>> = private
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|v| v + eps * rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let moved = primal_from_coefficients(&inst, &s2, &p2);
            assert!(
                moved >= base - 1e-6,
                "instance {seed}: perturbed {moved} < {base}"
            );
        }
    }
}

#[test]
fn strong_and_weak_duality() {
    for seed in 200..220 {
        let inst = random_instance(seed, 8, 3, 2);
        let f = fit(&inst);
        let primal = primal_objective(&f.model, &inst.data).unwrap();
        let dual = dual_objective(&f.model, &inst.data).unwrap();
        assert_abs_diff_eq!(dual, f.solution.objective, epsilon = 1e-9);
        assert!(primal >= dual - 1e-9);
        assert!(primal - dual <= 1e-4 * inst.data.len() as f64);

        // perturb one α and rebuild: weak duality still holds
        let n = inst.data.len();
        let mut alpha = vec![0.0; n];
        for sv in f.model.support() {
            alpha[sv.index] = sv.alpha;
        }
        for i in 0..n {
            let mut a = alpha.clone();
            a[i] = (a[i] + 0.01).min(1.0);
            let model = model_from_alpha(&inst, &a);
            let p = primal_objective(&model, &inst.data).unwrap();
            let d = dual_objective(&model, &inst.data).unwrap();
            assert!(
                p - d >= -1e-9,
                "instance {seed}, coordinate {i}: gap {}",
                p - d
            );
            assert!(d <= f.solution.objective + 1e-9);
        }
    }
}

fn model_from_alpha(inst: &Instance, alpha: &[f64]) -> TrainedModel {
    let support = inst
        .data
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
    TrainedModel::new(
        support,
        inst.reg,
        inst.kernel,
        inst.data.weights().unwrap(),
        inst.data.dim(),
    )
    .unwrap()
}

#[test]
fn zero_model_objectives_and_kkt() {
    let samples = vec![
        TaskedSample::new(vec![-1.0], -1, 0).unwrap(),
        TaskedSample::new(vec![-0.8], -1, 0).unwrap(),
        TaskedSample::new(vec![0.9], 1, 1).unwrap(),
        TaskedSample::new(vec![1.2], 1, 1).unwrap(),
    ];
    let inst = Instance {
        data: TaskDataset::new(samples, 2, 1).unwrap(),
        reg: RegularizationParams::new(1.0, 2.0).unwrap(),
        kernel: GaussianKernel::new(0.5).unwrap(),
    };
    let zero = model_from_alpha(&inst, &[0.0; 4]);
    assert_eq!(primal_objective(&zero, &inst.data).unwrap(), 4.0);
    assert_eq!(primal_objective_rho(&zero, &inst.data).unwrap(), 4.0);
    // zero model: every margin is 0, so the violation is 1 − 0
    assert_eq!(kkt_residual(&zero, &inst.data).unwrap(), 1.0);
    let f = fit(&inst);
    let max_margin = inst
        .data
        .samples()
        .iter()
        .map(|s| s.label() * f.model.decision(&s.x, s.task).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(kkt_residual(&zero, &inst.data).unwrap() >= 1.0 - max_margin.min(1.0));
    assert!(kkt_residual(&f.model, &inst.data).unwrap() <= 1e-6);
}

#[test]
fn objective_forms_agree() {
    for seed in 300..330 {
        let inst = random_instance(seed, 8, 3, 2);
        let f = fit(&inst);
        let e5 = primal_objective(&f.model, &inst.data).unwrap();
        let e6 = primal_objective_rho(&f.model, &inst.data).unwrap();
        assert!(
            (e5 - e6).abs() / e5.max(1.0) <= 1e-6,
            "instance {seed}: {e5} vs {e6}"
        );
    }
    let single = Instance {
        data: TaskDataset::new(vec![TaskedSample::new(vec![0.3], 1, 0).unwrap()], 1, 1).unwrap(),
        reg: RegularizationParams::new(1.0, 1.0).unwrap(),
        kernel: GaussianKernel::default(),
    };
    let f = fit(&single);
    let e5 = primal_objective(&f.model, &single.data).unwrap();
    let e6 = primal_objective_rho(&f.model, &single.data).unwrap();
    assert_abs_diff_eq!(e5, e6, epsilon = 1e-10);
    // f = 1 at the point: zero loss, ‖f₀‖ = ‖g‖ = ½ so the penalty is ¼ + ¼
    assert_abs_diff_eq!(e5, 0.5, epsilon = 1e-12);
}

#[test]
fn duplicated_data_with_doubled_lambdas_gives_the_same_functions() {
    for seed in 0..5 {
        let spec = three_task_spec(seed);
        let data = sample_dataset(&spec, 60).unwrap().dataset;
        let mut twice = data.samples().to_vec();
        twice.extend(data.samples().iter().cloned());
        let dup = TaskDataset::new(twice, data.task_count(), data.dim()).unwrap();
        let kernel = GaussianKernel::new(0.4).unwrap();
        let opts = SolverOptions {
            tol: 1e-9,
            ..Default::default()
        };
        let a = train(
            &data,
            &RegularizationParams::new(0.7, 1.3).unwrap(),
            &kernel,
            &opts,
        )
        .unwrap();
        let b = train(
            &dup,
            &RegularizationParams::new(1.4, 2.6).unwrap(),
            &kernel,
            &opts,
        )
        .unwrap();
        assert!(a.converged && b.converged);
        for k in 0..=200 {
            let x = [-1.0 + k as f64 / 100.0];
            for t in 0..3 {
                let fa = a.model.decision(&x, t).unwrap();
                let fb = b.model.decision(&x, t).unwrap();
                assert!(
                    (fa - fb).abs() <= 1e-6,
                    "seed {seed}, x {x:?}, task {t}: {fa} vs {fb}"
                );
            }
        }
    }
}

#[test]
fn shared_component_identity() {
    for seed in 0..10 {
        let spec = three_task_spec(seed);
        let data = sample_dataset(&spec, 90).unwrap().dataset;
        let reg =
            RegularizationParams::new(0.5 + seed as f64 * 0.3, 2.0 / (1.0 + seed as f64)).unwrap();
        let f = train(
            &data,
            &reg,
            &GaussianKernel::new(0.5).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        let p = probes(100, 1, seed);
        assert!(shared_component_residual(&f.model, &p).unwrap() <= 1e-8);
    }
    // one task with λ₁ = λ₂: f₀ = f₁/2
    let spec = SamplingSpec::new(
        vec![1.0],
        vec![Generator::threshold_1d(0.0, 0.1).unwrap()],
        3,
    )
    .unwrap();
    let data = sample_dataset(&spec, 50).unwrap().dataset;
    let f = train(
        &data,
        &RegularizationParams::new(1.0, 1.0).unwrap(),
        &GaussianKernel::new(0.3).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    for x in probes(100, 1, 7) {
        let f0 = f.model.f0_component().eval(&x).unwrap();
        assert_abs_diff_eq!(f0, 0.5 * f.model.decision(&x, 0).unwrap(), epsilon = 1e-12);
    }
    // λ₂ huge: f₀ vanishes
    let f = train(
        &data,
        &RegularizationParams::new(1.0, 1e9).unwrap(),
        &GaussianKernel::new(0.3).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    for x in probes(100, 1, 8) {
        assert!(f.model.f0_component().eval(&x).unwrap().abs() <= 1e-6);
    }
}

#[test]
fn norm_and_loss_bounds_hold() {
    let mut worst: f64 = f64::INFINITY;
    for seed in 0..10 {
        for (spec, n) in [(two_task_spec(seed), 200), (three_task_spec(seed), 150)] {
            let data = sample_dataset(&spec, n).unwrap().dataset;
            for (l1, l2) in [(0.1, 0.1), (1.0, 1.0), (10.0, 0.2)] {
                let reg = RegularizationParams::new(l1, l2).unwrap();
                let f = train(
                    &data,
                    &reg,
                    &GaussianKernel::new(0.3).unwrap(),
                    &SolverOptions::default(),
                )
                .unwrap();
                let r = bound_report(&f.model, &data).unwrap();
                assert_eq!(r.violations(), 0);
                worst = worst.min(r.min_slack());
                for (t, &m) in data.counts().iter().enumerate() {
                    let bound = n as f64 / (reg.rho1() * m as f64).sqrt();
                    assert_abs_diff_eq!(r.norm_bounds[t], bound, epsilon = 1e-12 * bound);
                    assert!(r.hinge_sums[t] <= n as f64);
                }
            }
        }
    }
    assert!(worst >= 0.0);
}

#[test]
fn sup_norm_is_bounded_by_rkhs_norm() {
    // κ = 1 for the Gaussian kernel, so |f(x)| ≤ ‖f‖_K everywhere
    for seed in 0..5 {
        let data = sample_dataset(&three_task_spec(seed), 120).unwrap().dataset;
        let f = train(
            &data,
            &RegularizationParams::new(1.0, 1.0).unwrap(),
            &GaussianKernel::new(0.3).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        let geo = f.model.geometry();
        for x in probes(200, 1, seed) {
            for t in 0..3 {
                assert!(f.model.decision(&x, t).unwrap().abs() <= geo.task_norm(t) + 1e-9);
            }
        }
    }
}

#[test]
fn coupled_gram_is_positive_semidefinite() {
    for seed in 0..10 {
        let inst = random_instance(seed + 500, 40, 3, 2);
        let n = inst.data.len();
        let mt = mtsvm::kernel::MultiTaskKernel::new(
            inst.kernel,
            inst.reg.lambda1(),
            inst.reg.lambda2(),
            inst.data.weights().unwrap(),
        )
        .unwrap();
        let g = mt.gram(inst.data.samples()).unwrap();
        let reference = coupled_gram(&inst);
        for (i, row) in reference.iter().enumerate() {
            for (j, r) in row.iter().enumerate() {
                assert_abs_diff_eq!(g.get(i, j), *r, epsilon = 1e-12 * row[i].abs());
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| g.get(i, j));
        let eig = m.symmetric_eigen().eigenvalues;
        let top = eig.max();
        assert!(
            eig.min() >= -1e-10 * top,
            "instance {seed}: smallest eigenvalue {}",
            eig.min()
        );
    }
}

#[test]
fn far_query_with_huge_lambda2_scores_zero() {
    let data = sample_dataset(&two_task_spec(1), 80).unwrap().dataset;
    let sigma = 0.2;
    let f = train(
        &data,
        &RegularizationParams::new(1.0, 1e9).unwrap(),
        &GaussianKernel::new(sigma).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    let x = [1.0 + 10.0 * sigma];
    for t in 0..2 {
        assert!(f.model.decision(&x, t).unwrap().abs() <= 1e-10);
    }
}

#[test]
fn save_load_round_trip_is_exact() {
    let data = sample_dataset(&three_task_spec(11), 150).unwrap().dataset;
    let f = train(
        &data,
        &RegularizationParams::new(0.8, 1.7).unwrap(),
        &GaussianKernel::new(0.35).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    save_model(&f.model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, f.model);
    for x in probes(100, 1, 5) {
        for t in 0..3 {
            assert_eq!(
                back.decision(&x, t).unwrap(),
                f.model.decision(&x, t).unwrap()
            );
        }
    }
    // identical bytes when written again
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_model(&f.model, &mut a).unwrap();
    write_model(&back, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn malformed_model_files_are_rejected() {
    assert!(matches!(read_model(""), Err(Error::Parse { .. })));
    let data = sample_dataset(&two_task_spec(2), 40).unwrap().dataset;
    let f = train(
        &data,
        &RegularizationParams::new(1.0, 1.0).unwrap(),
        &GaussianKernel::default(),
        &SolverOptions::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_model(&f.model, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let wrong = text.replacen("mtsvm-model 1", "mtsvm-model 7", 1);
    assert!(matches!(read_model(&wrong), Err(Error::Version { .. })));
    let cut: String = text
        .lines()
        .take(text.lines().count() - 3)
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(matches!(read_model(&cut), Err(Error::Parse { .. })));
}

#[test]
fn tie_and_task_checks_on_prediction() {
    let weights = TaskWeights::new(vec![1]).unwrap();
    let empty = TrainedModel::new(
        Vec::new(),
        RegularizationParams::new(1.0, 1.0).unwrap(),
        GaussianKernel::default(),
        weights,
        1,
    )
    .unwrap();
    assert_eq!(empty.predict_task(&[0.0], 0).unwrap(), (0.0, 1));
    assert!(empty.predict_task(&[0.0], 1).is_err());
    assert!(empty.predict_task(&[0.0, 1.0], 0).is_err());
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let data = sample_dataset(&two_task_spec(4), 300).unwrap().dataset;
    let run = |seed| {
        train(
            &data,
            &RegularizationParams::new(1.0, 1.0).unwrap(),
            &GaussianKernel::new(0.3).unwrap(),
            &SolverOptions {
                seed,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let (a, b) = (run(1), run(1));
    assert_eq!(a.solution, b.solution);
    assert_eq!(a.pass_objectives, b.pass_objectives);
    // another shuffle order reaches the same optimum
    let c = run(2);
    assert_abs_diff_eq!(a.solution.objective, c.solution.objective, epsilon = 1e-6);
}

#[test]
fn free_block_step_can_be_disabled() {
    let inst = random_instance(42, 8, 2, 1);
    let plain = train(
        &inst.data,
        &inst.reg,
        &inst.kernel,
        &SolverOptions {
            free_block_limit: 0,
            ..Default::default()
        },
    )
    .unwrap();
    let fast = fit(&inst);
    assert!(plain.converged && fast.converged);
    assert_abs_diff_eq!(
        plain.solution.objective,
        fast.solution.objective,
        epsilon = 1e-6
    );
}
