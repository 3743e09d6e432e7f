use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use ri_interp::geodesic::{curve_neg_log_ri, riemannian_length};
use ri_interp::prior::seeded_rng;
use ri_interp::{
    curve_ri, energy_gradient, linear_init, optimize, path_energy, riemann_metric, semicircle_prior,
    AnalyticWarp, Generator, InterpolationPath, OptimizerKind, PriorDensity, RealisticityModel, RiBackend,
    SegmentNorm, SolverConfig, UniformBox,
};

fn gaussian(dim: usize, alpha: f64) -> RealisticityModel {
    RealisticityModel::with_scaling(RiBackend::GaussianExact { dim }, alpha, 1e-9).unwrap()
}

fn swirl(strength: f64) -> Generator {
    let mut params = BTreeMap::new();
    params.insert("strength".to_string(), strength);
    Generator::Warp(AnalyticWarp::from_name("swirl2d", 2, &params).unwrap())
}

fn perturbed(path: &InterpolationPath, sigma: f64, seed: u64) -> InterpolationPath {
    let mut rng = seeded_rng(seed);
    let mids = path
        .midpoints()
        .iter()
        .map(|m| m.map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    path.with_midpoints(mids).unwrap()
}

fn shifted(path: &InterpolationPath, dir: &DMatrix<f64>, eps: f64) -> InterpolationPath {
    let mids = path
        .midpoints()
        .iter()
        .enumerate()
        .map(|(i, m)| m + dir.row(i).transpose() * eps)
        .collect();
    path.with_midpoints(mids).unwrap()
}

#[test]
fn gradient_matches_directional_differences() {
    let mut rng = seeded_rng(31);
    let semi_kde = RealisticityModel::kde(semicircle_prior(2).unwrap(), 2000, 1).unwrap();
    let mlp = Generator::mlp(vec![
        ri_interp::Layer::new(
            DMatrix::from_fn(5, 2, |i, j| ((i * 2 + j) as f64 * 0.7).sin()),
            DVector::from_fn(5, |i, _| 0.1 * i as f64),
            ri_interp::Activation::Tanh,
        ),
        ri_interp::Layer::new(
            DMatrix::from_fn(3, 5, |i, j| ((i * 5 + j) as f64 * 1.3).cos()),
            DVector::zeros(3),
            ri_interp::Activation::Identity,
        ),
    ])
    .unwrap();
    let cases: Vec<(RealisticityModel, Generator, SegmentNorm)> = vec![
        (gaussian(2, 1.0), swirl(0.5), SegmentNorm::Decoded),
        (gaussian(2, 0.3), mlp.clone(), SegmentNorm::Decoded),
        (semi_kde.clone(), Generator::identity(2), SegmentNorm::Latent),
        (semi_kde, mlp, SegmentNorm::Decoded),
        (
            RealisticityModel::new(RiBackend::GaussianErfApprox { dim: 2 }).unwrap(),
            Generator::Warp(AnalyticWarp::Blowup { dim: 2, beta: 0.2 }),
            SegmentNorm::Latent,
        ),
    ];
    for (idx, (model, generator, mode)) in cases.iter().enumerate() {
        for trial in 0..3 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let path = perturbed(&linear_init(&x, &y, 7).unwrap(), 0.3, rng.random());
            let dir = DMatrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let grad = energy_gradient(&path, model, generator, *mode).unwrap();
            let analytic = grad.dot(&dir);
            let eps = 1e-5;
            let fd = (path_energy(&shifted(&path, &dir, eps), model, generator, *mode).unwrap()
                - path_energy(&shifted(&path, &dir, -eps), model, generator, *mode).unwrap())
                / (2.0 * eps);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12);
            assert!(rel < 1e-3, "case {idx} trial {trial}: {analytic} vs {fd}");
        }
    }
}

#[test]
fn optimizer_keeps_endpoints_and_lowers_energy() {
    let model = gaussian(2, 1.0);
    let g = swirl(0.4);
    let start = linear_init(&[2.0, 0.5], &[-1.0, 2.5], 12).unwrap();
    let cfg = SolverConfig {
        k: 12,
        max_iters: 300,
        ..SolverConfig::default()
    };
    let (out, trace) = optimize(&start, &model, &g, &cfg).unwrap();
    assert_eq!(out.start(), start.start());
    assert_eq!(out.end(), start.end());
    assert_eq!(trace.energy_per_iteration.len(), trace.iterations_run);
    assert_eq!(trace.grad_norm_per_iteration.len(), trace.iterations_run);
    for w in trace.energy_per_iteration.windows(2) {
        assert!(w[1] <= w[0]);
    }
    let final_energy = path_energy(&out, &model, &g, SegmentNorm::Decoded).unwrap();
    assert!(final_energy <= trace.energy_per_iteration[0]);
    assert!(final_energy <= *trace.energy_per_iteration.last().unwrap());
}

#[test]
fn linear_decoder_on_uniform_prior_recovers_the_segment() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.3, -0.4, 1.2, 0.5, 0.5]);
    let g = Generator::linear(a, DVector::from_vec(vec![0.0, 1.0, -1.0])).unwrap();
    let (x, y) = ([-1.0, 0.5], [2.0, -1.0]);
    let span = 13f64.sqrt();
    let support = UniformBox::new(vec![-1.0 - span, -1.0 - span], vec![2.0 + span, 0.5 + span]).unwrap();
    let model = RealisticityModel::with_scaling(RiBackend::UniformIndicator(support), 0.5, 1e-9).unwrap();
    let init = perturbed(&linear_init(&x, &y, 10).unwrap(), 0.2 * span, 4);
    let cfg = SolverConfig {
        k: 10,
        max_iters: 5000,
        grad_tol: 1e-7,
        ..SolverConfig::default()
    };
    let (out, _) = optimize(&init, &model, &g, &cfg).unwrap();
    assert!(out.max_deviation_from_segment() < 1e-3 * span);
}

#[test]
fn semicircle_path_bends_toward_center() {
    let model = RealisticityModel::kde(semicircle_prior(2).unwrap(), 5000, 0).unwrap();
    let g = Generator::identity(2);
    let lin = linear_init(&[2.0, 6.0], &[2.0, -6.0], 50).unwrap();
    let cfg = SolverConfig {
        optimizer: OptimizerKind::Momentum,
        max_iters: 400,
        ..SolverConfig::default()
    };
    let (opt, _) = optimize(&lin, &model, &g, &cfg).unwrap();
    let mean_ri = |p: &InterpolationPath| {
        p.midpoints().iter().map(|m| model.ri(m.as_slice()).unwrap()).sum::<f64>() / p.midpoints().len() as f64
    };
    assert!(mean_ri(&opt) > mean_ri(&lin));
    let leftmost = opt.midpoints().iter().map(|m| m[0]).fold(f64::INFINITY, f64::min);
    assert!(leftmost < 1.0, "path stays near x = 2: {leftmost}");
    let e_lin = path_energy(&lin, &model, &g, SegmentNorm::Decoded).unwrap();
    let e_opt = path_energy(&opt, &model, &g, SegmentNorm::Decoded).unwrap();
    assert!(e_lin > e_opt);
    assert!(curve_ri(&opt, &model, &g).unwrap() > curve_ri(&lin, &model, &g).unwrap());
}

fn converged_deviation(alpha: f64) -> f64 {
    let model = gaussian(2, alpha);
    let g = Generator::identity(2);
    let lin = linear_init(&[2.5, 1.0], &[-1.0, 2.5], 16).unwrap();
    let cfg = SolverConfig {
        k: 16,
        optimizer: OptimizerKind::Momentum,
        max_iters: 20_000,
        ..SolverConfig::default()
    };
    let (out, trace) = optimize(&lin, &model, &g, &cfg).unwrap();
    assert!(trace.converged, "alpha {alpha}");
    out.max_deviation_from_segment()
}

#[test]
fn small_alpha_straightens_the_path() {
    let devs: Vec<f64> = [1e-1, 1e-3, 1e-6].iter().map(|a| converged_deviation(*a)).collect();
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
    assert!(devs[0] > 0.05);
}

#[test]
fn minimizers_have_constant_metric_speed() {
    let model = gaussian(2, 0.5);
    let g = swirl(0.3);
    let lin = linear_init(&[2.0, 0.0], &[-0.5, 2.0], 12).unwrap();
    let cfg = SolverConfig {
        k: 12,
        optimizer: OptimizerKind::Momentum,
        max_iters: 20_000,
        ..SolverConfig::default()
    };
    let (out, trace) = optimize(&lin, &model, &g, &cfg).unwrap();
    assert!(trace.converged);
    let pts: Vec<&DVector<f64>> = out.points().collect();
    let speeds: Vec<f64> = pts
        .windows(2)
        .map(|w| {
            let mean_ri = (model.ri_alpha(w[0].as_slice()).unwrap() + model.ri_alpha(w[1].as_slice()).unwrap()) / 2.0;
            let seg = (g.decode(w[1].as_slice()).unwrap() - g.decode(w[0].as_slice()).unwrap()).norm();
            -mean_ri.ln() * seg
        })
        .collect();
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let max = speeds.iter().copied().fold(f64::MIN, f64::max);
    let min = speeds.iter().copied().fold(f64::MAX, f64::min);
    assert!((max - min) / mean < 0.1, "{speeds:?}");
}

#[test]
fn curve_index_is_riemannian_length() {
    let model = gaussian(2, 1.0);
    let g = swirl(0.5);
    let k = 2000;
    let points = (0..=k)
        .map(|i| {
            let t = i as f64 / k as f64;
            let angle = 2.2 * t - 0.4;
            let radius = 1.5 + 0.8 * (3.0 * t).sin();
            DVector::from_vec(vec![radius * angle.cos(), radius * angle.sin()])
        })
        .collect();
    let path = InterpolationPath::from_points(points).unwrap();
    let neg_log = curve_neg_log_ri(&path, &model, &g).unwrap();
    let length = riemannian_length(&path, &model, &g).unwrap();
    assert!((neg_log - length).abs() / length < 0.01, "{neg_log} vs {length}");
    assert!((curve_ri(&path, &model, &g).unwrap() - (-neg_log).exp()).abs() < 1e-15);
}

#[test]
fn metric_is_positive_semidefinite() {
    let mut rng = seeded_rng(5);
    let model = gaussian(2, 1.0);
    for g in [swirl(0.7), Generator::Warp(AnalyticWarp::Blowup { dim: 2, beta: 0.3 })] {
        for _ in 0..100 {
            let z: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let metric = riemann_metric(&z, &model, &g).unwrap();
            assert_eq!(metric, metric.transpose());
            assert!(v.dot(&(&metric * &v)) >= 0.0);
            if z.iter().any(|c| *c != 0.0) {
                // injective decoder and ri < 1: positive definite
                assert!(metric.clone().cholesky().is_some());
            }
        }
    }
}

#[test]
fn norm_modes_agree_for_identity_and_differ_otherwise() {
    let model = gaussian(2, 0.7);
    let path = perturbed(&linear_init(&[1.0, 1.0], &[-2.0, 0.5], 8).unwrap(), 0.3, 2);
    let id = Generator::identity(2);
    assert_eq!(
        path_energy(&path, &model, &id, SegmentNorm::Decoded).unwrap(),
        path_energy(&path, &model, &id, SegmentNorm::Latent).unwrap()
    );
    let warp = swirl(0.8);
    let decoded = path_energy(&path, &model, &warp, SegmentNorm::Decoded).unwrap();
    let latent = path_energy(&path, &model, &warp, SegmentNorm::Latent).unwrap();
    assert!((decoded - latent).abs() > 1e-3);
}

#[test]
fn uniform_prior_energy_is_length_squared_sum() {
    let support = UniformBox::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
    let model = RealisticityModel::with_scaling(RiBackend::UniformIndicator(support.clone()), 0.5, 1e-9).unwrap();
    let path = perturbed(&linear_init(&[0.0, 0.0], &[3.0, 1.0], 5).unwrap(), 0.2, 3);
    let pts: Vec<&DVector<f64>> = path.points().collect();
    let expected: f64 = pts.windows(2).map(|w| 0.5f64.ln().powi(2) * (w[1] - w[0]).norm_squared()).sum();
    let got = path_energy(&path, &model, &Generator::identity(2), SegmentNorm::Decoded).unwrap();
    assert!((got - expected).abs() < 1e-12);
    let _ = PriorDensity::UniformBox(support);
}
