use divgp::diff;
use divgp::fields::{
    make_gradient_field, make_kernel_combo, make_stream_field_2d, make_vectorpotential_field_3d, sample_observations,
    NoiseSpec, TrigPotential,
};
use divgp::geometry::{generate_points, Domain, PointKind, PointSet};
use divgp::gp::{fit, FitMode, MeanFunction};
use divgp::kernels::{KernelFamily, MaternNu, MatrixKernel, ScalarKernelSpec};
use divgp::sampler::{
    kl_samples, mercer_residual, nystrom_eigensystem, sample_gaussian_field, EvaluationGrid,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(kappa: f64, d: usize) -> ScalarKernelSpec<f64> {
    ScalarKernelSpec::new(KernelFamily::Matern(MaternNu::SevenHalves), kappa, 1.0, d).unwrap()
}

fn unit(d: usize) -> Domain<f64> {
    Domain::unit(d).unwrap()
}

#[test]
fn analytic_fields_certify() {
    let stream = make_stream_field_2d(TrigPotential::sin_cos(1.5, 2.0)).unwrap();
    let grad = make_gradient_field(TrigPotential::sin_sin(1.0, 3.0)).unwrap();
    let p = TrigPotential::sin_sin(1.0, 2.0).extend_to_3d();
    let vp = make_vectorpotential_field_3d([p.clone(), TrigPotential::zero(3), p]).unwrap();
    for f in [&stream, &grad, &vp] {
        assert!(f.certify(7).unwrap() <= 1e-6);
    }
    // gradient of sin(x)sin(3y)
    let v = grad.eval(&[0.3, 0.4]);
    assert!((v[0] - 0.3f64.cos() * 1.2f64.sin()).abs() < 1e-14);
    assert!((v[1] - 3.0 * 0.3f64.sin() * 1.2f64.cos()).abs() < 1e-14);
}

#[test]
fn combo_is_reproduced_when_centers_are_sites() {
    let k = MatrixKernel::divergence_free(spec(3.0, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let centers = generate_points(PointKind::Halton, 6, &unit(2), 0).unwrap();
    let betas: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = make_kernel_combo(&k, centers.clone(), betas).unwrap();
    let extra = generate_points(PointKind::UniformRandom, 10, &unit(2), 5).unwrap();
    let x = centers.union(&extra).unwrap();
    let obs = sample_observations(&v, &x, NoiseSpec::exact()).unwrap();
    let m = fit(&k, &MeanFunction::zero(2), &obs, FitMode::Interpolate).unwrap();
    let nv = v.native_norm_sq().unwrap();
    assert!((m.native_norm().powi(2) - nv).abs() <= 1e-8 * nv);
    for _ in 0..20 {
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        let (a, b) = (m.mean_at(&p), v.eval(&p));
        let err = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert!(err <= 1e-6 * nv.sqrt(), "{err:e}");
    }
}

#[test]
fn diagonal_nystrom_matches_dense_eigensolve() {
    let k = MatrixKernel::diagonal(spec(2.0, 2));
    let grid = EvaluationGrid::midpoint(&unit(2), 6).unwrap();
    let eigs = nystrom_eigensystem(&k, &grid, 8).unwrap();
    // scalar problem: K W shares its spectrum with Lᵀ W L for K = L Lᵀ,
    // and the diagonal kernel repeats every scalar eigenvalue d times
    let pts = grid.points();
    let w = grid.weights().unwrap();
    let m = grid.len();
    let scalar = |r: usize, c: usize| {
        let (p, q) = (pts.point(r), pts.point(c));
        let t = 7f64.sqrt() * 2.0 * ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        (1.0 + t + 0.4 * t * t + t * t * t / 15.0) * (-t).exp()
    };
    let ks = DMatrix::from_fn(m, m, scalar);
    let l = ks.clone().cholesky().unwrap().unpack();
    let wl = DMatrix::from_fn(m, m, |r, c| w[r] * l[(r, c)]);
    let mut dense: Vec<f64> = (l.transpose() * wl)
        .symmetric_eigenvalues()
        .iter()
        .flat_map(|v| [*v, *v])
        .collect();
    dense.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in eigs.eigenvalues().iter().zip(&dense) {
        assert!((a - b).abs() <= 1e-8 * dense[0], "{a} vs {b}");
    }
    let n = 2 * m;
    let kw = DMatrix::from_fn(n, n, |r, c| if r % 2 == c % 2 { scalar(r / 2, c / 2) * w[c / 2] } else { 0.0 });
    // each returned pair satisfies K W φ = λ φ on the grid
    for (l, phi) in eigs.eigenvalues().iter().zip(eigs.eigenvector_blocks()) {
        let r = &kw * phi - phi * *l;
        assert!(r.norm() <= 1e-8 * l * phi.norm());
    }
}

#[test]
fn mercer_residual_shrinks_with_truncation() {
    let k = MatrixKernel::divergence_free(spec(3.0, 2)).unwrap();
    let grid = EvaluationGrid::midpoint(&unit(2), 8).unwrap();
    let full = nystrom_eigensystem(&k, &grid, 20).unwrap();
    let pairs = [(0, 0), (5, 17), (30, 63), (12, 12)];
    let r: Vec<f64> = [5, 10, 20]
        .iter()
        .map(|&m| mercer_residual(&full.truncated(m), &pairs).unwrap())
        .collect();
    assert!(r[0] >= r[1] && r[1] >= r[2], "{r:?}");
    assert!(r[2] < r[0]);
}

#[test]
fn kl_covariance_follows_the_truncated_kernel() {
    let k = MatrixKernel::divergence_free(spec(3.0, 2)).unwrap();
    let grid = EvaluationGrid::midpoint(&unit(2), 5).unwrap();
    let eigs = nystrom_eigensystem(&k, &grid, 5).unwrap();
    let n = 10_000;
    let samples = kl_samples(&eigs, n, 42);
    for (i, j) in [(0, 0), (3, 11), (7, 24)] {
        let target = eigs.mercer_sum(i, j);
        for a in 0..2 {
            for b in 0..2 {
                let prods: Vec<f64> = samples.iter().map(|s| s.value(i, 2)[a] * s.value(j, 2)[b]).collect();
                let mean = prods.iter().sum::<f64>() / n as f64;
                let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!((mean - target[(a, b)]).abs() <= 4.0 * se, "({i},{j})[{a}{b}]: {mean} vs {}", target[(a, b)]);
            }
        }
    }
}

#[test]
fn extensions_stay_divergence_free() {
    let k = MatrixKernel::divergence_free(spec(3.0, 2)).unwrap();
    let grid = EvaluationGrid::midpoint(&unit(2), 7).unwrap();
    let eigs = nystrom_eigensystem(&k, &grid, 10).unwrap();
    let samples = kl_samples(&eigs, 3, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        for e in 0..eigs.len() {
            let j = diff::jacobian(|q| eigs.extend(e, q), &p, k.fd_step());
            assert!(j.trace().abs() <= 1e-5 * j.norm().max(1e-12));
        }
        for s in &samples {
            let j = diff::jacobian(|q| eigs.extend_sample(s, q), &p, k.fd_step());
            assert!(j.trace().abs() <= 1e-5 * j.norm().max(1e-12));
        }
    }
    // extension agrees with the grid values
    for i in [0, 10, 48] {
        let ext = eigs.extend(2, grid.points().point(i));
        let on = eigs.eigenfunction_on_grid(2, i);
        let scale = eigs.eigenvector_blocks()[2].amax();
        assert!((ext[0] - on[0]).abs() <= 1e-8 * scale && (ext[1] - on[1]).abs() <= 1e-8 * scale);
    }
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let k = MatrixKernel::curl_free(spec(3.0, 2)).unwrap();
    let grid = EvaluationGrid::midpoint(&unit(2), 4).unwrap();
    let eigs = nystrom_eigensystem(&k, &grid, 6).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                sample_gaussian_field(&k, &grid, 8, 5).unwrap(),
                kl_samples(&eigs, 8, 5),
            )
        })
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a, b);
}

#[test]
fn prior_samples_have_the_kernel_covariance() {
    let k = MatrixKernel::divergence_free(spec(2.0, 2)).unwrap();
    let pts = PointSet::new(vec![vec![0.2, 0.3], vec![0.6, 0.5]]).unwrap();
    let grid = EvaluationGrid::from_points(pts.clone());
    let n = 20_000;
    let samples = sample_gaussian_field(&k, &grid, n, 11).unwrap();
    let target = divgp::kernels::MatrixValuedKernel::eval(&k, pts.point(0), pts.point(1));
    let est = samples.iter().map(|s| s.values[0] * s.values[2]).sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s.values[0] * s.values[2] - est).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((est - target[(0, 0)]).abs() <= 4.0 * (var / n as f64).sqrt());
}
