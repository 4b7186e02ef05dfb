//! Reproducible studies: convergence ladders, structure certificates,
//! Chebyshev tail checks, power-function maps, field samples and kernel
//! derivative checks. Every study writes one CSV.

mod config;
mod norms;

pub use config::{
    auto_lambda, CertificateConfig, CheckedStructure, ChebyshevConfig, DomainConfig,
    EvaluationConfig, ExperimentConfig, FamilyName, FieldConfig, FieldKindName, FitConfig,
    FitModeName, KernelCheckConfig, KernelConfig, LambdaSetting, NormSpec, PointsConfig,
    PowerMapConfig, SampleSourceName, SamplerConfig, TermConfig,
};
pub use norms::{
    discrete_site_norm, estimate_rate, grid_gradient, grid_lq_norm, grid_seminorm,
    predicted_rate, RateEstimate,
};

use std::io::Write;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::diff;
use crate::error::{Error, Result};
use crate::fields::{sample_observations, stream_rng, AnalyticField, NoiseSpec};
use crate::geometry::{generate_points, mesh_ratio, Domain, GeometryStats, PointSet};
use crate::gp::{fit, FitMode, GpModel, MeanFunction};
use crate::kernels::{
    hessian, laplacian, KernelFamily, KernelMode, MaternNu, MatrixKernel, MatrixValuedKernel,
    ScalarKernelSpec,
};
use crate::sampler::{
    kl_samples, nystrom_eigensystem, sample_gaussian_field, EvaluationGrid, FieldSample,
};

const POINTS_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const PROBE_STREAM: u64 = 3;
const SAMPLE_STREAM: u64 = 4;

/// Seed for stream `(tag, index)` of the run seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    stream_rng(seed, (tag << 32) | index).next_u64()
}

/// Float formatting used in every CSV: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn coord_header(prefix: &str, d: usize) -> String {
    (1..=d).map(|k| format!("{prefix}{k}")).collect::<Vec<_>>().join(",")
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(",")
}

fn random_points(dom: &Domain<f64>, n: usize, seed: u64) -> Result<PointSet<f64>> {
    let mut rng = stream_rng(seed, 0);
    let d = dom.dim();
    let coords = (0..n * d)
        .map(|k| {
            let a = k % d;
            dom.lower()[a] + (dom.upper()[a] - dom.lower()[a]) * rng.random::<f64>()
        })
        .collect();
    PointSet::from_flat(d, coords)
}

/// A fitted ladder level.
pub struct LevelFit {
    pub level: usize,
    pub sites: PointSet<f64>,
    pub stats: GeometryStats<f64>,
    pub mode: FitMode<f64>,
    pub model: GpModel<f64>,
}

/// Generates the sites of ladder `level`, samples observations and fits.
pub fn fit_level(
    cfg: &ExperimentConfig,
    field: &AnalyticField<f64>,
    level: usize,
    mode: Option<FitMode<f64>>,
) -> Result<LevelFit> {
    let dom = cfg.domain()?;
    let kernel = cfg.regression_kernel()?;
    let count = *cfg
        .points
        .ladder
        .get(level)
        .ok_or_else(|| Error::Config(format!("level {level} outside the ladder")))?;
    let sites = generate_points(
        cfg.points.kind,
        count,
        &dom,
        derive_seed(cfg.seed, POINTS_STREAM, level as u64),
    )?;
    let stats = mesh_ratio(&sites, &dom, cfg.evaluation.probe_resolution)?;
    let noise = NoiseSpec {
        sigma: cfg.field.noise_sigma,
        seed: derive_seed(cfg.seed, NOISE_STREAM, level as u64),
    };
    let obs = sample_observations(field, &sites, noise)?;
    let mode = match mode {
        Some(m) => m,
        None => cfg.fit_mode(stats.fill_distance)?,
    };
    let model = fit(&kernel, &MeanFunction::zero(cfg.dim()), &obs, mode)?;
    Ok(LevelFit {
        level,
        sites,
        stats,
        mode,
        model,
    })
}

/// Evaluation grid of the convergence study: midpoint cells of the domain
/// shrunk by the margin.
pub fn evaluation_grid(cfg: &ExperimentConfig) -> Result<(EvaluationGrid<f64>, f64)> {
    let dom = cfg.domain()?;
    let margin = match cfg.evaluation.margin {
        Some(m) => m,
        None => {
            let coarse = generate_points(
                cfg.points.kind,
                cfg.points.ladder[0],
                &dom,
                derive_seed(cfg.seed, POINTS_STREAM, 0),
            )?;
            crate::geometry::fill_distance(&coarse, &dom, cfg.evaluation.probe_resolution)?
        }
    };
    let inner = dom
        .shrink(margin)
        .map_err(|e| Error::Config(format!("evaluation margin {margin}: {e}")))?;
    Ok((EvaluationGrid::midpoint(&inner, cfg.evaluation.resolution)?, margin))
}

/// One CSV row of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub q_sep: f64,
    pub rho: f64,
    pub norm: NormSpec,
    pub error: f64,
    /// Slope against the previous level (`NaN` on the first).
    pub observed_rate: f64,
    pub predicted_rate: f64,
    pub jitter: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    /// Level-major, then in the configured norm order.
    pub rows: Vec<ConvergenceRow>,
    pub margin: f64,
    pub grid_points: usize,
    /// Least-squares rate per norm (`None` if fewer than two usable levels).
    pub rates: Vec<(NormSpec, Option<RateEstimate>)>,
    pub penalties: Vec<f64>,
    pub failures: Vec<(usize, String)>,
}

impl ConvergenceReport {
    pub fn rate(&self, norm: NormSpec) -> Option<f64> {
        self.rates
            .iter()
            .find(|(n, _)| *n == norm)
            .and_then(|(_, r)| r.as_ref().map(|r| r.slope))
    }

    pub fn errors(&self, norm: NormSpec) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.norm == norm)
            .map(|r| r.error)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "level,N,h,q_sep,rho,norm_tag,error,observed_rate,predicted_rate,jitter"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.level,
                r.n,
                fmt_float(r.h),
                fmt_float(r.q_sep),
                fmt_float(r.rho),
                r.norm.tag(),
                fmt_float(r.error),
                fmt_float(r.observed_rate),
                fmt_float(r.predicted_rate),
                fmt_float(r.jitter)
            )?;
        }
        Ok(())
    }
}

/// Order entering the predicted exponents: `min(τ, β)`, `NaN` for
/// infinitely smooth kernels.
pub fn rate_order(cfg: &ExperimentConfig) -> Result<f64> {
    let tau = cfg.regression_kernel()?.base().sobolev_order();
    let beta = cfg.target_smoothness()?;
    Ok(match (tau, beta) {
        (Some(t), Some(b)) => t.min(b),
        (Some(t), None) => t,
        (None, _) => f64::NAN,
    })
}

/// Error field `v − m_N` stacked over the grid.
pub fn error_field(
    field: &AnalyticField<f64>,
    model: &GpModel<f64>,
    grid: &EvaluationGrid<f64>,
) -> Vec<f64> {
    let d = grid.dim();
    let per_point: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.points().point(i);
            let v = field.eval(p);
            let m = model.mean_at(p);
            (0..d).map(|k| v[k] - m[k]).collect()
        })
        .collect();
    per_point.concat()
}

/// Runs the refinement ladder and measures errors in every configured norm.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let field = cfg.build_field()?;
    let (grid, margin) = evaluation_grid(cfg)?;
    let order = rate_order(cfg)?;
    let d = cfg.dim();
    let norms = cfg.evaluation.norms.clone();
    let levels: Vec<Result<(LevelFit, Vec<f64>)>> = (0..cfg.points.ladder.len())
        .into_par_iter()
        .map(|level| {
            let lf = fit_level(cfg, &field, level, None)?;
            let err = error_field(&field, &lf.model, &grid);
            let values = norms
                .iter()
                .map(|n| grid_lq_norm(&err, &grid, n.q, n.s))
                .collect::<Result<Vec<f64>>>()?;
            Ok((lf, values))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut penalties = Vec::new();
    let mut per_norm: Vec<Vec<(f64, f64)>> = vec![Vec::new(); norms.len()];
    let mut previous: Option<(f64, Vec<f64>)> = None;
    for (level, result) in levels.into_iter().enumerate() {
        match result {
            Ok((lf, errors)) => {
                penalties.push(lf.mode.shift());
                for (k, norm) in norms.iter().enumerate() {
                    let observed = match &previous {
                        Some((h0, e0)) if e0[k] > 0.0 && errors[k] > 0.0 => {
                            (e0[k] / errors[k]).ln() / (h0 / lf.stats.fill_distance).ln()
                        }
                        _ => f64::NAN,
                    };
                    per_norm[k].push((lf.stats.fill_distance, errors[k]));
                    rows.push(ConvergenceRow {
                        level,
                        n: lf.sites.len(),
                        h: lf.stats.fill_distance,
                        q_sep: lf.stats.separation_radius,
                        rho: lf.stats.mesh_ratio,
                        norm: *norm,
                        error: errors[k],
                        observed_rate: observed,
                        predicted_rate: predicted_rate(order, norm.s, d, norm.q),
                        jitter: lf.model.jitter_used(),
                    });
                }
                previous = Some((lf.stats.fill_distance, errors));
            }
            Err(e) => {
                failures.push((level, e.to_string()));
                penalties.push(f64::NAN);
                previous = None;
            }
        }
    }
    let rates = norms
        .iter()
        .zip(&per_norm)
        .map(|(n, pairs)| (*n, estimate_rate(pairs).ok()))
        .collect();
    Ok(ConvergenceReport {
        rows,
        margin,
        grid_points: grid.len(),
        rates,
        penalties,
        failures,
    })
}

/// Structure verified by a certificate.
fn checked_structure(cfg: &ExperimentConfig) -> Result<CheckedStructure> {
    Ok(match cfg.regression_kernel()?.mode() {
        KernelMode::DivergenceFree => CheckedStructure::DivergenceFree,
        KernelMode::CurlFree => CheckedStructure::CurlFree,
        KernelMode::Diagonal => cfg.certificate.structure,
    })
}

/// Finite-difference divergence (or curl magnitude) of `f` at each point,
/// divided by the largest Jacobian Frobenius norm seen.
pub fn structure_residuals<F>(
    f: F,
    points: &PointSet<f64>,
    structure: CheckedStructure,
    step: f64,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let raw: Vec<(f64, f64)> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let j = diff::jacobian(&f, points.point(i), step);
            let r = match structure {
                CheckedStructure::DivergenceFree => j.trace().abs(),
                CheckedStructure::CurlFree => diff::curl_magnitude(&diff::curl_from_jacobian(&j)),
            };
            (r, j.norm())
        })
        .collect();
    let scale = raw.iter().fold(0.0f64, |m, (_, s)| m.max(*s)).max(f64::MIN_POSITIVE);
    (raw.iter().map(|(r, _)| r / scale).collect(), scale)
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    pub structure: CheckedStructure,
    pub points: PointSet<f64>,
    /// Scaled residual per point.
    pub residuals: Vec<f64>,
    pub scale: f64,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CertificateReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "point_id,{},residual", coord_header("x", self.points.dim()))?;
        for (i, (p, r)) in self.points.iter().zip(&self.residuals).enumerate() {
            writeln!(out, "{i},{},{}", join_floats(p), fmt_float(*r))?;
        }
        Ok(())
    }
}

/// Finite-difference divergence (curl) of the posterior mean at random points.
pub fn run_divergence_certificate(cfg: &ExperimentConfig) -> Result<CertificateReport> {
    cfg.validate()?;
    let field = cfg.build_field()?;
    let lf = fit_level(cfg, &field, cfg.certificate.level, None)?;
    let dom = cfg.domain()?;
    let points = random_points(
        &dom,
        cfg.certificate.n_points,
        derive_seed(cfg.seed, PROBE_STREAM, 0),
    )?;
    let structure = checked_structure(cfg)?;
    let step = lf.model.kernel().fd_step();
    let (residuals, scale) = structure_residuals(|p| lf.model.mean_at(p), &points, structure, step);
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(*r));
    Ok(CertificateReport {
        structure,
        points,
        residuals,
        scale,
        max_residual,
        tolerance: cfg.certificate.tolerance,
        passed: max_residual <= cfg.certificate.tolerance,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevRow {
    pub point_id: usize,
    pub x: Vec<f64>,
    pub component: usize,
    pub epsilon_factor: f64,
    pub epsilon: f64,
    pub variance: f64,
    /// `K_N(x,x)_kk / ε²` (infinite when `ε = 0`).
    pub bound: f64,
    pub empirical: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct ChebyshevReport {
    pub rows: Vec<ChebyshevRow>,
    pub n_samples: usize,
    /// Monte-Carlo allowance `3/√n`.
    pub slack: f64,
    pub passed: bool,
}

impl ChebyshevReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.rows.first().map_or(0, |r| r.x.len());
        writeln!(
            out,
            "point_id,{},component,epsilon_factor,epsilon,variance,bound,empirical,pass",
            coord_header("x", d)
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.point_id,
                join_floats(&r.x),
                r.component,
                fmt_float(r.epsilon_factor),
                fmt_float(r.epsilon),
                fmt_float(r.variance),
                fmt_float(r.bound),
                fmt_float(r.empirical),
                u8::from(r.passed)
            )?;
        }
        Ok(())
    }
}

/// Monte-Carlo tail frequencies of the interpolation posterior against the
/// Chebyshev bound `K_N(x,x)_kk / ε²`.
pub fn run_chebyshev_check(cfg: &ExperimentConfig) -> Result<ChebyshevReport> {
    cfg.validate()?;
    let field = cfg.build_field()?;
    let lf = fit_level(cfg, &field, cfg.chebyshev.level, Some(FitMode::Interpolate))?;
    let dom = cfg.domain()?;
    let points = random_points(
        &dom,
        cfg.chebyshev.n_points,
        derive_seed(cfg.seed, PROBE_STREAM, 1),
    )?;
    chebyshev_at(&lf.model, &points, &cfg.chebyshev, derive_seed(cfg.seed, SAMPLE_STREAM, 1))
}

/// Chebyshev check of `model` at given points.
pub fn chebyshev_at(
    model: &GpModel<f64>,
    points: &PointSet<f64>,
    cc: &ChebyshevConfig,
    seed: u64,
) -> Result<ChebyshevReport> {
    let d = model.dim();
    let n = cc.n_samples;
    let samples = sample_gaussian_field(model, &EvaluationGrid::from_points(points.clone()), n, seed)?;
    let slack = 3.0 / (n as f64).sqrt();
    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let mean = model.mean_at(p);
        let cov = model.predict_cov(p, p)?;
        for k in 0..d {
            let variance = cov[(k, k)].max(0.0);
            let sd = variance.sqrt();
            for &factor in &cc.epsilon_factors {
                let epsilon = factor * sd;
                let hits = samples
                    .iter()
                    .filter(|s| (s.values[i * d + k] - mean[k]).abs() >= epsilon)
                    .count();
                let empirical = hits as f64 / n as f64;
                let bound = if epsilon > 0.0 {
                    variance / (epsilon * epsilon)
                } else {
                    f64::INFINITY
                };
                rows.push(ChebyshevRow {
                    point_id: i,
                    x: p.to_vec(),
                    component: k,
                    epsilon_factor: factor,
                    epsilon,
                    variance,
                    bound,
                    empirical,
                    passed: empirical <= bound + slack,
                });
            }
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(ChebyshevReport {
        rows,
        n_samples: n,
        slack,
        passed,
    })
}

#[derive(Clone, Debug)]
pub struct PowerMapReport {
    pub grid: EvaluationGrid<f64>,
    /// `λ_max(K_N(x,x))` on the grid for the finest level.
    pub lambda_max: Vec<f64>,
    /// Grid maximum per ladder level.
    pub level_maxima: Vec<f64>,
    /// Largest `λ_max` at the finest level's data sites.
    pub max_at_sites: f64,
    /// For exact data from `kernel_combo` targets of the regression kernel: grid points where
    /// `‖v − I_X v‖₂ > √(λ_max + δ) ‖v‖_H` at the finest level, with `δ` from
    /// [`power_roundoff`].
    pub bound_violations: Option<usize>,
}

impl PowerMapReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{},lambda_max", coord_header("x", self.grid.dim()))?;
        for (p, l) in self.grid.points().iter().zip(&self.lambda_max) {
            writeln!(out, "{},{}", join_floats(p), fmt_float(*l))?;
        }
        Ok(())
    }
}

/// Absolute rounding level of a computed `λ_max(K_N(x, x))`: the
/// cancellation in `K(x,x) − vᵀv`, about `ε · dN · ‖K‖`.
pub fn power_roundoff(model: &GpModel<f64>) -> f64 {
    f64::EPSILON * (model.dim() * model.sites().len()).max(1) as f64 * model.kernel().magnitude()
}

/// Power function `λ_max(K_N(x, x))` on a grid, for every ladder level.
pub fn run_power_map(cfg: &ExperimentConfig) -> Result<PowerMapReport> {
    cfg.validate()?;
    let field = cfg.build_field()?;
    let grid = EvaluationGrid::midpoint(&cfg.domain()?, cfg.powermap.resolution)?;
    let mut level_maxima = Vec::new();
    let mut finest = None;
    for level in 0..cfg.points.ladder.len() {
        let lf = fit_level(cfg, &field, level, Some(FitMode::Interpolate))?;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| lf.model.power_function(grid.points().point(i)).map(|p| p.lambda_max))
            .collect::<Result<Vec<f64>>>()?;
        level_maxima.push(values.iter().fold(f64::MIN, |m, v| m.max(*v)));
        finest = Some((lf, values));
    }
    let (lf, lambda_max) = finest.expect("ladder is non-empty");
    let max_at_sites = lf
        .sites
        .iter()
        .map(|p| lf.model.power_function(p).map(|v| v.lambda_max))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::MIN, f64::max);
    let same_kernel = cfg.target_kernel()? == *lf.model.kernel();
    let exact_data = cfg.field.noise_sigma == 0.0;
    let bound_violations = match (field.native_norm_sq(), same_kernel && exact_data) {
        (Some(norm_sq), true) => {
            let norm = norm_sq.max(0.0).sqrt();
            let floor = power_roundoff(&lf.model);
            Some(
                grid.points()
                    .iter()
                    .zip(&lambda_max)
                    .filter(|(p, l)| {
                        let v = field.eval(p);
                        let m = lf.model.mean_at(p);
                        let err = v.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        err > (**l + floor).max(0.0).sqrt() * norm
                    })
                    .count(),
            )
        }
        _ => None,
    };
    Ok(PowerMapReport {
        grid,
        lambda_max,
        level_maxima,
        max_at_sites,
        bound_violations,
    })
}

#[derive(Clone, Debug)]
pub struct SampleReport {
    pub grid: EvaluationGrid<f64>,
    pub samples: Vec<FieldSample<f64>>,
}

impl SampleReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.grid.dim();
        writeln!(out, "sample_id,{},{}", coord_header("x", d), coord_header("v", d))?;
        for (s_id, s) in self.samples.iter().enumerate() {
            for (i, p) in self.grid.points().iter().enumerate() {
                writeln!(out, "{s_id},{},{}", join_floats(p), join_floats(s.value(i, d)))?;
            }
        }
        Ok(())
    }
}

/// Prior, posterior or truncated-KL field samples on a midpoint grid.
pub fn run_sample(cfg: &ExperimentConfig) -> Result<SampleReport> {
    cfg.validate()?;
    let sc = &cfg.sampler;
    let grid = EvaluationGrid::midpoint(&cfg.domain()?, sc.resolution)?;
    let kernel = cfg.regression_kernel()?;
    let seed = derive_seed(cfg.seed, SAMPLE_STREAM, 0);
    let samples = match sc.source {
        SampleSourceName::Prior => sample_gaussian_field(&kernel, &grid, sc.n_samples, seed)?,
        SampleSourceName::Posterior => {
            let field = cfg.build_field()?;
            let lf = fit_level(cfg, &field, sc.level, None)?;
            sample_gaussian_field(&lf.model, &grid, sc.n_samples, seed)?
        }
        SampleSourceName::Kl => {
            let full = kernel.dim() * grid.len();
            let eigs = nystrom_eigensystem(&kernel, &grid, sc.truncation.unwrap_or(full).min(full))?;
            kl_samples(&eigs, sc.n_samples, seed)
        }
    };
    Ok(SampleReport { grid, samples })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelCheckRow {
    pub family: KernelFamily,
    pub z_id: usize,
    /// `max |H_fd − H| / max |H|`.
    pub hessian_error: f64,
    /// `|Δ − tr H| / max |H|`.
    pub laplacian_error: f64,
}

#[derive(Clone, Debug)]
pub struct KernelCheckReport {
    pub rows: Vec<KernelCheckRow>,
    pub max_hessian_error: f64,
    pub max_laplacian_error: f64,
}

impl KernelCheckReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "family,z_id,hessian_rel_error,laplacian_trace_error")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.family,
                r.z_id,
                fmt_float(r.hessian_error),
                fmt_float(r.laplacian_error)
            )?;
        }
        Ok(())
    }
}

/// Every family admissible in dimension `d`.
pub fn admissible_families(d: usize) -> Vec<KernelFamily> {
    let mut out = vec![KernelFamily::Gaussian];
    for nu in [MaternNu::ThreeHalves, MaternNu::FiveHalves, MaternNu::SevenHalves] {
        out.push(KernelFamily::Matern(nu));
    }
    for k in 1..=3 {
        out.push(KernelFamily::Wendland(k));
    }
    out.retain(|f| ScalarKernelSpec::new(*f, 1.0, 1.0, d).is_ok());
    out
}

/// Second-order central-difference Hessian of `Φ` at `z`.
pub fn fd_hessian(spec: &ScalarKernelSpec<f64>, z: &[f64], h: f64) -> Vec<f64> {
    let d = z.len();
    let mut out = vec![0.0; d * d];
    let mut p = z.to_vec();
    let mut eval = |dk: f64, k: usize, dl: f64, l: usize| {
        p.copy_from_slice(z);
        p[k] += dk;
        p[l] += dl;
        spec.value_at(&p)
    };
    for k in 0..d {
        for l in 0..d {
            out[k * d + l] = if k == l {
                (eval(h, k, 0.0, l) - 2.0 * spec.value_at(z) + eval(-h, k, 0.0, l)) / (h * h)
            } else {
                (eval(h, k, h, l) - eval(h, k, -h, l) - eval(-h, k, h, l) + eval(-h, k, -h, l))
                    / (4.0 * h * h)
            };
        }
    }
    out
}

/// Richardson combination `(4 H(h) − H(2h)) / 3` of [`fd_hessian`], accurate
/// to `O(h⁴)`.
pub fn fd_hessian_extrapolated(spec: &ScalarKernelSpec<f64>, z: &[f64], h: f64) -> Vec<f64> {
    let fine = fd_hessian(spec, z, h);
    let coarse = fd_hessian(spec, z, 2.0 * h);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// Analytic Hessian and Laplacian of every family against finite differences
/// at random arguments with `κ‖z‖ ∈ [0.05, 0.95]`.
pub fn run_kernel_check(cfg: &ExperimentConfig) -> Result<KernelCheckReport> {
    cfg.validate()?;
    let d = cfg.dim();
    let kc = &cfg.kernel_check;
    let mut rows = Vec::new();
    for (f_id, family) in admissible_families(d).into_iter().enumerate() {
        let spec = ScalarKernelSpec::new(family, cfg.kernel.length_scale, cfg.kernel.variance, d)?;
        let kappa = spec.length_scale();
        let mut rng = stream_rng(derive_seed(cfg.seed, PROBE_STREAM, 2), f_id as u64);
        for z_id in 0..kc.n_points {
            let dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            let radius = rng.random_range(0.05..0.95) / kappa;
            let z: Vec<f64> = dir.iter().map(|v| v / len * radius).collect();
            let exact = hessian(&spec, &z)?;
            let approx = fd_hessian_extrapolated(&spec, &z, kc.fd_step / kappa);
            let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let hessian_error = exact
                .transpose()
                .iter()
                .zip(&approx)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / scale;
            let laplacian_error = (laplacian(&spec, &z)? - exact.trace()).abs() / scale;
            rows.push(KernelCheckRow {
                family,
                z_id,
                hessian_error,
                laplacian_error,
            });
        }
    }
    let max_hessian_error = rows.iter().fold(0.0f64, |m, r| m.max(r.hessian_error));
    let max_laplacian_error = rows.iter().fold(0.0f64, |m, r| m.max(r.laplacian_error));
    Ok(KernelCheckReport {
        rows,
        max_hessian_error,
        max_laplacian_error,
    })
}

/// Maximum scaled divergence (curl) over points of each column of a
/// structured kernel, `K(·, y) e_l`, for random `y`.
pub fn kernel_column_residual(
    kernel: &MatrixKernel<f64>,
    points: &PointSet<f64>,
    centers: &PointSet<f64>,
) -> Result<f64> {
    let structure = match kernel.mode() {
        KernelMode::DivergenceFree => CheckedStructure::DivergenceFree,
        KernelMode::CurlFree => CheckedStructure::CurlFree,
        KernelMode::Diagonal => {
            return Err(Error::ModeIncompatible {
                mode: "diagonal",
                reason: "no structure to certify".into(),
            })
        }
    };
    let d = kernel.dim();
    let mut worst = 0.0f64;
    for y in centers.iter() {
        for l in 0..d {
            let column = |x: &[f64]| {
                let k = kernel.eval(x, y);
                (0..d).map(|a| k[(a, l)]).collect::<Vec<f64>>()
            };
            let (r, _) = structure_residuals(column, points, structure, kernel.fd_step());
            worst = worst.max(r.iter().fold(0.0f64, |m, v| m.max(*v)));
        }
    }
    Ok(worst)
}
