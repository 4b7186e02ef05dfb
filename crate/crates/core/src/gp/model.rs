use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::gram::{assemble_gram, cross_block, factor_with_jitter};
use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::kernels::{MatrixKernel, MatrixValuedKernel};
use crate::scalar::Real;

/// Observation noise attached to a data set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel<T> {
    Exact,
    Gaussian { variance: T },
}

/// Sites `X` with one `d`-vector observation per site.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations<T> {
    sites: PointSet<T>,
    values: Vec<T>,
    noise: NoiseModel<T>,
}

impl<T: Real> Observations<T> {
    /// `values` holds the stacked blocks `(y₁ᵀ, …, y_Nᵀ)ᵀ`.
    pub fn new(sites: PointSet<T>, values: Vec<T>, noise: NoiseModel<T>) -> Result<Self> {
        if values.len() != sites.len() * sites.dim() {
            return Err(Error::DimensionMismatch {
                expected: sites.len() * sites.dim(),
                found: values.len(),
            });
        }
        Ok(Self {
            sites,
            values,
            noise,
        })
    }

    pub fn exact(sites: PointSet<T>, values: Vec<T>) -> Result<Self> {
        Self::new(sites, values, NoiseModel::Exact)
    }

    pub fn sites(&self) -> &PointSet<T> {
        &self.sites
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[T] {
        let d = self.sites.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn noise(&self) -> NoiseModel<T> {
        self.noise
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Declared structure of a prior mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanStructure {
    Zero,
    DivergenceFree,
    CurlFree,
    Generic,
}

type MeanFn<T> = dyn Fn(&[T]) -> Vec<T> + Send + Sync;

/// Prior mean `m: 𝒟 → ℝᵈ`.
#[derive(Clone)]
pub struct MeanFunction<T> {
    dim: usize,
    structure: MeanStructure,
    evaluator: Option<Arc<MeanFn<T>>>,
}

impl<T: Real> MeanFunction<T> {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            structure: MeanStructure::Zero,
            evaluator: None,
        }
    }

    pub fn new<F>(dim: usize, structure: MeanStructure, f: F) -> Self
    where
        F: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        Self {
            dim,
            structure,
            evaluator: Some(Arc::new(f)),
        }
    }

    pub fn structure(&self) -> MeanStructure {
        self.structure
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        match &self.evaluator {
            Some(f) if self.structure != MeanStructure::Zero => f(x),
            _ => vec![T::zero(); self.dim],
        }
    }
}

impl<T> fmt::Debug for MeanFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeanFunction")
            .field("dim", &self.dim)
            .field("structure", &self.structure)
            .finish()
    }
}

/// Which estimator a model realizes. All three solve `(K(X,X) + c I) A = Y − m(X)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FitMode<T> {
    /// `c = 0`: the interpolant / noise-free posterior mean.
    Interpolate,
    /// `c = σ²`: posterior under Gaussian observation noise.
    Posterior { noise_variance: T },
    /// `c = λ`: minimizer of `‖Y − s|X‖² + λ‖s‖²_H`.
    Penalized { lambda: T },
}

impl<T: Real> FitMode<T> {
    pub fn shift(&self) -> T {
        match *self {
            FitMode::Interpolate => T::zero(),
            FitMode::Posterior { noise_variance } => noise_variance,
            FitMode::Penalized { lambda } => lambda,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FitMode::Interpolate => "interpolate",
            FitMode::Posterior { .. } => "posterior",
            FitMode::Penalized { .. } => "penalized",
        }
    }
}

/// A fitted posterior. Immutable and shareable across threads.
#[derive(Clone)]
pub struct GpModel<T: Real> {
    kernel: MatrixKernel<T>,
    prior_mean: MeanFunction<T>,
    sites: PointSet<T>,
    targets: DVector<T>,
    mode: FitMode<T>,
    factor: Cholesky<T, Dyn>,
    coefficients: DVector<T>,
    jitter_used: T,
}

/// Fits the posterior mean/covariance (or interpolant / penalized approximant).
pub fn fit<T: Real>(
    kernel: &MatrixKernel<T>,
    prior_mean: &MeanFunction<T>,
    obs: &Observations<T>,
    mode: FitMode<T>,
) -> Result<GpModel<T>> {
    let d = kernel.dim();
    if obs.sites().dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: obs.sites().dim(),
        });
    }
    if prior_mean.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: prior_mean.dim(),
        });
    }
    let shift = mode.shift();
    if !(shift >= T::zero()) {
        return Err(Error::InvalidArgument(
            "noise variance / penalty must be non-negative".into(),
        ));
    }
    let sites = obs.sites().clone();
    let mut targets = DVector::from_column_slice(obs.values());
    for (i, p) in sites.iter().enumerate() {
        let m = prior_mean.eval(p);
        for k in 0..d {
            targets[i * d + k] -= m[k];
        }
    }
    let gram = assemble_gram(kernel, &sites, shift);
    let jf = factor_with_jitter(&gram, kernel.magnitude())?;
    let coefficients = jf.factor.solve(&targets);
    Ok(GpModel {
        kernel: *kernel,
        prior_mean: prior_mean.clone(),
        sites,
        targets,
        mode,
        factor: jf.factor,
        coefficients,
        jitter_used: jf.jitter,
    })
}

/// Output of [`GpModel::power_function`].
#[derive(Clone, Debug, PartialEq)]
pub struct PowerValue<T: Real> {
    /// `K_N(x, x)`; `αᵀ K_N(x, x) α` is the squared power function in direction `α`.
    pub matrix: DMatrix<T>,
    pub lambda_max: T,
}

impl<T: Real> GpModel<T> {
    /// Rebuilds a model from exported parts, refactoring the Gram matrix with
    /// the recorded jitter.
    pub(crate) fn from_parts(
        kernel: MatrixKernel<T>,
        prior_mean: MeanFunction<T>,
        sites: PointSet<T>,
        mode: FitMode<T>,
        coefficients: DVector<T>,
        jitter_used: T,
    ) -> Result<Self> {
        let mut gram = assemble_gram(&kernel, &sites, mode.shift());
        if jitter_used != T::zero() {
            for k in 0..gram.nrows() {
                gram[(k, k)] += jitter_used;
            }
        }
        let factor = if gram.nrows() == 0 {
            Cholesky::new(gram).expect("empty factorization")
        } else {
            Cholesky::new(gram).ok_or(Error::NotPositiveDefinite {
                condition: f64::INFINITY,
            })?
        };
        // (K + cI + jI) A recovers the residual targets Y − m(X)
        let l = factor.l();
        let targets = &l * l.tr_mul(&coefficients);
        Ok(Self {
            kernel,
            prior_mean,
            sites,
            targets,
            mode,
            factor,
            coefficients,
            jitter_used,
        })
    }

    pub fn kernel(&self) -> &MatrixKernel<T> {
        &self.kernel
    }

    pub fn prior_mean(&self) -> &MeanFunction<T> {
        &self.prior_mean
    }

    pub fn sites(&self) -> &PointSet<T> {
        &self.sites
    }

    pub fn mode(&self) -> FitMode<T> {
        self.mode
    }

    pub fn coefficients(&self) -> &DVector<T> {
        &self.coefficients
    }

    pub fn jitter_used(&self) -> T {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// Relative residual `‖(K + cI + jI)A − (Y − m(X))‖ / ‖Y − m(X)‖`.
    pub fn relative_residual(&self) -> T {
        let d = self.dim();
        let n = self.sites.len();
        let mut r = self.targets.clone();
        let mut buf = vec![T::zero(); d * d];
        let shift = self.mode.shift() + self.jitter_used;
        for i in 0..n {
            for j in 0..n {
                self.kernel
                    .eval_into(self.sites.point(i), self.sites.point(j), &mut buf);
                for a in 0..d {
                    let mut acc = T::zero();
                    for b in 0..d {
                        acc += buf[a * d + b] * self.coefficients[j * d + b];
                    }
                    r[i * d + a] -= acc;
                }
            }
            for a in 0..d {
                r[i * d + a] -= shift * self.coefficients[i * d + a];
            }
        }
        let denom = self.targets.norm();
        if denom == T::zero() {
            r.norm()
        } else {
            r.norm() / denom
        }
    }

    /// `m(x) + Σ_j K(x, x_j) A_j` without dimension checks.
    pub fn mean_at(&self, x: &[T]) -> Vec<T> {
        let d = self.dim();
        let mut out = self.prior_mean.eval(x);
        let mut buf = [T::zero(); 9];
        let buf = &mut buf[..d * d];
        for (j, p) in self.sites.iter().enumerate() {
            self.kernel.eval_into(x, p, buf);
            for a in 0..d {
                let mut acc = T::zero();
                for b in 0..d {
                    acc += buf[a * d + b] * self.coefficients[j * d + b];
                }
                out[a] += acc;
            }
        }
        out
    }

    /// Posterior mean at `x`.
    pub fn predict_mean(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        Ok(self.mean_at(x))
    }

    /// `L⁻¹ K(X, x)` (size `dN × d`).
    fn whitened_cross(&self, x: &[T]) -> DMatrix<T> {
        let kx = cross_block(&self.kernel, x, &self.sites).transpose();
        self.factor
            .l_dirty()
            .solve_lower_triangular(&kx)
            .expect("cholesky factor has a non-zero diagonal")
    }

    /// Posterior covariance `K(x, x′) − K(x, X)(K(X, X) + cI)⁻¹ K(x′, X)ᵀ`.
    pub fn predict_cov(&self, x: &[T], x2: &[T]) -> Result<DMatrix<T>> {
        self.check_dim(x.len())?;
        self.check_dim(x2.len())?;
        let prior = self.kernel.eval(x, x2);
        if self.sites.is_empty() {
            return Ok(prior);
        }
        let v = self.whitened_cross(x);
        let w = if x == x2 { v.clone() } else { self.whitened_cross(x2) };
        Ok(prior - v.tr_mul(&w))
    }

    /// Posterior covariance of the stacked values at several points (`dM × dM`).
    pub fn predict_joint_cov(&self, points: &PointSet<T>) -> Result<DMatrix<T>> {
        self.check_dim(points.dim())?;
        let prior = assemble_gram(&self.kernel, points, T::zero());
        if self.sites.is_empty() {
            return Ok(prior);
        }
        let d = self.dim();
        let mut cross = DMatrix::zeros(d * self.sites.len(), d * points.len());
        for (i, p) in points.iter().enumerate() {
            let kx = cross_block(&self.kernel, p, &self.sites).transpose();
            cross.columns_mut(i * d, d).copy_from(&kx);
        }
        let v = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&cross)
            .expect("cholesky factor has a non-zero diagonal");
        let mut cov = prior - v.tr_mul(&v);
        symmetrize(&mut cov);
        Ok(cov)
    }

    /// `K_N(x, x)` and its largest eigenvalue (interpolation models only).
    pub fn power_function(&self, x: &[T]) -> Result<PowerValue<T>> {
        if self.mode != FitMode::Interpolate {
            return Err(Error::PowerFunctionRequiresInterpolation);
        }
        let mut matrix = self.predict_cov(x, x)?;
        symmetrize(&mut matrix);
        let lambda_max = SymmetricEigen::new(matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(T::min_value().unwrap(), |a, b| a.max(b));
        Ok(PowerValue { matrix, lambda_max })
    }

    /// `√(Aᵀ K(X, X) A)`: native-space norm of the kernel part of the mean.
    pub fn native_norm(&self) -> T {
        quadratic_form(&self.kernel, &self.sites, self.coefficients.as_slice())
            .max(T::zero())
            .sqrt()
    }
}

/// `Σ_ij c_iᵀ K(x_i, x_j) c_j` for stacked coefficient blocks `c`.
pub fn quadratic_form<T: Real, K: MatrixValuedKernel<T> + ?Sized>(
    kernel: &K,
    sites: &PointSet<T>,
    coefficients: &[T],
) -> T {
    let d = kernel.dim();
    let mut buf = vec![T::zero(); d * d];
    let mut total = T::zero();
    for i in 0..sites.len() {
        for j in 0..sites.len() {
            kernel.eval_into(sites.point(i), sites.point(j), &mut buf);
            for a in 0..d {
                for b in 0..d {
                    total += coefficients[i * d + a] * buf[a * d + b] * coefficients[j * d + b];
                }
            }
        }
    }
    total
}

pub(crate) fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::of(0.5);
    for c in 0..n {
        for r in (c + 1)..n {
            let v = (m[(r, c)] + m[(c, r)]) * half;
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, ScalarKernelSpec};
    use approx::assert_relative_eq;

    fn div_gauss() -> MatrixKernel<f64> {
        let base = ScalarKernelSpec::new(KernelFamily::Gaussian, 1.0, 1.0, 2).unwrap();
        MatrixKernel::divergence_free(base).unwrap()
    }

    #[test]
    fn no_data_returns_prior() {
        let obs = Observations::exact(PointSet::empty(2), vec![]).unwrap();
        let m = fit(&div_gauss(), &MeanFunction::zero(2), &obs, FitMode::Interpolate).unwrap();
        assert_eq!(m.predict_mean(&[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
        let c = m.predict_cov(&[0.3, 0.4], &[0.3, 0.4]).unwrap();
        assert_eq!(c, div_gauss().eval(&[0.0, 0.0], &[0.0, 0.0]));
        assert_eq!(m.native_norm(), 0.0);
    }

    #[test]
    fn single_site_interpolant() {
        let sites = PointSet::new(vec![vec![0.2, 0.1]]).unwrap();
        let obs = Observations::exact(sites, vec![1.0, -2.0]).unwrap();
        let m = fit(&div_gauss(), &MeanFunction::zero(2), &obs, FitMode::Interpolate).unwrap();
        // K(x, x) = 2I, so A = β / 2 and the squared norm is ‖β‖² / 2
        assert_relative_eq!(m.coefficients()[0], 0.5);
        assert_relative_eq!(m.coefficients()[1], -1.0);
        assert_relative_eq!(m.native_norm().powi(2), 2.5, max_relative = 1e-15);
        let at = m.predict_mean(&[0.2, 0.1]).unwrap();
        assert_relative_eq!(at[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(at[1], -2.0, epsilon = 1e-15);
        assert!(m.power_function(&[0.2, 0.1]).unwrap().lambda_max.abs() < 1e-14);
    }

    #[test]
    fn power_function_needs_interpolation() {
        let sites = PointSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let obs = Observations::exact(sites, vec![1.0, 0.0]).unwrap();
        let mode = FitMode::Posterior { noise_variance: 0.1 };
        let m = fit(&div_gauss(), &MeanFunction::zero(2), &obs, mode).unwrap();
        assert!(matches!(
            m.power_function(&[0.5, 0.5]).unwrap_err(),
            Error::PowerFunctionRequiresInterpolation
        ));
    }

    #[test]
    fn noisy_posterior_shrinks_toward_prior() {
        let sites = PointSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let obs = Observations::exact(sites, vec![1.0, 0.0]).unwrap();
        let mode = FitMode::Posterior { noise_variance: 2.0 };
        let m = fit(&div_gauss(), &MeanFunction::zero(2), &obs, mode).unwrap();
        // (2I + 2I)⁻¹ applied to (1, 0)
        assert_relative_eq!(m.coefficients()[0], 0.25);
        let v = m.predict_cov(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v[(0, 0)], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn prior_mean_is_added_back() {
        let mean = MeanFunction::new(2, MeanStructure::Generic, |x: &[f64]| vec![x[0], 1.0]);
        let sites = PointSet::new(vec![vec![0.5, 0.5]]).unwrap();
        let obs = Observations::exact(sites, vec![0.5, 1.0]).unwrap();
        let m = fit(&div_gauss(), &mean, &obs, FitMode::Interpolate).unwrap();
        assert_eq!(m.coefficients().iter().copied().fold(0.0f64, |a, c| a.max(c.abs())), 0.0);
        assert_eq!(m.predict_mean(&[2.0, 0.0]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let sites = PointSet::new(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let obs = Observations::exact(sites, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(fit(&div_gauss(), &MeanFunction::zero(2), &obs, FitMode::Interpolate).is_err());
        let sites = PointSet::new(vec![vec![0.0, 0.0]]).unwrap();
        assert!(Observations::exact(sites, vec![1.0]).is_err());
    }
}
