use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ScalarKernelSpec;
use crate::diff;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// How a matrix kernel is derived from its scalar base `Φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// `(−ΔΦ) I + ∇∇ᵀΦ`: every column is divergence-free.
    DivergenceFree,
    /// `−∇∇ᵀΦ`: every column is curl-free.
    CurlFree,
    /// `Φ I`: independent scalar kernels per component.
    Diagonal,
}

impl KernelMode {
    pub fn name(self) -> &'static str {
        match self {
            KernelMode::DivergenceFree => "divergence_free",
            KernelMode::CurlFree => "curl_free",
            KernelMode::Diagonal => "diagonal",
        }
    }
}

/// A `d×d` matrix-valued kernel that can be assembled into block Gram matrices.
pub trait MatrixValuedKernel<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `K(x, y)` row-major into `out` (length `d²`).
    fn eval_into(&self, x: &[T], y: &[T], out: &mut [T]);

    fn eval(&self, x: &[T], y: &[T]) -> DMatrix<T> {
        let d = self.dim();
        let mut buf = vec![T::zero(); d * d];
        self.eval_into(x, y, &mut buf);
        DMatrix::from_row_slice(d, d, &buf)
    }
}

/// Translation-invariant matrix kernel `K(x, y) = Φ_mode(x − y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixKernel<T> {
    base: ScalarKernelSpec<T>,
    mode: KernelMode,
}

impl<T: Real> MatrixKernel<T> {
    pub fn new(base: ScalarKernelSpec<T>, mode: KernelMode) -> Result<Self> {
        if mode != KernelMode::Diagonal && !(2..=3).contains(&base.dim()) {
            return Err(Error::ModeIncompatible {
                mode: mode.name(),
                reason: format!("requires d in {{2, 3}}, got {}", base.dim()),
            });
        }
        Ok(Self { base, mode })
    }

    pub fn divergence_free(base: ScalarKernelSpec<T>) -> Result<Self> {
        Self::new(base, KernelMode::DivergenceFree)
    }

    pub fn curl_free(base: ScalarKernelSpec<T>) -> Result<Self> {
        Self::new(base, KernelMode::CurlFree)
    }

    pub fn diagonal(base: ScalarKernelSpec<T>) -> Self {
        Self {
            base,
            mode: KernelMode::Diagonal,
        }
    }

    pub fn base(&self) -> &ScalarKernelSpec<T> {
        &self.base
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    /// Same base family and mode with new `(κ, α²)`.
    pub fn with_hyperparameters(&self, length_scale: T, variance: T) -> Result<Self> {
        Self::new(self.base.with_hyperparameters(length_scale, variance)?, self.mode)
    }

    /// Non-fatal concerns about this configuration.
    ///
    /// Structured modes need classical third derivatives of `Φ` for
    /// pointwise divergence/curl identities; that requires `τ > d/2 + 1`.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mode != KernelMode::Diagonal {
            if let Some(tau) = self.base.sobolev_order() {
                let d = self.base.dim() as f64;
                if tau <= d / 2.0 + 1.0 {
                    out.push(format!(
                        "{} in d = {} has tau = {tau} <= d/2 + 1; classical derivatives of the {} kernel columns are not guaranteed",
                        self.base.family(),
                        self.base.dim(),
                        self.mode.name()
                    ));
                }
            }
        }
        out
    }

    /// Central-difference step used by the divergence/curl checks.
    pub fn fd_step(&self) -> T {
        T::of(1e-4) / self.base.length_scale()
    }

    /// Support radius in domain units, for compactly supported bases.
    pub fn support_radius(&self) -> Option<T> {
        self.base
            .family()
            .support_radius()
            .map(|r| T::of(r) / self.base.length_scale())
    }

    /// Typical magnitude of kernel entries (`α²κ²` for structured modes).
    pub fn magnitude(&self) -> T {
        let k = self.base.length_scale();
        match self.mode {
            KernelMode::Diagonal => self.base.variance(),
            _ => self.base.variance() * k * k,
        }
    }

    #[inline]
    pub(crate) fn eval_diff_into(&self, z: &[T], out: &mut [T]) {
        let d = z.len();
        match self.mode {
            KernelMode::Diagonal => {
                let v = self.base.value_at(z);
                out.iter_mut().for_each(|o| *o = T::zero());
                for k in 0..d {
                    out[k * d + k] = v;
                }
            }
            KernelMode::CurlFree => {
                self.base.hessian_into(z, out);
                out.iter_mut().for_each(|o| *o = -*o);
            }
            KernelMode::DivergenceFree => {
                let lap = self.base.hessian_into(z, out);
                for k in 0..d {
                    out[k * d + k] -= lap;
                }
            }
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.base.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.base.dim(),
                found: len,
            });
        }
        Ok(())
    }

    fn column(&self, x: &[T], y: &[T], l: usize) -> Vec<T> {
        let d = self.dim();
        let mut buf = vec![T::zero(); d * d];
        self.eval_into(x, y, &mut buf);
        (0..d).map(|k| buf[k * d + l]).collect()
    }

    fn require_c3(&self) -> Result<()> {
        if !self.base.family().is_c3() {
            return Err(Error::InsufficientSmoothness(format!(
                "{} is not three times differentiable; use matern nu >= 5/2, wendland k >= 2 or gaussian",
                self.base.family()
            )));
        }
        Ok(())
    }
}

impl<T: Real> MatrixValuedKernel<T> for MatrixKernel<T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    #[inline]
    fn eval_into(&self, x: &[T], y: &[T], out: &mut [T]) {
        let mut z = [T::zero(); 3];
        let d = x.len();
        if d <= 3 {
            for k in 0..d {
                z[k] = x[k] - y[k];
            }
            self.eval_diff_into(&z[..d], out);
        } else {
            let z: Vec<T> = x.iter().zip(y).map(|(a, b)| *a - *b).collect();
            self.eval_diff_into(&z, out);
        }
    }
}

/// `K(x, y)` with dimension checks.
pub fn eval_matrix<T: Real>(kernel: &MatrixKernel<T>, x: &[T], y: &[T]) -> Result<DMatrix<T>> {
    kernel.check_dim(x.len())?;
    kernel.check_dim(y.len())?;
    Ok(kernel.eval(x, y))
}

/// Finite-difference divergence in `x` of column `l` of `K(x, y)`.
pub fn divergence_of_column<T: Real>(
    kernel: &MatrixKernel<T>,
    x: &[T],
    y: &[T],
    l: usize,
) -> Result<T> {
    if kernel.mode != KernelMode::DivergenceFree {
        return Err(Error::ModeIncompatible {
            mode: kernel.mode.name(),
            reason: "divergence check needs a divergence_free kernel".into(),
        });
    }
    kernel.require_c3()?;
    kernel.check_dim(x.len())?;
    kernel.check_dim(y.len())?;
    Ok(diff::divergence(|p| kernel.column(p, y, l), x, kernel.fd_step()))
}

/// Finite-difference curl in `x` of column `l` of `K(x, y)`.
pub fn curl_of_column<T: Real>(
    kernel: &MatrixKernel<T>,
    x: &[T],
    y: &[T],
    l: usize,
) -> Result<Vec<T>> {
    if kernel.mode != KernelMode::CurlFree {
        return Err(Error::ModeIncompatible {
            mode: kernel.mode.name(),
            reason: "curl check needs a curl_free kernel".into(),
        });
    }
    kernel.require_c3()?;
    kernel.check_dim(x.len())?;
    kernel.check_dim(y.len())?;
    Ok(diff::curl(|p| kernel.column(p, y, l), x, kernel.fd_step()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, MaternNu};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(d: usize, kappa: f64, alpha2: f64) -> ScalarKernelSpec<f64> {
        ScalarKernelSpec::new(KernelFamily::Gaussian, kappa, alpha2, d).unwrap()
    }

    #[test]
    fn gaussian_at_origin() {
        let div2 = MatrixKernel::divergence_free(gauss(2, 1.0, 1.0)).unwrap();
        assert_eq!(eval_matrix(&div2, &[0.2, 0.3], &[0.2, 0.3]).unwrap(), DMatrix::identity(2, 2) * 2.0);
        let div3 = MatrixKernel::divergence_free(gauss(3, 1.0, 1.0)).unwrap();
        let o = [0.0; 3];
        assert_eq!(eval_matrix(&div3, &o, &o).unwrap(), DMatrix::identity(3, 3) * 4.0);
        let curl3 = MatrixKernel::curl_free(gauss(3, 1.0, 1.0)).unwrap();
        assert_eq!(eval_matrix(&curl3, &o, &o).unwrap(), DMatrix::identity(3, 3) * 2.0);
    }

    #[test]
    fn transpose_symmetry_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = ScalarKernelSpec::new(KernelFamily::Matern(MaternNu::SevenHalves), 2.3, 0.7, 3).unwrap();
        for mode in [KernelMode::DivergenceFree, KernelMode::CurlFree, KernelMode::Diagonal] {
            let k = MatrixKernel::new(base, mode).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
                let y: Vec<f64> = (0..3).map(|_| rng.random()).collect();
                assert_eq!(k.eval(&x, &y), k.eval(&y, &x).transpose());
            }
        }
    }

    #[test]
    fn structured_modes_need_two_or_three_dimensions() {
        let base = ScalarKernelSpec::new(KernelFamily::Gaussian, 1.0, 1.0, 1).unwrap();
        assert!(MatrixKernel::divergence_free(base).is_err());
        assert!(MatrixKernel::curl_free(base).is_err());
        assert_eq!(MatrixKernel::diagonal(base).dim(), 1);
    }

    #[test]
    fn column_divergence_vanishes() {
        let k = MatrixKernel::divergence_free(gauss(2, 1.0, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            for l in 0..2 {
                assert!(divergence_of_column(&k, &x, &y, l).unwrap().abs() < 1e-6);
            }
        }
    }

    #[test]
    fn column_curl_vanishes() {
        let k = MatrixKernel::curl_free(gauss(3, 1.5, 2.0)).unwrap();
        let x = [0.1, 0.5, 0.2];
        let y = [0.7, 0.3, 0.6];
        for l in 0..3 {
            let c = curl_of_column(&k, &x, &y, l).unwrap();
            assert!(diff::curl_magnitude(&c) < 1e-6 * 2.0 * 1.5f64.powi(3));
        }
    }

    #[test]
    fn mode_and_smoothness_guards() {
        let diag = MatrixKernel::diagonal(gauss(2, 1.0, 1.0));
        assert!(matches!(
            divergence_of_column(&diag, &[0.0, 0.0], &[1.0, 0.0], 0).unwrap_err(),
            Error::ModeIncompatible { .. }
        ));
        let rough = ScalarKernelSpec::new(KernelFamily::Matern(MaternNu::ThreeHalves), 1.0, 1.0, 2).unwrap();
        let k = MatrixKernel::divergence_free(rough).unwrap();
        assert!(matches!(
            divergence_of_column(&k, &[0.0, 0.0], &[1.0, 0.0], 0).unwrap_err(),
            Error::InsufficientSmoothness(_)
        ));
    }

    #[test]
    fn wendland_k1_in_3d_warns() {
        let w1 = ScalarKernelSpec::new(KernelFamily::Wendland(1), 1.0, 1.0, 3).unwrap();
        assert!(!MatrixKernel::divergence_free(w1).unwrap().warnings().is_empty());
        assert!(MatrixKernel::diagonal(w1).warnings().is_empty());
        let w3 = ScalarKernelSpec::new(KernelFamily::Wendland(3), 1.0, 1.0, 3).unwrap();
        assert!(MatrixKernel::divergence_free(w3).unwrap().warnings().is_empty());
    }

    #[test]
    fn hyperparameter_scaling() {
        let base = ScalarKernelSpec::new(KernelFamily::Matern(MaternNu::FiveHalves), 1.0, 1.0, 2).unwrap();
        let (kappa, alpha2) = (2.5, 0.3);
        for mode in [KernelMode::DivergenceFree, KernelMode::CurlFree] {
            let unit = MatrixKernel::new(base, mode).unwrap();
            let scaled = unit.with_hyperparameters(kappa, alpha2).unwrap();
            let z = [0.13, -0.21];
            let kz = [kappa * z[0], kappa * z[1]];
            let lhs = scaled.eval(&z, &[0.0, 0.0]);
            let rhs = unit.eval(&kz, &[0.0, 0.0]) * (alpha2 * kappa * kappa);
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                assert_relative_eq!(*a, *b, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn wendland_vanishes_beyond_support() {
        let base = ScalarKernelSpec::new(KernelFamily::Wendland(2), 2.0, 1.0, 2).unwrap();
        let k = MatrixKernel::divergence_free(base).unwrap();
        assert!(k.eval(&[0.0, 0.0], &[0.6, 0.0]).iter().all(|v| *v == 0.0));
        assert!(k.eval(&[0.0, 0.0], &[0.4, 0.0]).iter().any(|v| *v != 0.0));
    }
}
