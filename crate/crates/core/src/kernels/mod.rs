//! Scalar radial kernels and the matrix-valued kernels built from their
//! second derivatives.

mod matrix;
mod profile;

pub use matrix::{
    curl_of_column, divergence_of_column, eval_matrix, KernelMode, MatrixKernel, MatrixValuedKernel,
};
pub use profile::{KernelFamily, MaternNu, RadialProfile};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::distance_sq;
use crate::scalar::Real;

/// Radial base kernel `Φ(z) = α² ψ(κ²‖z‖²)` on ℝᵈ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarKernelSpec<T> {
    family: KernelFamily,
    length_scale: T,
    variance: T,
    dim: usize,
}

impl<T: Real> ScalarKernelSpec<T> {
    /// `length_scale` is the inverse length κ; `variance` is α².
    ///
    /// Rejects families whose derived Sobolev order does not exceed `d/2`.
    pub fn new(family: KernelFamily, length_scale: T, variance: T, dim: usize) -> Result<Self> {
        if !(length_scale > T::zero()) || !(variance > T::zero()) {
            return Err(Error::InvalidKernel(
                "length scale and variance must be positive".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidKernel("dimension must be positive".into()));
        }
        if let KernelFamily::Wendland(k) = family {
            if !(1..=3).contains(&k) {
                return Err(Error::InvalidKernel(format!("wendland k = {k} not in 1..=3")));
            }
            if dim > 3 {
                return Err(Error::InvalidKernel(
                    "wendland functions are positive definite only for d <= 3".into(),
                ));
            }
        }
        let spec = Self {
            family,
            length_scale,
            variance,
            dim,
        };
        if let Some(tau) = spec.sobolev_order() {
            if !(tau > dim as f64 / 2.0) {
                return Err(Error::InvalidKernel(format!(
                    "{family} in d = {dim} gives tau = {tau}, not above d/2"
                )));
            }
        }
        Ok(spec)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn length_scale(&self) -> T {
        self.length_scale
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> RadialProfile {
        RadialProfile::new(self.family)
    }

    /// Same family and dimension with different hyperparameters.
    pub fn with_hyperparameters(&self, length_scale: T, variance: T) -> Result<Self> {
        Self::new(self.family, length_scale, variance, self.dim)
    }

    /// Order `τ` of the Sobolev space reproduced by the matrix kernels built
    /// from this base (whose own Fourier transform decays like
    /// `(1+‖ω‖²)^{−τ−1}`). `None` means infinite smoothness (Gaussian).
    ///
    /// | family | τ + 1 |
    /// |---|---|
    /// | Matérn ν | ν + d/2 |
    /// | Wendland k (d ≤ 3) | 3/2 + k + 1/2 |
    pub fn sobolev_order(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Gaussian => None,
            KernelFamily::Matern(nu) => Some(nu.value() + self.dim as f64 / 2.0 - 1.0),
            KernelFamily::Wendland(k) => Some(1.5 + k as f64 + 0.5 - 1.0),
        }
    }

    /// `Φ(z)` for a difference vector `z`.
    #[inline]
    pub fn value_at(&self, z: &[T]) -> T {
        let k2 = self.length_scale * self.length_scale;
        let s = k2 * z.iter().fold(T::zero(), |a, v| a + *v * *v);
        self.variance * self.profile().psi(s)
    }

    /// Writes the Hessian of `Φ` at `z` into `out` (row-major `d×d`) and
    /// returns its trace.
    pub(crate) fn hessian_into(&self, z: &[T], out: &mut [T]) -> T {
        let d = z.len();
        let k2 = self.length_scale * self.length_scale;
        let r2 = z.iter().fold(T::zero(), |a, v| a + *v * *v);
        let s = k2 * r2;
        let p = self.profile();
        let diag = T::of(2.0) * k2 * p.psi1(s) * self.variance;
        // zzᵀ vanishes at the origin, where ψ″ may be infinite
        let outer = if s > T::zero() {
            T::of(4.0) * k2 * k2 * p.psi2(s) * self.variance
        } else {
            T::zero()
        };
        for k in 0..d {
            for l in 0..d {
                let mut v = outer * (z[k] * z[l]);
                if k == l {
                    v += diag;
                }
                out[k * d + l] = v;
            }
        }
        outer * r2 + diag * T::of(d as f64)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }
}

pub fn sobolev_order<T: Real>(spec: &ScalarKernelSpec<T>) -> Option<f64> {
    spec.sobolev_order()
}

pub fn radial_profile<T: Real>(spec: &ScalarKernelSpec<T>) -> RadialProfile {
    spec.profile()
}

/// `Φ(x − y)`.
pub fn eval_scalar<T: Real>(spec: &ScalarKernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    spec.check_dim(x.len())?;
    spec.check_dim(y.len())?;
    let k2 = spec.length_scale * spec.length_scale;
    Ok(spec.variance * spec.profile().psi(k2 * distance_sq(x, y)))
}

/// `H[(k, l)] = ∂_k ∂_l Φ(z)`.
pub fn hessian<T: Real>(spec: &ScalarKernelSpec<T>, z: &[T]) -> Result<DMatrix<T>> {
    spec.check_dim(z.len())?;
    let d = z.len();
    let mut buf = vec![T::zero(); d * d];
    spec.hessian_into(z, &mut buf);
    Ok(DMatrix::from_row_slice(d, d, &buf))
}

/// `ΔΦ(z)`, equal to the trace of [`hessian`].
pub fn laplacian<T: Real>(spec: &ScalarKernelSpec<T>, z: &[T]) -> Result<T> {
    spec.check_dim(z.len())?;
    let d = z.len();
    let mut buf = vec![T::zero(); d * d];
    Ok(spec.hessian_into(z, &mut buf))
}
