use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::kernels::MatrixValuedKernel;
use crate::scalar::Real;

/// Jitter rungs tried after the unshifted factorization fails, as multiples
/// of the mean diagonal.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Block Gram matrix `K(X, X) + shift·I` (size `dN × dN`).
///
/// Blocks are computed for `j >= i` and mirrored, so the result is exactly
/// symmetric.
pub fn assemble_gram<T: Real, K: MatrixValuedKernel<T> + ?Sized>(
    kernel: &K,
    x: &PointSet<T>,
    diagonal_shift: T,
) -> DMatrix<T> {
    let d = kernel.dim();
    let n = x.len();
    let size = d * n;
    if size == 0 {
        return DMatrix::zeros(0, 0);
    }
    // column-major: block column j holds rows for all i
    let mut data = vec![T::zero(); size * size];
    data.par_chunks_mut(size * d)
        .enumerate()
        .for_each(|(j, cols)| {
            let mut buf = vec![T::zero(); d * d];
            for i in 0..=j {
                kernel.eval_into(x.point(i), x.point(j), &mut buf);
                for b in 0..d {
                    for a in 0..d {
                        cols[b * size + i * d + a] = buf[a * d + b];
                    }
                }
            }
        });
    let mut gram = DMatrix::from_vec(size, size, data);
    for c in 0..size {
        for r in (c + 1)..size {
            gram[(r, c)] = gram[(c, r)];
        }
    }
    if diagonal_shift != T::zero() {
        for k in 0..size {
            gram[(k, k)] += diagonal_shift;
        }
    }
    gram
}

/// Cross block `K(x, X)` as a `d × dN` matrix.
pub fn cross_block<T: Real, K: MatrixValuedKernel<T> + ?Sized>(
    kernel: &K,
    x: &[T],
    sites: &PointSet<T>,
) -> DMatrix<T> {
    let d = kernel.dim();
    let n = sites.len();
    let mut out = DMatrix::zeros(d, d * n);
    let mut buf = vec![T::zero(); d * d];
    for j in 0..n {
        kernel.eval_into(x, sites.point(j), &mut buf);
        for a in 0..d {
            for b in 0..d {
                out[(a, j * d + b)] = buf[a * d + b];
            }
        }
    }
    out
}

/// Result of [`factor_with_jitter`].
pub struct JitteredFactor<T: Real> {
    pub factor: Cholesky<T, Dyn>,
    pub jitter: T,
}

/// Cholesky factorization of `matrix` with escalating diagonal jitter.
///
/// Tries the matrix as given, then adds `c · mean(diag)` for each `c` in
/// [`JITTER_LADDER`]. `jitter_floor` is a lower bound on the jitter scale for
/// matrices whose diagonal is (numerically) zero.
pub fn factor_with_jitter<T: Real>(matrix: &DMatrix<T>, jitter_floor: T) -> Result<JitteredFactor<T>> {
    let n = matrix.nrows();
    if n == 0 {
        return Ok(JitteredFactor {
            factor: Cholesky::new(DMatrix::zeros(0, 0)).expect("empty factorization"),
            jitter: T::zero(),
        });
    }
    if let Some(factor) = Cholesky::new(matrix.clone()) {
        return Ok(JitteredFactor {
            factor,
            jitter: T::zero(),
        });
    }
    let mean_diag = (matrix.diagonal().sum() / T::of(n as f64)).abs().max(jitter_floor);
    for rung in JITTER_LADDER {
        let jitter = T::of(rung) * mean_diag;
        let mut shifted = matrix.clone();
        for k in 0..n {
            shifted[(k, k)] += jitter;
        }
        if let Some(factor) = Cholesky::new(shifted) {
            return Ok(JitteredFactor { factor, jitter });
        }
    }
    Err(Error::NotPositiveDefinite {
        condition: condition_estimate(matrix),
    })
}

/// Ratio of extreme eigenvalue magnitudes (infinite if singular).
pub fn condition_estimate<T: Real>(matrix: &DMatrix<T>) -> f64 {
    let eig = SymmetricEigen::new(matrix.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in eig.eigenvalues.iter() {
        let a = v.as_f64().abs();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, MatrixKernel, ScalarKernelSpec};

    #[test]
    fn single_site_block() {
        let base = ScalarKernelSpec::new(KernelFamily::Gaussian, 1.0, 1.0, 2).unwrap();
        let k = MatrixKernel::divergence_free(base).unwrap();
        let x = PointSet::new(vec![vec![0.3, 0.4]]).unwrap();
        assert_eq!(assemble_gram(&k, &x, 0.0), DMatrix::identity(2, 2) * 2.0);
        assert_eq!(assemble_gram(&k, &x, 0.5), DMatrix::identity(2, 2) * 2.5);
    }

    #[test]
    fn compact_support_zero_blocks() {
        let base = ScalarKernelSpec::new(KernelFamily::Wendland(2), 2.0, 1.0, 2).unwrap();
        let k = MatrixKernel::divergence_free(base).unwrap();
        let x = PointSet::new(vec![vec![0.0, 0.0], vec![0.9, 0.0]]).unwrap();
        let g = assemble_gram(&k, &x, 0.0);
        assert!(g.view((0, 2), (2, 2)).iter().all(|v| *v == 0.0));
        assert!(g.view((2, 0), (2, 2)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gram_is_exactly_symmetric_and_matches_blocks() {
        let base = ScalarKernelSpec::new(KernelFamily::Gaussian, 3.0, 1.0, 3).unwrap();
        let k = MatrixKernel::curl_free(base).unwrap();
        let x = crate::geometry::generate_points(
            crate::geometry::PointKind::Halton,
            7,
            &crate::geometry::Domain::unit(3).unwrap(),
            0,
        )
        .unwrap();
        let g = assemble_gram(&k, &x, 0.0);
        assert_eq!(&g - g.transpose(), DMatrix::zeros(21, 21));
        let b = k.eval(x.point(1), x.point(4));
        assert_eq!(g.view((3, 12), (3, 3)).into_owned(), b);
        let cross = cross_block(&k, x.point(1), &x);
        assert_eq!(cross, g.rows(3, 3).into_owned());
    }

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = factor_with_jitter(&m, 0.0).unwrap();
        assert!(f.jitter > 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            factor_with_jitter(&bad, 0.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
