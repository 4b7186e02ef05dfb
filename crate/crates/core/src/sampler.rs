//! Gaussian field samples on evaluation grids and the discrete
//! Karhunen-Loève (Nyström) eigensystem of a matrix kernel.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::stream_rng;
use crate::geometry::{Domain, PointSet};
use crate::gp::{assemble_gram, factor_with_jitter, symmetrize, GpModel};
use crate::kernels::{MatrixKernel, MatrixValuedKernel};
use crate::scalar::Real;

/// Relative threshold below which Nyström eigenvalues are discarded.
pub const EIGEN_CUTOFF: f64 = 1e-12;

/// Evaluation points, optionally with positive quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationGrid<T> {
    points: PointSet<T>,
    weights: Option<Vec<T>>,
    /// Per-axis counts and spacings for tensor grids (axis 0 varies fastest).
    shape: Option<(Vec<usize>, Vec<T>)>,
}

impl<T: Real> EvaluationGrid<T> {
    /// Cell centres of an `n^d` tensor partition of `dom`; each weight is
    /// the cell volume.
    pub fn midpoint(dom: &Domain<T>, per_axis: usize) -> Result<Self> {
        if per_axis == 0 {
            return Err(Error::EmptyPointSet);
        }
        let d = dom.dim();
        let n = T::of(per_axis as f64);
        let spacing: Vec<T> = (0..d)
            .map(|k| (dom.upper()[k] - dom.lower()[k]) / n)
            .collect();
        let total = per_axis.pow(d as u32);
        let mut coords = Vec::with_capacity(total * d);
        for mut idx in 0..total {
            for (lo, step) in dom.lower().iter().zip(&spacing) {
                let i = idx % per_axis;
                idx /= per_axis;
                coords.push(*lo + *step * (T::of(i as f64) + T::of(0.5)));
            }
        }
        let cell = spacing.iter().fold(T::one(), |a, h| a * *h);
        Ok(Self {
            points: PointSet::from_flat(d, coords)?,
            weights: Some(vec![cell; total]),
            shape: Some((vec![per_axis; d], spacing)),
        })
    }

    /// Unweighted scattered points.
    pub fn from_points(points: PointSet<T>) -> Self {
        Self {
            points,
            weights: None,
            shape: None,
        }
    }

    pub fn with_weights(points: PointSet<T>, weights: Vec<T>) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w > T::zero())) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        Ok(Self {
            points,
            weights: Some(weights),
            shape: None,
        })
    }

    pub fn points(&self) -> &PointSet<T> {
        &self.points
    }

    pub fn weights(&self) -> Option<&[T]> {
        self.weights.as_deref()
    }

    /// Per-axis counts and spacings of a tensor grid.
    pub fn shape(&self) -> Option<(&[usize], &[T])> {
        self.shape.as_ref().map(|(n, h)| (n.as_slice(), h.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

/// Where a [`FieldSample`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSource {
    Prior,
    Posterior,
    KlTruncated(usize),
}

/// One realization on a grid, stacked as `M` blocks of `d` values.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample<T> {
    pub values: Vec<T>,
    /// Standard normals the sample was formed from.
    pub latent: Vec<T>,
    pub seed: u64,
    pub index: u64,
    pub source: SampleSource,
}

impl<T: Real> FieldSample<T> {
    /// Value at grid point `i`.
    pub fn value(&self, i: usize, dim: usize) -> &[T] {
        &self.values[i * dim..(i + 1) * dim]
    }
}

/// Distribution to sample from: the prior of a kernel or a fitted posterior.
#[derive(Clone, Copy)]
pub enum GaussianSource<'a, T: Real> {
    Prior(&'a MatrixKernel<T>),
    Posterior(&'a GpModel<T>),
}

impl<'a, T: Real> From<&'a MatrixKernel<T>> for GaussianSource<'a, T> {
    fn from(k: &'a MatrixKernel<T>) -> Self {
        GaussianSource::Prior(k)
    }
}

impl<'a, T: Real> From<&'a GpModel<T>> for GaussianSource<'a, T> {
    fn from(m: &'a GpModel<T>) -> Self {
        GaussianSource::Posterior(m)
    }
}

/// Factor `F` with `F Fᵀ = cov`: jittered Cholesky, else clipped eigen-square-root.
fn covariance_factor<T: Real>(cov: &DMatrix<T>, floor: T) -> DMatrix<T> {
    if let Ok(jf) = factor_with_jitter(cov, floor) {
        return jf.factor.unpack();
    }
    let eig = SymmetricEigen::new(cov.clone());
    let roots = eig.eigenvalues.map(|l| l.max(T::zero()).sqrt());
    let mut f = eig.eigenvectors;
    for (c, r) in roots.iter().enumerate() {
        f.column_mut(c).scale_mut(*r);
    }
    f
}

fn standard_normals<T: Real>(seed: u64, index: u64, count: usize) -> Vec<T> {
    let mut rng = stream_rng(seed, index);
    (0..count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(z)
        })
        .collect()
}

/// Draws `n_samples` realizations of the prior or posterior on `grid`.
///
/// Sample `i` uses its own stream derived from `(seed, i)`, so results do not
/// depend on thread count.
pub fn sample_gaussian_field<'a, T: Real>(
    source: impl Into<GaussianSource<'a, T>>,
    grid: &EvaluationGrid<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<FieldSample<T>>> {
    if grid.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let d = grid.dim();
    let (mean, mut cov, floor, kind) = match source.into() {
        GaussianSource::Prior(k) => {
            check_kernel_dim(k.dim(), d)?;
            (
                vec![T::zero(); d * grid.len()],
                assemble_gram(k, grid.points(), T::zero()),
                k.magnitude(),
                SampleSource::Prior,
            )
        }
        GaussianSource::Posterior(m) => {
            check_kernel_dim(m.dim(), d)?;
            let mean: Vec<T> = grid.points().iter().flat_map(|p| m.mean_at(p)).collect();
            (
                mean,
                m.predict_joint_cov(grid.points())?,
                m.kernel().magnitude(),
                SampleSource::Posterior,
            )
        }
    };
    symmetrize(&mut cov);
    let factor = covariance_factor(&cov, floor);
    let size = mean.len();
    Ok((0..n_samples as u64)
        .into_par_iter()
        .map(|index| {
            let latent = standard_normals::<T>(seed, index, size);
            let draw = &factor * DVector::from_column_slice(&latent);
            let values = mean.iter().zip(draw.iter()).map(|(m, v)| *m + *v).collect();
            FieldSample {
                values,
                latent,
                seed,
                index,
                source: kind,
            }
        })
        .collect())
}

fn check_kernel_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Discrete eigenpairs `(λ_k, φ_k)` of the integral operator of a kernel on
/// a weighted grid.
#[derive(Clone, Debug)]
pub struct NystromEigensystem<T: Real, K = MatrixKernel<T>> {
    eigenvalues: Vec<T>,
    /// `φ_k` at the grid points, stacked as `M` blocks of `d`.
    eigenvector_blocks: Vec<DVector<T>>,
    grid: EvaluationGrid<T>,
    kernel: K,
    requested: usize,
}

/// Solves `W^{1/2} K W^{1/2} u = λ u` and returns up to `truncation`
/// eigenpairs above the cutoff, with `φ_k(x_i) = u_k(i) / √w_i`.
pub fn nystrom_eigensystem<T: Real, K: MatrixValuedKernel<T> + Clone>(
    kernel: &K,
    grid: &EvaluationGrid<T>,
    truncation: usize,
) -> Result<NystromEigensystem<T, K>> {
    let weights = grid
        .weights()
        .ok_or_else(|| Error::InvalidArgument("nystrom grid needs quadrature weights".into()))?;
    let d = kernel.dim();
    check_kernel_dim(d, grid.dim())?;
    let size = d * grid.len();
    if truncation == 0 || truncation > size {
        return Err(Error::InvalidArgument(format!(
            "truncation {truncation} not in 1..={size}"
        )));
    }
    let roots: Vec<T> = weights
        .iter()
        .flat_map(|w| std::iter::repeat_n(w.sqrt(), d))
        .collect();
    let mut b = assemble_gram(kernel, grid.points(), T::zero());
    for c in 0..size {
        for r in 0..size {
            b[(r, c)] *= roots[r] * roots[c];
        }
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let top = eig.eigenvalues[order[0]];
    let cutoff = top * T::of(EIGEN_CUTOFF);
    let mut eigenvalues = Vec::new();
    let mut eigenvector_blocks = Vec::new();
    for &k in order.iter().take(truncation) {
        let lambda = eig.eigenvalues[k];
        if !(lambda > cutoff) {
            break;
        }
        let u = eig.eigenvectors.column(k);
        eigenvalues.push(lambda);
        eigenvector_blocks.push(DVector::from_iterator(
            size,
            u.iter().zip(&roots).map(|(v, r)| *v / *r),
        ));
    }
    Ok(NystromEigensystem {
        eigenvalues,
        eigenvector_blocks,
        grid: grid.clone(),
        kernel: kernel.clone(),
        requested: truncation,
    })
}

impl<T: Real, K: MatrixValuedKernel<T> + Clone> NystromEigensystem<T, K> {
    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvector_blocks(&self) -> &[DVector<T>] {
        &self.eigenvector_blocks
    }

    pub fn grid(&self) -> &EvaluationGrid<T> {
        &self.grid
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    /// Number of retained eigenpairs (may be below the requested truncation).
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// The leading `m` eigenpairs.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.len());
        Self {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            eigenvector_blocks: self.eigenvector_blocks[..m].to_vec(),
            grid: self.grid.clone(),
            kernel: self.kernel.clone(),
            requested: m,
        }
    }

    /// `φ_k` at grid point `i`.
    pub fn eigenfunction_on_grid(&self, k: usize, i: usize) -> &[T] {
        let d = self.dim();
        &self.eigenvector_blocks[k].as_slice()[i * d..(i + 1) * d]
    }

    /// `Σ_k λ_k φ_k(x_i) φ_k(x_j)ᵀ`.
    pub fn mercer_sum(&self, i: usize, j: usize) -> DMatrix<T> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for k in 0..self.len() {
            let a = self.eigenfunction_on_grid(k, i);
            let b = self.eigenfunction_on_grid(k, j);
            for r in 0..d {
                for c in 0..d {
                    out[(r, c)] += self.eigenvalues[k] * a[r] * b[c];
                }
            }
        }
        out
    }

    /// `Σ_k c_k φ_k(x)` off the grid, using the extension
    /// `φ_k(x) = λ_k⁻¹ Σ_i w_i K(x, x_i) φ_k(x_i)`.
    pub fn extend_combination(&self, c: &[T], x: &[T]) -> Vec<T> {
        let d = self.dim();
        let weights = self.grid.weights().expect("nystrom grid is weighted");
        let mut g = vec![T::zero(); d * self.grid.len()];
        for (k, ck) in c.iter().enumerate().take(self.len()) {
            let scale = *ck / self.eigenvalues[k];
            for (gi, v) in g.iter_mut().zip(self.eigenvector_blocks[k].iter()) {
                *gi += scale * *v;
            }
        }
        let mut out = vec![T::zero(); d];
        let mut buf = vec![T::zero(); d * d];
        for (i, p) in self.grid.points().iter().enumerate() {
            self.kernel.eval_into(x, p, &mut buf);
            for a in 0..d {
                let mut acc = T::zero();
                for b in 0..d {
                    acc += buf[a * d + b] * g[i * d + b];
                }
                out[a] += weights[i] * acc;
            }
        }
        out
    }

    /// Off-grid extension of eigenfunction `k`.
    pub fn extend(&self, k: usize, x: &[T]) -> Vec<T> {
        let mut c = vec![T::zero(); self.len()];
        c[k] = T::one();
        self.extend_combination(&c, x)
    }

    /// Off-grid continuation of a KL sample drawn from this eigensystem.
    pub fn extend_sample(&self, sample: &FieldSample<T>, x: &[T]) -> Vec<T> {
        let c: Vec<T> = sample
            .latent
            .iter()
            .zip(&self.eigenvalues)
            .map(|(xi, l)| *xi * l.sqrt())
            .collect();
        self.extend_combination(&c, x)
    }
}

/// Largest Frobenius residual `‖K(x_i, x_j) − Σ_k λ_k φ_k(x_i)φ_k(x_j)ᵀ‖`
/// over pairs of grid indices.
pub fn mercer_residual<T: Real, K: MatrixValuedKernel<T> + Clone>(
    eigs: &NystromEigensystem<T, K>,
    test_pairs: &[(usize, usize)],
) -> Result<T> {
    if test_pairs.is_empty() {
        return Err(Error::InvalidArgument("no test pairs".into()));
    }
    let m = eigs.grid.len();
    let mut worst = T::zero();
    for &(i, j) in test_pairs {
        if i >= m || j >= m {
            return Err(Error::InvalidArgument(format!(
                "pair ({i}, {j}) outside grid of {m} points"
            )));
        }
        let exact = eigs.kernel.eval(eigs.grid.points().point(i), eigs.grid.points().point(j));
        worst = worst.max((exact - eigs.mercer_sum(i, j)).norm());
    }
    Ok(worst)
}

/// `Σ_k √λ_k ξ_k φ_k` on the grid, for stream 0 of `seed`.
pub fn kl_sample<T: Real, K: MatrixValuedKernel<T> + Clone>(
    eigs: &NystromEigensystem<T, K>,
    seed: u64,
) -> FieldSample<T> {
    kl_sample_indexed(eigs, seed, 0)
}

/// Like [`kl_sample`] for `n` independent streams.
pub fn kl_samples<T: Real, K: MatrixValuedKernel<T> + Clone>(
    eigs: &NystromEigensystem<T, K>,
    n: usize,
    seed: u64,
) -> Vec<FieldSample<T>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| kl_sample_indexed(eigs, seed, i))
        .collect()
}

fn kl_sample_indexed<T: Real, K: MatrixValuedKernel<T> + Clone>(
    eigs: &NystromEigensystem<T, K>,
    seed: u64,
    index: u64,
) -> FieldSample<T> {
    let m = eigs.len();
    let latent = standard_normals::<T>(seed, index, m);
    let size = eigs.dim() * eigs.grid.len();
    let mut values = vec![T::zero(); size];
    for ((xi, l), block) in latent.iter().zip(&eigs.eigenvalues).zip(&eigs.eigenvector_blocks) {
        let c = *xi * l.sqrt();
        for (v, phi) in values.iter_mut().zip(block.iter()) {
            *v += c * *phi;
        }
    }
    FieldSample {
        values,
        latent,
        seed,
        index,
        source: SampleSource::KlTruncated(m),
    }
}
