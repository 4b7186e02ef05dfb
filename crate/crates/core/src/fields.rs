//! Analytic divergence-free and curl-free target fields, and noisy
//! observations of them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diff;
use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::gp::{quadratic_form, NoiseModel, Observations};
use crate::kernels::{KernelMode, MatrixKernel, MatrixValuedKernel};
use crate::scalar::Real;

/// Number of random points used to certify a field's declared structure.
pub const CERTIFICATION_POINTS: usize = 100;
/// Certification tolerance relative to [`AnalyticField::derivative_scale`].
pub const CERTIFICATION_TOLERANCE: f64 = 1e-6;

/// `amplitude · Π_i sin(ω_i x_i + p_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm<T> {
    pub amplitude: T,
    pub frequency: Vec<T>,
    pub phase: Vec<T>,
}

impl<T: Real> TrigTerm<T> {
    pub fn new(amplitude: T, frequency: Vec<T>, phase: Vec<T>) -> Result<Self> {
        if frequency.len() != phase.len() {
            return Err(Error::DimensionMismatch {
                expected: frequency.len(),
                found: phase.len(),
            });
        }
        Ok(Self {
            amplitude,
            frequency,
            phase,
        })
    }

    pub fn dim(&self) -> usize {
        self.frequency.len()
    }

    fn value(&self, x: &[T]) -> T {
        x.iter()
            .zip(self.frequency.iter().zip(&self.phase))
            .fold(self.amplitude, |acc, (xi, (w, p))| acc * (*w * *xi + *p).sin())
    }

    fn gradient_into(&self, x: &[T], out: &mut [T]) {
        let d = self.dim();
        let sines: Vec<T> = (0..d)
            .map(|i| (self.frequency[i] * x[i] + self.phase[i]).sin())
            .collect();
        for j in 0..d {
            let mut g = self.amplitude
                * self.frequency[j]
                * (self.frequency[j] * x[j] + self.phase[j]).cos();
            for (i, s) in sines.iter().enumerate() {
                if i != j {
                    g *= *s;
                }
            }
            out[j] += g;
        }
    }
}

/// Scalar potential given as a sum of [`TrigTerm`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPotential<T> {
    dim: usize,
    terms: Vec<TrigTerm<T>>,
}

impl<T: Real> TrigPotential<T> {
    pub fn new(dim: usize, terms: Vec<TrigTerm<T>>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: t.dim(),
            });
        }
        Ok(Self { dim, terms })
    }

    /// The zero potential.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    /// `sin(a x₁) sin(b x₂)`.
    pub fn sin_sin(a: T, b: T) -> Self {
        Self {
            dim: 2,
            terms: vec![TrigTerm {
                amplitude: T::one(),
                frequency: vec![a, b],
                phase: vec![T::zero(); 2],
            }],
        }
    }

    /// `sin(a x₁) cos(b x₂)`.
    pub fn sin_cos(a: T, b: T) -> Self {
        Self {
            dim: 2,
            terms: vec![TrigTerm {
                amplitude: T::one(),
                frequency: vec![a, b],
                phase: vec![T::zero(), T::frac_pi_2()],
            }],
        }
    }

    /// Embeds a 2-D potential in 3-D, constant along `x₃`.
    pub fn extend_to_3d(&self) -> Self {
        Self {
            dim: 3,
            terms: self
                .terms
                .iter()
                .map(|t| TrigTerm {
                    amplitude: t.amplitude,
                    frequency: vec![t.frequency[0], t.frequency[1], T::zero()],
                    phase: vec![t.phase[0], t.phase[1], T::frac_pi_2()],
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TrigTerm<T>] {
        &self.terms
    }

    pub fn value(&self, x: &[T]) -> T {
        self.terms.iter().fold(T::zero(), |a, t| a + t.value(x))
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim];
        for t in &self.terms {
            t.gradient_into(x, &mut g);
        }
        g
    }

    fn derivative_scale(&self) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| {
            let w = t
                .frequency
                .iter()
                .fold(T::one(), |m, f| m.max(f.abs()));
            acc + t.amplitude.abs() * w * w
        })
    }

    fn max_frequency(&self) -> T {
        self.terms
            .iter()
            .flat_map(|t| t.frequency.iter())
            .fold(T::one(), |m, f| m.max(f.abs()))
    }
}

/// Structure a field is guaranteed to have.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldStructure {
    DivergenceFree,
    CurlFree,
    /// No differential constraint (kernel combinations of a diagonal kernel).
    Generic,
}

/// How a field is generated.
#[derive(Clone, Debug)]
pub enum FieldKind<T: Real> {
    /// `v = (∂₂ψ, −∂₁ψ)`.
    Stream2d(TrigPotential<T>),
    /// `v = ∇ × Ψ`.
    VectorPotential3d([TrigPotential<T>; 3]),
    /// `v = ∇φ`.
    Gradient(TrigPotential<T>),
    /// `v = Σ_j K(·, z_j) β_j`.
    KernelCombo {
        kernel: MatrixKernel<T>,
        centers: PointSet<T>,
        betas: Vec<T>,
    },
}

/// A closed-form vector field with a declared (and certified) structure.
#[derive(Clone, Debug)]
pub struct AnalyticField<T: Real> {
    kind: FieldKind<T>,
    structure: FieldStructure,
    dim: usize,
}

impl<T: Real> AnalyticField<T> {
    fn build(kind: FieldKind<T>, structure: FieldStructure, dim: usize) -> Result<Self> {
        let field = Self {
            kind,
            structure,
            dim,
        };
        field.certify(0)?;
        Ok(field)
    }

    pub fn kind(&self) -> &FieldKind<T> {
        &self.kind
    }

    pub fn structure(&self) -> FieldStructure {
        self.structure
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        match &self.kind {
            FieldKind::Stream2d(psi) => {
                let g = psi.gradient(x);
                vec![g[1], -g[0]]
            }
            FieldKind::Gradient(phi) => phi.gradient(x),
            FieldKind::VectorPotential3d(psi) => {
                let g: Vec<Vec<T>> = psi.iter().map(|p| p.gradient(x)).collect();
                vec![
                    g[2][1] - g[1][2],
                    g[0][2] - g[2][0],
                    g[1][0] - g[0][1],
                ]
            }
            FieldKind::KernelCombo {
                kernel,
                centers,
                betas,
            } => {
                let d = self.dim;
                let mut out = vec![T::zero(); d];
                let mut buf = vec![T::zero(); d * d];
                for (j, z) in centers.iter().enumerate() {
                    kernel.eval_into(x, z, &mut buf);
                    for a in 0..d {
                        for b in 0..d {
                            out[a] += buf[a * d + b] * betas[j * d + b];
                        }
                    }
                }
                out
            }
        }
    }

    /// `‖v‖²_H = Σ_ij β_iᵀ K(z_i, z_j) β_j` for kernel combinations.
    pub fn native_norm_sq(&self) -> Option<T> {
        match &self.kind {
            FieldKind::KernelCombo {
                kernel,
                centers,
                betas,
            } => Some(quadratic_form(kernel, centers, betas)),
            _ => None,
        }
    }

    /// Typical size of first derivatives, used to scale structure residuals.
    pub fn derivative_scale(&self) -> T {
        match &self.kind {
            FieldKind::Stream2d(p) | FieldKind::Gradient(p) => p.derivative_scale(),
            FieldKind::VectorPotential3d(ps) => ps
                .iter()
                .fold(T::zero(), |a, p| a + p.derivative_scale()),
            FieldKind::KernelCombo { kernel, betas, .. } => {
                let beta_sum = betas.iter().fold(T::zero(), |a, b| a + b.abs());
                kernel.magnitude() * kernel.base().length_scale() * beta_sum
            }
        }
    }

    /// Finite-difference step appropriate for this field.
    pub fn fd_step(&self) -> T {
        match &self.kind {
            FieldKind::Stream2d(p) | FieldKind::Gradient(p) => T::of(1e-4) / p.max_frequency(),
            FieldKind::VectorPotential3d(ps) => {
                let w = ps.iter().fold(T::one(), |m, p| m.max(p.max_frequency()));
                T::of(1e-4) / w
            }
            FieldKind::KernelCombo { kernel, .. } => kernel.fd_step(),
        }
    }

    /// Extrapolated finite-difference divergence (divergence-free fields) or curl
    /// magnitude (curl-free fields) at `x`, divided by [`Self::derivative_scale`].
    pub fn structure_residual(&self, x: &[T]) -> Option<T> {
        let h = self.fd_step();
        let scale = self.derivative_scale().max(T::of(f64::MIN_POSITIVE));
        let j = || diff::jacobian_extrapolated(|p: &[T]| self.eval(p), x, h);
        match self.structure {
            FieldStructure::DivergenceFree => Some(j().trace().abs() / scale),
            FieldStructure::CurlFree => Some(diff::curl_magnitude(&diff::curl_from_jacobian(&j())) / scale),
            FieldStructure::Generic => None,
        }
    }

    fn certification_box(&self) -> (Vec<T>, Vec<T>) {
        match &self.kind {
            FieldKind::KernelCombo {
                kernel, centers, ..
            } => {
                let pad = T::one() / kernel.base().length_scale();
                let mut lo = vec![T::max_value().unwrap(); self.dim];
                let mut hi = vec![T::min_value().unwrap(); self.dim];
                for p in centers.iter() {
                    for k in 0..self.dim {
                        lo[k] = lo[k].min(p[k] - pad);
                        hi[k] = hi[k].max(p[k] + pad);
                    }
                }
                (lo, hi)
            }
            _ => (vec![-T::pi(); self.dim], vec![T::pi(); self.dim]),
        }
    }

    /// Checks the declared structure by finite differences at
    /// [`CERTIFICATION_POINTS`] random points; returns the worst scaled residual.
    ///
    /// Kernel combinations of bases that are not three times differentiable
    /// are not certified (their structure follows from the kernel mode).
    pub fn certify(&self, seed: u64) -> Result<T> {
        if let FieldKind::KernelCombo { kernel, .. } = &self.kind {
            if !kernel.base().family().is_c3() {
                return Ok(T::zero());
            }
        }
        if self.structure == FieldStructure::Generic {
            return Ok(T::zero());
        }
        let (lo, hi) = self.certification_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = T::zero();
        let mut x = vec![T::zero(); self.dim];
        for _ in 0..CERTIFICATION_POINTS {
            for k in 0..self.dim {
                let u: f64 = rand::Rng::random(&mut rng);
                x[k] = lo[k] + (hi[k] - lo[k]) * T::of(u);
            }
            let r = self.structure_residual(&x).unwrap_or_else(T::zero);
            worst = worst.max(r);
        }
        if worst > T::of(CERTIFICATION_TOLERANCE) {
            return Err(Error::CertificationFailed(format!(
                "{:?} residual {worst:e} exceeds {CERTIFICATION_TOLERANCE:e}",
                self.structure
            )));
        }
        Ok(worst)
    }
}

/// Divergence-free 2-D field from a stream function.
pub fn make_stream_field_2d<T: Real>(psi: TrigPotential<T>) -> Result<AnalyticField<T>> {
    if psi.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: psi.dim(),
        });
    }
    AnalyticField::build(FieldKind::Stream2d(psi), FieldStructure::DivergenceFree, 2)
}

/// Curl-free field `∇φ` (d = 2 or 3).
pub fn make_gradient_field<T: Real>(phi: TrigPotential<T>) -> Result<AnalyticField<T>> {
    let d = phi.dim();
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "gradient fields need d in {{2, 3}}, got {d}"
        )));
    }
    AnalyticField::build(FieldKind::Gradient(phi), FieldStructure::CurlFree, d)
}

/// Divergence-free 3-D field `∇ × Ψ`.
pub fn make_vectorpotential_field_3d<T: Real>(psi: [TrigPotential<T>; 3]) -> Result<AnalyticField<T>> {
    if let Some(p) = psi.iter().find(|p| p.dim() != 3) {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: p.dim(),
        });
    }
    AnalyticField::build(
        FieldKind::VectorPotential3d(psi),
        FieldStructure::DivergenceFree,
        3,
    )
}

/// `Σ_j K(·, z_j) β_j`, a member of the kernel's native space.
pub fn make_kernel_combo<T: Real>(
    kernel: &MatrixKernel<T>,
    centers: PointSet<T>,
    betas: Vec<T>,
) -> Result<AnalyticField<T>> {
    let d = kernel.dim();
    if centers.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: centers.dim(),
        });
    }
    if betas.len() != centers.len() * d {
        return Err(Error::DimensionMismatch {
            expected: centers.len() * d,
            found: betas.len(),
        });
    }
    let structure = match kernel.mode() {
        KernelMode::DivergenceFree => FieldStructure::DivergenceFree,
        KernelMode::CurlFree => FieldStructure::CurlFree,
        KernelMode::Diagonal => FieldStructure::Generic,
    };
    AnalyticField::build(
        FieldKind::KernelCombo {
            kernel: *kernel,
            centers,
            betas,
        },
        structure,
        d,
    )
}

/// Additive observation noise `ε_j ~ N(0, σ² I_d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec<T> {
    pub sigma: T,
    pub seed: u64,
}

impl<T: Real> NoiseSpec<T> {
    pub fn exact() -> Self {
        Self {
            sigma: T::zero(),
            seed: 0,
        }
    }
}

/// Seeded stream for item `index`, independent of evaluation order.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `y_j = v(x_j) + σ ξ_j` with per-site standard normal `ξ_j`.
pub fn sample_observations<T: Real>(
    field: &AnalyticField<T>,
    x: &PointSet<T>,
    noise: NoiseSpec<T>,
) -> Result<Observations<T>> {
    if x.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            found: x.dim(),
        });
    }
    if !(noise.sigma >= T::zero()) {
        return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
    }
    let mut values = Vec::with_capacity(x.len() * x.dim());
    for (j, p) in x.iter().enumerate() {
        let v = field.eval(p);
        if noise.sigma == T::zero() {
            values.extend(v);
        } else {
            let mut rng = stream_rng(noise.seed, j as u64);
            values.extend(v.into_iter().map(|vi| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                vi + noise.sigma * T::of(xi)
            }));
        }
    }
    let model = if noise.sigma == T::zero() {
        NoiseModel::Exact
    } else {
        NoiseModel::Gaussian {
            variance: noise.sigma * noise.sigma,
        }
    };
    Observations::new(x.clone(), values, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, ScalarKernelSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn stream_field_values() {
        let f = make_stream_field_2d(TrigPotential::sin_sin(1.0, 1.0)).unwrap();
        let v = f.eval(&[FRAC_PI_2, 0.0]);
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-15);
        let x = [0.3f64, 1.1];
        let v = f.eval(&x);
        assert_relative_eq!(v[0], x[0].sin() * x[1].cos(), epsilon = 1e-15);
        assert_relative_eq!(v[1], -x[0].cos() * x[1].sin(), epsilon = 1e-15);
        assert!(f.certify(7).unwrap() < 1e-8);
    }

    #[test]
    fn gradient_field_values() {
        let f = make_gradient_field(TrigPotential::sin_cos(1.0, 1.0)).unwrap();
        let v = f.eval(&[0.0, 0.0]);
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-15);
        let x = [0.7f64, -0.4];
        let v = f.eval(&x);
        assert_relative_eq!(v[0], x[0].cos() * x[1].cos(), epsilon = 1e-15);
        assert_relative_eq!(v[1], -x[0].sin() * x[1].sin(), epsilon = 1e-15);
        assert!(f.certify(8).unwrap() < 1e-8);
    }

    #[test]
    fn vector_potential_reduces_to_stream() {
        let psi3 = TrigPotential::sin_sin(1.0, 1.0).extend_to_3d();
        let f = make_vectorpotential_field_3d([TrigPotential::zero(3), TrigPotential::zero(3), psi3]).unwrap();
        let x = [0.4f64, 0.9, 2.0];
        let v = f.eval(&x);
        assert_relative_eq!(v[0], x[0].sin() * x[1].cos(), epsilon = 1e-15);
        assert_relative_eq!(v[1], -x[0].cos() * x[1].sin(), epsilon = 1e-15);
        assert_eq!(v[2], 0.0);
        assert_eq!(f.eval(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert!(f.certify(9).unwrap() < 1e-8);
    }

    #[test]
    fn kernel_combo_at_center() {
        let base = ScalarKernelSpec::new(KernelFamily::Gaussian, 1.0, 1.0, 2).unwrap();
        let k = MatrixKernel::divergence_free(base).unwrap();
        let centers = PointSet::new(vec![vec![0.2, 0.3]]).unwrap();
        let f = make_kernel_combo(&k, centers, vec![1.0, 0.0]).unwrap();
        let v = f.eval(&[0.2, 0.3]);
        assert_eq!(v, vec![2.0, 0.0]);
        assert_relative_eq!(f.native_norm_sq().unwrap(), 2.0);
        assert_eq!(f.structure(), FieldStructure::DivergenceFree);
    }

    #[test]
    fn mislabelled_structure_is_rejected() {
        // a gradient field is not divergence-free
        let kind = FieldKind::Gradient(TrigPotential::sin_cos(1.0, 1.0));
        let err = AnalyticField::build(kind, FieldStructure::DivergenceFree, 2).unwrap_err();
        assert!(matches!(err, Error::CertificationFailed(_)));
    }

    #[test]
    fn exact_and_seeded_observations() {
        let f = make_stream_field_2d(TrigPotential::sin_sin(1.0, 1.0)).unwrap();
        let x = PointSet::new(vec![vec![0.1, 0.2], vec![0.5, 0.9]]).unwrap();
        let exact = sample_observations(&f, &x, NoiseSpec::exact()).unwrap();
        assert_eq!(exact.value(1), f.eval(&[0.5, 0.9]).as_slice());
        let noise = NoiseSpec { sigma: 0.1, seed: 5 };
        let a = sample_observations(&f, &x, noise).unwrap();
        let b = sample_observations(&f, &x, noise).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), exact.values());
    }

    #[test]
    fn noise_variance_concentrates() {
        let f = make_stream_field_2d(TrigPotential::sin_sin(1.0, 1.0)).unwrap();
        let dom = crate::geometry::Domain::unit(2).unwrap();
        let x = crate::geometry::generate_points(crate::geometry::PointKind::Grid, 20, &dom, 0).unwrap();
        let sigma = 0.1;
        let obs = sample_observations(&f, &x, NoiseSpec { sigma, seed: 99 }).unwrap();
        let exact = sample_observations(&f, &x, NoiseSpec::exact()).unwrap();
        let mean_sq: f64 = obs
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / obs.values().len() as f64;
        assert!(mean_sq > 0.8 * sigma * sigma && mean_sq < 1.2 * sigma * sigma, "{mean_sq}");
    }
}
