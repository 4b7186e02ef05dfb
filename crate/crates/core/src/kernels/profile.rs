//! Radial profiles `ψ` with `Φ(x) = α² ψ(κ²‖x‖²)`.
//!
//! Profiles are parameterized by the squared scaled radius `s`, so the
//! Hessian `4κ⁴ψ″(s) z zᵀ + 2κ²ψ′(s) I` has no `1/r` term at the origin.
//! Matérn ν = 3/2 and Wendland k = 1 are only C² as functions on ℝᵈ; their
//! `ψ″` diverges like `1/r` at `s = 0` and is reported as `+∞` there.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Half-integer Matérn smoothness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaternNu {
    ThreeHalves,
    FiveHalves,
    SevenHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
            MaternNu::SevenHalves => 3.5,
        }
    }

    pub fn from_value(nu: f64) -> Option<Self> {
        match nu {
            1.5 => Some(MaternNu::ThreeHalves),
            2.5 => Some(MaternNu::FiveHalves),
            3.5 => Some(MaternNu::SevenHalves),
            _ => None,
        }
    }
}

/// Base kernel family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    Matern(MaternNu),
    /// Wendland function for dimension three with smoothness index `k ∈ {1, 2, 3}`.
    Wendland(u8),
    Gaussian,
}

impl KernelFamily {
    /// True when `Φ` is at least three times continuously differentiable.
    pub fn is_c3(self) -> bool {
        !matches!(
            self,
            KernelFamily::Matern(MaternNu::ThreeHalves) | KernelFamily::Wendland(1)
        )
    }

    /// Support radius in scaled units, if compact.
    pub fn support_radius(self) -> Option<f64> {
        match self {
            KernelFamily::Wendland(_) => Some(1.0),
            _ => None,
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelFamily::Matern(nu) => write!(f, "matern(nu={})", nu.value()),
            KernelFamily::Wendland(k) => write!(f, "wendland(k={k})"),
            KernelFamily::Gaussian => write!(f, "gaussian"),
        }
    }
}

/// `ψ`, `ψ′`, `ψ″` of one family, as functions of `s = κ²‖z‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialProfile {
    family: KernelFamily,
}

impl RadialProfile {
    pub fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn psi<T: Real>(&self, s: T) -> T {
        let r = s.sqrt();
        match self.family {
            KernelFamily::Gaussian => (-s).exp(),
            KernelFamily::Matern(nu) => {
                let (a, e) = matern_exp::<T>(nu, r);
                match nu {
                    MaternNu::ThreeHalves => (T::one() + a) * e,
                    MaternNu::FiveHalves => (T::one() + a + a * a / T::of(3.0)) * e,
                    MaternNu::SevenHalves => {
                        (T::one() + a + T::of(2.0 / 5.0) * a * a + a * a * a / T::of(15.0)) * e
                    }
                }
            }
            KernelFamily::Wendland(k) => {
                if r >= T::one() {
                    return T::zero();
                }
                let t = T::one() - r;
                match k {
                    1 => t.powi(4) * (T::of(4.0) * r + T::one()),
                    2 => t.powi(6) * (T::of(35.0) * s + T::of(18.0) * r + T::of(3.0)) / T::of(3.0),
                    _ => {
                        t.powi(8)
                            * (T::of(32.0) * s * r + T::of(25.0) * s + T::of(8.0) * r + T::one())
                    }
                }
            }
        }
    }

    pub fn psi1<T: Real>(&self, s: T) -> T {
        let r = s.sqrt();
        match self.family {
            KernelFamily::Gaussian => -(-s).exp(),
            KernelFamily::Matern(nu) => {
                let (a, e) = matern_exp::<T>(nu, r);
                match nu {
                    MaternNu::ThreeHalves => T::of(-1.5) * e,
                    MaternNu::FiveHalves => T::of(-5.0 / 6.0) * (T::one() + a) * e,
                    MaternNu::SevenHalves => {
                        T::of(-7.0 / 30.0) * (a * a + T::of(3.0) * a + T::of(3.0)) * e
                    }
                }
            }
            KernelFamily::Wendland(k) => {
                if r >= T::one() {
                    return T::zero();
                }
                let t = T::one() - r;
                match k {
                    1 => T::of(-10.0) * t.powi(3),
                    2 => T::of(-28.0 / 3.0) * t.powi(5) * (T::of(5.0) * r + T::one()),
                    _ => {
                        T::of(-11.0)
                            * t.powi(7)
                            * (T::of(16.0) * s + T::of(7.0) * r + T::one())
                    }
                }
            }
        }
    }

    /// Second derivative in `s`; `+∞` at `s = 0` for the C²-only families.
    pub fn psi2<T: Real>(&self, s: T) -> T {
        let r = s.sqrt();
        match self.family {
            KernelFamily::Gaussian => (-s).exp(),
            KernelFamily::Matern(nu) => {
                let (a, e) = matern_exp::<T>(nu, r);
                match nu {
                    MaternNu::ThreeHalves => {
                        if r == T::zero() {
                            return T::one() / T::zero();
                        }
                        T::of(3.0 * 3f64.sqrt() / 4.0) * e / r
                    }
                    MaternNu::FiveHalves => T::of(25.0 / 12.0) * e,
                    MaternNu::SevenHalves => T::of(49.0 / 60.0) * (T::one() + a) * e,
                }
            }
            KernelFamily::Wendland(k) => {
                if r >= T::one() {
                    return T::zero();
                }
                let t = T::one() - r;
                match k {
                    1 => {
                        if r == T::zero() {
                            return T::one() / T::zero();
                        }
                        T::of(15.0) * t * t / r
                    }
                    2 => T::of(140.0) * t.powi(4),
                    _ => T::of(132.0) * t.powi(6) * (T::of(6.0) * r + T::one()),
                }
            }
        }
    }
}

/// Returns `(√(2ν) r, exp(−√(2ν) r))`.
#[inline]
fn matern_exp<T: Real>(nu: MaternNu, r: T) -> (T, T) {
    let a = T::of((2.0 * nu.value()).sqrt()) * r;
    (a, (-a).exp())
}
