//! TOML experiment configuration.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fields::{
    make_gradient_field, make_kernel_combo, make_stream_field_2d, make_vectorpotential_field_3d,
    AnalyticField, TrigPotential, TrigTerm,
};
use crate::geometry::{generate_points, Domain, PointKind};
use crate::gp::FitMode;
use crate::kernels::{KernelFamily, KernelMode, MaternNu, MatrixKernel, ScalarKernelSpec};

#[derive(Clone, Debug, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub field: FieldConfig,
    pub fit: FitConfig,
    pub points: PointsConfig,
    pub evaluation: EvaluationConfig,
    pub certificate: CertificateConfig,
    pub chebyshev: ChebyshevConfig,
    pub powermap: PowerMapConfig,
    pub sampler: SamplerConfig,
    pub kernel_check: KernelCheckConfig,
}


#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Gaussian,
    Matern,
    Wendland,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: FamilyName,
    /// Matérn smoothness (1.5, 2.5 or 3.5).
    pub nu: f64,
    /// Wendland index (1, 2 or 3).
    pub k: u8,
    /// Inverse length κ.
    pub length_scale: f64,
    /// Amplitude α².
    pub variance: f64,
    pub mode: KernelMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: FamilyName::Matern,
            nu: 2.5,
            k: 2,
            length_scale: 3.0,
            variance: 1.0,
            mode: KernelMode::DivergenceFree,
        }
    }
}

impl KernelConfig {
    pub fn family(&self) -> Result<KernelFamily> {
        Ok(match self.family {
            FamilyName::Gaussian => KernelFamily::Gaussian,
            FamilyName::Matern => KernelFamily::Matern(
                MaternNu::from_value(self.nu)
                    .ok_or_else(|| Error::Config(format!("unsupported matern nu {}", self.nu)))?,
            ),
            FamilyName::Wendland => KernelFamily::Wendland(self.k),
        })
    }

    pub fn build(&self, dim: usize) -> Result<MatrixKernel<f64>> {
        let base = ScalarKernelSpec::new(self.family()?, self.length_scale, self.variance, dim)?;
        MatrixKernel::new(base, self.mode)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FieldKindName {
    Stream2d,
    Gradient,
    Vectorpotential3d,
    KernelCombo,
}

/// One `amplitude · Π sin(ω_i x_i + p_i)` term.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    #[serde(default = "one")]
    pub amplitude: f64,
    pub frequency: Vec<f64>,
    #[serde(default)]
    pub phase: Vec<f64>,
    /// Component of the vector potential (3-D only).
    #[serde(default)]
    pub component: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: FieldKindName,
    /// Frequencies `(a, b)` of the default trig potential.
    pub a: f64,
    pub b: f64,
    /// Custom potential terms; replace the default when non-empty.
    pub terms: Vec<TermConfig>,
    /// Number of Halton centres for `kernel_combo`.
    pub centers: usize,
    /// Kernel generating a `kernel_combo` target; defaults to the regression kernel.
    pub kernel: Option<KernelConfig>,
    /// Observation noise standard deviation.
    pub noise_sigma: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            kind: FieldKindName::KernelCombo,
            a: 1.0,
            b: 1.0,
            terms: Vec::new(),
            centers: 8,
            kernel: None,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FitModeName {
    Interpolate,
    Posterior,
    Penalized,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum LambdaSetting {
    Value(f64),
    Named(String),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub mode: FitModeName,
    /// Penalty: a number or `"auto"` (`√λ = h^{τ−β/2}`).
    pub lambda: LambdaSetting,
    /// Noise variance for posterior mode; defaults to `noise_sigma²`.
    pub noise_variance: Option<f64>,
    /// Target smoothness β for the auto rule; defaults to the kernel order τ
    /// or, for rougher `kernel_combo` targets, that kernel's order.
    pub target_smoothness: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: FitModeName::Interpolate,
            lambda: LambdaSetting::Named("auto".into()),
            noise_variance: None,
            target_smoothness: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PointsConfig {
    pub kind: PointKind,
    /// Per-axis counts for grids, totals otherwise; strictly increasing.
    pub ladder: Vec<usize>,
}

impl Default for PointsConfig {
    fn default() -> Self {
        Self {
            kind: PointKind::Grid,
            ladder: vec![5, 9, 17, 33],
        }
    }
}

/// An error norm `W^s_q`.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    /// 1, 2 or `inf`.
    pub q: f64,
    #[serde(default)]
    pub s: u8,
}

impl NormSpec {
    pub fn tag(&self) -> String {
        let gamma = self.q.max(2.0);
        format!("q{}_s{}_gamma{}", fmt_q(self.q), self.s, fmt_q(gamma))
    }
}

fn fmt_q(q: f64) -> String {
    if q.is_infinite() {
        "inf".into()
    } else {
        format!("{q}")
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Midpoint cells per axis.
    pub resolution: usize,
    pub norms: Vec<NormSpec>,
    /// Boundary margin; defaults to the fill distance of the coarsest level.
    pub margin: Option<f64>,
    /// Probe points per axis for fill-distance estimates.
    pub probe_resolution: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            resolution: 40,
            norms: vec![
                NormSpec { q: 2.0, s: 0 },
                NormSpec {
                    q: f64::INFINITY,
                    s: 0,
                },
            ],
            margin: None,
            probe_resolution: 129,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateConfig {
    pub n_points: usize,
    pub tolerance: f64,
    /// Ladder level to fit; defaults to the coarsest.
    pub level: usize,
    /// Property checked for diagonal kernels (structured kernels check their own).
    pub structure: CheckedStructure,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            n_points: 200,
            tolerance: 1e-5,
            level: 0,
            structure: CheckedStructure::DivergenceFree,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CheckedStructure {
    DivergenceFree,
    CurlFree,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ChebyshevConfig {
    pub n_samples: usize,
    pub n_points: usize,
    pub epsilon_factors: Vec<f64>,
    pub level: usize,
}

impl Default for ChebyshevConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            n_points: 5,
            epsilon_factors: vec![0.5, 1.0, 2.0],
            level: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PowerMapConfig {
    /// Midpoint cells per axis of the map.
    pub resolution: usize,
}

impl Default for PowerMapConfig {
    fn default() -> Self {
        Self { resolution: 20 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SampleSourceName {
    Prior,
    Posterior,
    Kl,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub source: SampleSourceName,
    pub n_samples: usize,
    pub resolution: usize,
    /// KL truncation; defaults to all retained modes.
    pub truncation: Option<usize>,
    pub level: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            source: SampleSourceName::Prior,
            n_samples: 4,
            resolution: 10,
            truncation: None,
            level: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KernelCheckConfig {
    pub n_points: usize,
    pub fd_step: f64,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            fd_step: 1e-4,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        self.domain.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.domain()?;
        self.regression_kernel()?;
        if self.points.ladder.is_empty() {
            return Err(Error::Config("refinement ladder is empty".into()));
        }
        if self.points.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("refinement ladder must be strictly increasing".into()));
        }
        for n in &self.evaluation.norms {
            if !(n.q == 1.0 || n.q == 2.0 || n.q == f64::INFINITY) || n.s > 1 {
                return Err(Error::Config(format!(
                    "unsupported norm q = {}, s = {}",
                    n.q, n.s
                )));
            }
        }
        if self.evaluation.resolution < 2 {
            return Err(Error::Config("evaluation resolution must be at least 2".into()));
        }
        if !(self.field.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        if let LambdaSetting::Named(name) = &self.fit.lambda {
            if name != "auto" {
                return Err(Error::Config(format!("lambda must be a number or \"auto\", got {name}")));
            }
        }
        for level in [self.certificate.level, self.chebyshev.level, self.sampler.level] {
            if level >= self.points.ladder.len() {
                return Err(Error::Config(format!("level {level} outside the ladder")));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain<f64>> {
        Domain::new(self.domain.lower.clone(), self.domain.upper.clone())
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn regression_kernel(&self) -> Result<MatrixKernel<f64>> {
        self.kernel.build(self.dim())
    }

    /// Kernel generating a `kernel_combo` target.
    pub fn target_kernel(&self) -> Result<MatrixKernel<f64>> {
        match &self.field.kernel {
            Some(k) => k.build(self.dim()),
            None => self.regression_kernel(),
        }
    }

    /// Sobolev order of the target (`None` for entire fields).
    pub fn target_smoothness(&self) -> Result<Option<f64>> {
        if let Some(beta) = self.fit.target_smoothness {
            return Ok(Some(beta));
        }
        if self.field.kind == FieldKindName::KernelCombo {
            return Ok(self.target_kernel()?.base().sobolev_order());
        }
        Ok(None)
    }

    fn potential(&self, dim: usize, component: usize) -> Result<TrigPotential<f64>> {
        if self.field.terms.is_empty() {
            return Ok(match (self.field.kind, dim) {
                (FieldKindName::Gradient, 2) => TrigPotential::sin_cos(self.field.a, self.field.b),
                (FieldKindName::Gradient, _) => TrigPotential::sin_cos(self.field.a, self.field.b).extend_to_3d(),
                (FieldKindName::Vectorpotential3d, _) if component != 2 => TrigPotential::zero(3),
                (FieldKindName::Vectorpotential3d, _) => {
                    TrigPotential::sin_sin(self.field.a, self.field.b).extend_to_3d()
                }
                _ => TrigPotential::sin_sin(self.field.a, self.field.b),
            });
        }
        let terms = self
            .field
            .terms
            .iter()
            .filter(|t| t.component == component)
            .map(|t| {
                let phase = if t.phase.is_empty() {
                    vec![0.0; t.frequency.len()]
                } else {
                    t.phase.clone()
                };
                TrigTerm::new(t.amplitude, t.frequency.clone(), phase)
            })
            .collect::<Result<Vec<_>>>()?;
        TrigPotential::new(dim, terms)
    }

    /// Ground-truth field.
    pub fn build_field(&self) -> Result<AnalyticField<f64>> {
        let d = self.dim();
        match self.field.kind {
            FieldKindName::Stream2d => make_stream_field_2d(self.potential(2, 0)?),
            FieldKindName::Gradient => make_gradient_field(self.potential(d, 0)?),
            FieldKindName::Vectorpotential3d => make_vectorpotential_field_3d([
                self.potential(3, 0)?,
                self.potential(3, 1)?,
                self.potential(3, 2)?,
            ]),
            FieldKindName::KernelCombo => {
                let kernel = self.target_kernel()?;
                let dom = self.domain()?;
                let centers = generate_points(PointKind::Halton, self.field.centers.max(1), &dom, 0)?;
                let mut rng = crate::fields::stream_rng(self.seed, u64::MAX);
                let betas = (0..centers.len() * d)
                    .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
                    .collect();
                make_kernel_combo(&kernel, centers, betas)
            }
        }
    }

    /// Fit mode at fill distance `h`.
    pub fn fit_mode(&self, h: f64) -> Result<FitMode<f64>> {
        Ok(match self.fit.mode {
            FitModeName::Interpolate => FitMode::Interpolate,
            FitModeName::Posterior => FitMode::Posterior {
                noise_variance: self
                    .fit
                    .noise_variance
                    .unwrap_or(self.field.noise_sigma * self.field.noise_sigma),
            },
            FitModeName::Penalized => FitMode::Penalized {
                lambda: match &self.fit.lambda {
                    LambdaSetting::Value(v) => *v,
                    LambdaSetting::Named(_) => {
                        let tau = self.regression_kernel()?.base().sobolev_order().ok_or_else(|| {
                            Error::Config("auto lambda needs a finite-smoothness kernel".into())
                        })?;
                        let beta = self.target_smoothness()?.map_or(tau, |b| b.min(tau));
                        auto_lambda(h, tau, beta)
                    }
                },
            },
        })
    }
}

/// `λ` with `√λ = h^{τ−β/2}`.
pub fn auto_lambda(h: f64, tau: f64, beta: f64) -> f64 {
    h.powf(2.0 * tau - beta)
}
