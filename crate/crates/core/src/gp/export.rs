//! Plain-text model dump.
//!
//! ```text
//! divgp-model 1
//! dim <d>
//! family gaussian | matern <nu> | wendland <k>
//! mode divergence_free | curl_free | diagonal
//! length_scale <kappa>
//! variance <alpha2>
//! fit interpolate | posterior <sigma2> | penalized <lambda>
//! jitter <value>
//! prior_mean zero | custom
//! sites <N>
//! <x_1> ... <x_d>          (N lines)
//! coefficients <dN>
//! <a_k>                    (dN lines)
//! ```
//!
//! Floats are written in shortest round-trip form, so a reloaded model
//! reproduces `predict_mean` bit for bit and refactors the identical Gram
//! matrix for `predict_cov`.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use super::model::{FitMode, GpModel, MeanFunction, MeanStructure};
use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::kernels::{KernelFamily, KernelMode, MaternNu, MatrixKernel, ScalarKernelSpec};
use crate::scalar::Real;

const MAGIC: &str = "divgp-model 1";

impl<T: Real> GpModel<T> {
    pub fn export<W: Write>(&self, mut out: W) -> Result<()> {
        let base = self.kernel().base();
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "dim {}", self.dim())?;
        match base.family() {
            KernelFamily::Gaussian => writeln!(out, "family gaussian")?,
            KernelFamily::Matern(nu) => writeln!(out, "family matern {}", nu.value())?,
            KernelFamily::Wendland(k) => writeln!(out, "family wendland {k}")?,
        }
        writeln!(out, "mode {}", self.kernel().mode().name())?;
        writeln!(out, "length_scale {}", base.length_scale())?;
        writeln!(out, "variance {}", base.variance())?;
        match self.mode() {
            FitMode::Interpolate => writeln!(out, "fit interpolate")?,
            FitMode::Posterior { noise_variance } => writeln!(out, "fit posterior {noise_variance}")?,
            FitMode::Penalized { lambda } => writeln!(out, "fit penalized {lambda}")?,
        }
        writeln!(out, "jitter {}", self.jitter_used())?;
        let mean = match self.prior_mean().structure() {
            MeanStructure::Zero => "zero",
            _ => "custom",
        };
        writeln!(out, "prior_mean {mean}")?;
        writeln!(out, "sites {}", self.sites().len())?;
        for p in self.sites().iter() {
            let line: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        writeln!(out, "coefficients {}", self.coefficients().len())?;
        for a in self.coefficients().iter() {
            writeln!(out, "{a}")?;
        }
        Ok(())
    }

    /// Reloads an exported model. A model fitted with a non-zero prior mean
    /// needs that mean supplied again.
    pub fn import<R: BufRead>(input: R, prior_mean: Option<MeanFunction<T>>) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = move || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of input".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != MAGIC {
            return Err(Error::Format("missing header".into()));
        }
        let dim: usize = parse(&field(&next()?, "dim")?)?;
        let family_line = field(&next()?, "family")?;
        let mut parts = family_line.split_whitespace();
        let family = match (parts.next(), parts.next()) {
            (Some("gaussian"), None) => KernelFamily::Gaussian,
            (Some("matern"), Some(nu)) => KernelFamily::Matern(
                MaternNu::from_value(parse(nu)?)
                    .ok_or_else(|| Error::Format(format!("unsupported nu {nu}")))?,
            ),
            (Some("wendland"), Some(k)) => KernelFamily::Wendland(parse(k)?),
            _ => return Err(Error::Format(format!("bad family line: {family_line}"))),
        };
        let mode = match field(&next()?, "mode")?.as_str() {
            "divergence_free" => KernelMode::DivergenceFree,
            "curl_free" => KernelMode::CurlFree,
            "diagonal" => KernelMode::Diagonal,
            other => return Err(Error::Format(format!("unknown mode {other}"))),
        };
        let length_scale: T = parse(&field(&next()?, "length_scale")?)?;
        let variance: T = parse(&field(&next()?, "variance")?)?;
        let base = ScalarKernelSpec::new(family, length_scale, variance, dim)?;
        let kernel = MatrixKernel::new(base, mode)?;

        let fit_line = field(&next()?, "fit")?;
        let mut parts = fit_line.split_whitespace();
        let fit_mode = match (parts.next(), parts.next()) {
            (Some("interpolate"), None) => FitMode::Interpolate,
            (Some("posterior"), Some(v)) => FitMode::Posterior {
                noise_variance: parse(v)?,
            },
            (Some("penalized"), Some(v)) => FitMode::Penalized { lambda: parse(v)? },
            _ => return Err(Error::Format(format!("bad fit line: {fit_line}"))),
        };
        let jitter: T = parse(&field(&next()?, "jitter")?)?;
        let prior_mean = match (field(&next()?, "prior_mean")?.as_str(), prior_mean) {
            ("zero", None) => MeanFunction::zero(dim),
            ("zero", Some(m)) if m.structure() == MeanStructure::Zero => m,
            ("custom", Some(m)) if m.structure() != MeanStructure::Zero => m,
            ("custom", _) => {
                return Err(Error::Format(
                    "model was fitted with a custom prior mean; supply it on import".into(),
                ))
            }
            (other, _) => return Err(Error::Format(format!("prior mean mismatch ({other})"))),
        };
        if prior_mean.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: prior_mean.dim(),
            });
        }

        let n: usize = parse(&field(&next()?, "sites")?)?;
        let mut coords = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let line = next()?;
            let before = coords.len();
            for tok in line.split_whitespace() {
                coords.push(parse::<T>(tok)?);
            }
            if coords.len() - before != dim {
                return Err(Error::Format(format!("site line has wrong arity: {line}")));
            }
        }
        let sites = if n == 0 {
            PointSet::empty(dim)
        } else {
            PointSet::from_flat(dim, coords)?
        };
        let m: usize = parse(&field(&next()?, "coefficients")?)?;
        if m != n * dim {
            return Err(Error::Format(format!(
                "expected {} coefficients, header says {m}",
                n * dim
            )));
        }
        let coefficients = (0..m)
            .map(|_| next().and_then(|l| parse::<T>(l.trim())))
            .collect::<Result<Vec<T>>>()?;
        GpModel::from_parts(
            kernel,
            prior_mean,
            sites,
            fit_mode,
            DVector::from_vec(coefficients),
            jitter,
        )
    }
}

fn field(line: &str, key: &str) -> Result<String> {
    let line = line.trim();
    match line.split_once(' ') {
        Some((k, rest)) if k == key => Ok(rest.trim().to_string()),
        _ if line == key => Ok(String::new()),
        _ => Err(Error::Format(format!("expected `{key}`, found `{line}`"))),
    }
}

fn parse<V: std::str::FromStr>(tok: &str) -> Result<V> {
    tok.parse()
        .map_err(|_| Error::Format(format!("cannot parse `{tok}`")))
}
