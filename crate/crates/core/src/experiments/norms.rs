//! Error norms and log-log rate fits.

use crate::error::{Error, Result};
use crate::sampler::EvaluationGrid;
use crate::scalar::Real;

fn check_p(p: f64) -> Result<()> {
    if p == 1.0 || p == 2.0 || p == f64::INFINITY {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("norm exponent {p} not in {{1, 2, inf}}")))
    }
}

/// `(Σ_j Σ_k |v_{j,k}|^p)^{1/p}` over stacked site values; `p = ∞` takes the maximum.
pub fn discrete_site_norm<T: Real>(values: &[T], p: f64) -> Result<T> {
    check_p(p)?;
    if values.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(weighted_lp(values.iter().map(|v| (T::one(), *v)), p))
}

fn weighted_lp<T: Real>(terms: impl Iterator<Item = (T, T)>, p: f64) -> T {
    if p == f64::INFINITY {
        return terms.fold(T::zero(), |m, (_, v)| m.max(v.abs()));
    }
    let total = terms.fold(T::zero(), |a, (w, v)| {
        let v = v.abs();
        a + w * if p == 1.0 { v } else { v * v }
    });
    if p == 1.0 {
        total
    } else {
        total.sqrt()
    }
}

fn check_grid<T: Real>(values: &[T], grid: &EvaluationGrid<T>) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if !values.len().is_multiple_of(grid.len()) || values.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    Ok(values.len() / grid.len())
}

/// First partial derivatives of a stacked grid field: entry
/// `[(i * comps + c) * d + axis]`. Central differences inside, one-sided at
/// the first and last layer along each axis.
pub fn grid_gradient<T: Real>(values: &[T], grid: &EvaluationGrid<T>) -> Result<Vec<T>> {
    let comps = check_grid(values, grid)?;
    let (shape, spacing) = grid
        .shape()
        .ok_or_else(|| Error::InvalidArgument("derivatives need a tensor grid".into()))?;
    let d = shape.len();
    let m = grid.len();
    let mut out = vec![T::zero(); m * comps * d];
    for i in 0..m {
        let mut stride = 1;
        let mut rest = i;
        for axis in 0..d {
            let n = shape[axis];
            let pos = rest % n;
            rest /= n;
            let h = spacing[axis];
            let (lo, hi, width) = if n < 2 {
                (i, i, T::one())
            } else if pos == 0 {
                (i, i + stride, h)
            } else if pos == n - 1 {
                (i - stride, i, h)
            } else {
                (i - stride, i + stride, h + h)
            };
            for c in 0..comps {
                out[(i * comps + c) * d + axis] = (values[hi * comps + c] - values[lo * comps + c]) / width;
            }
            stride *= n;
        }
    }
    Ok(out)
}

/// Quadrature-weighted `|·|_{W^1_q}` seminorm of a stacked grid field.
pub fn grid_seminorm<T: Real>(values: &[T], grid: &EvaluationGrid<T>, q: f64) -> Result<T> {
    check_p(q)?;
    let weights = grid_weights(grid)?;
    let grad = grid_gradient(values, grid)?;
    let per_point = grad.len() / grid.len();
    Ok(weighted_lp(
        grad.iter()
            .enumerate()
            .map(|(k, g)| (weights[k / per_point], *g)),
        q,
    ))
}

fn grid_weights<T: Real>(grid: &EvaluationGrid<T>) -> Result<&[T]> {
    grid.weights()
        .ok_or_else(|| Error::InvalidArgument("grid norms need quadrature weights".into()))
}

/// Quadrature approximation of `‖e‖_{W^s_q(𝒟)^d}` for a stacked grid field,
/// `s ∈ {0, 1}`.
pub fn grid_lq_norm<T: Real>(values: &[T], grid: &EvaluationGrid<T>, q: f64, s: u8) -> Result<T> {
    check_p(q)?;
    let comps = check_grid(values, grid)?;
    let weights = grid_weights(grid)?;
    let base = weighted_lp(
        values.iter().enumerate().map(|(k, v)| (weights[k / comps], *v)),
        q,
    );
    match s {
        0 => Ok(base),
        1 => {
            let semi = grid_seminorm(values, grid, q)?;
            Ok(if q == f64::INFINITY {
                base.max(semi)
            } else if q == 1.0 {
                base + semi
            } else {
                (base * base + semi * semi).sqrt()
            })
        }
        _ => Err(Error::InvalidArgument(format!("smoothness index {s} not in {{0, 1}}"))),
    }
}

/// Log-log slope of error against fill distance.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    /// Least-squares slope of `log e` against `log h`.
    pub slope: f64,
    /// Slopes between consecutive retained pairs (ordered by decreasing `h`).
    pub pairwise: Vec<f64>,
    /// Pairs dropped for non-positive error.
    pub dropped: usize,
}

/// Fits `e ≈ C h^p`, dropping pairs with `e ≤ 0`.
pub fn estimate_rate(pairs: &[(f64, f64)]) -> Result<RateEstimate> {
    if pairs.iter().any(|(h, _)| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("fill distances must be positive".into()));
    }
    let mut kept: Vec<(f64, f64)> = pairs.iter().copied().filter(|(_, e)| *e > 0.0).collect();
    let dropped = pairs.len() - kept.len();
    if kept.len() < 2 {
        return Err(Error::InvalidArgument(
            "rate estimate needs at least two positive errors".into(),
        ));
    }
    kept.sort_by(|a, b| b.0.total_cmp(&a.0));
    let logs: Vec<(f64, f64)> = kept.iter().map(|(h, e)| (h.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let pairwise = logs
        .windows(2)
        .map(|w| (w[0].1 - w[1].1) / (w[0].0 - w[1].0))
        .collect();
    Ok(RateEstimate {
        slope: sxy / sxx,
        pairwise,
        dropped,
    })
}

/// Exponent `τ − s − d(1/2 − 1/q)₊`.
pub fn predicted_rate(order: f64, s: u8, dim: usize, q: f64) -> f64 {
    let loss = (0.5 - 1.0 / q).max(0.0);
    order - s as f64 - dim as f64 * loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, PointSet};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn site_norm_examples() {
        assert_eq!(discrete_site_norm(&[3.0, 4.0], 2.0).unwrap(), 5.0);
        assert_eq!(discrete_site_norm(&[1.0, 0.0, 0.0, 1.0], f64::INFINITY).unwrap(), 1.0);
        assert_eq!(discrete_site_norm(&[1.0, -2.0], 1.0).unwrap(), 3.0);
        assert!(discrete_site_norm::<f64>(&[], 2.0).is_err());
        assert!(discrete_site_norm(&[1.0], 3.0).is_err());
    }

    #[test]
    fn site_norm_matches_double_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (13, 3);
        let v: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut si = 0.0f64;
        for j in 0..n {
            for k in 0..d {
                let x: f64 = v[j * d + k];
                s1 += x.abs();
                s2 += x.powi(2);
                si = si.max(x.abs());
            }
        }
        assert_relative_eq!(discrete_site_norm(&v, 1.0).unwrap(), s1, max_relative = 1e-14);
        assert_relative_eq!(discrete_site_norm(&v, 2.0).unwrap(), s2.sqrt(), max_relative = 1e-14);
        assert_eq!(discrete_site_norm(&v, f64::INFINITY).unwrap(), si);
    }

    fn unit_grid(n: usize) -> EvaluationGrid<f64> {
        EvaluationGrid::midpoint(&Domain::unit(2).unwrap(), n).unwrap()
    }

    #[test]
    fn constant_field_norm() {
        let g = unit_grid(8);
        let v = vec![0.3; 2 * g.len()];
        assert_relative_eq!(grid_lq_norm(&v, &g, 2.0, 0).unwrap(), 2f64.sqrt() * 0.3, max_relative = 1e-12);
        assert_relative_eq!(grid_seminorm(&v, &g, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_field_seminorm_is_exact() {
        let g = unit_grid(9);
        let v: Vec<f64> = g.points().iter().flat_map(|p| [2.0 * p[0] - p[1], 0.5 * p[1]]).collect();
        let grad = grid_gradient(&v, &g).unwrap();
        for chunk in grad.chunks_exact(4) {
            assert_relative_eq!(chunk[0], 2.0, epsilon = 1e-12);
            assert_relative_eq!(chunk[1], -1.0, epsilon = 1e-12);
            assert_relative_eq!(chunk[2], 0.0, epsilon = 1e-12);
            assert_relative_eq!(chunk[3], 0.5, epsilon = 1e-12);
        }
        assert_relative_eq!(grid_seminorm(&v, &g, 2.0).unwrap(), 5.25f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(grid_seminorm(&v, &g, f64::INFINITY).unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn sup_norm_is_max_component() {
        let g = unit_grid(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..2 * g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let brute = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert_eq!(grid_lq_norm(&v, &g, f64::INFINITY, 0).unwrap(), brute);
    }

    #[test]
    fn unweighted_grid_is_rejected() {
        let g = EvaluationGrid::from_points(PointSet::new(vec![vec![0.0, 0.0]]).unwrap());
        assert!(grid_lq_norm(&[1.0, 1.0], &g, 2.0, 0).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let hs = [0.4, 0.2, 0.1];
        let r = estimate_rate(&hs.map(|h| (h, h * h))).unwrap();
        assert_relative_eq!(r.slope, 2.0, epsilon = 1e-12);
        let r = estimate_rate(&hs.map(|h: f64| (h, 3.0 * h.powf(1.5)))).unwrap();
        assert_relative_eq!(r.slope, 1.5, epsilon = 1e-12);
        assert_eq!(r.pairwise.len(), 2);
    }

    #[test]
    fn nonpositive_errors_are_dropped() {
        let r = estimate_rate(&[(0.4, 0.16), (0.2, 0.04), (0.1, 0.0)]).unwrap();
        assert_eq!(r.dropped, 1);
        assert_relative_eq!(r.slope, 2.0, epsilon = 1e-12);
        assert!(estimate_rate(&[(0.4, 0.16), (0.2, -1.0)]).is_err());
    }

    #[test]
    fn predicted_exponents() {
        assert_eq!(predicted_rate(2.5, 0, 2, 2.0), 2.5);
        assert_eq!(predicted_rate(2.5, 0, 2, f64::INFINITY), 1.5);
        assert_eq!(predicted_rate(2.5, 1, 2, 1.0), 1.5);
    }
}
