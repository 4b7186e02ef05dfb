//! Point sets on axis-aligned boxes and the fill distance / separation
//! radius / mesh ratio that parameterize kernel error bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Points closer than this are considered duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Axis-aligned box `[lower, upper]` in two or three dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> Domain<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if !(2..=3).contains(&lower.len()) {
            return Err(Error::InvalidDomain(format!(
                "dimension {} not in {{2, 3}}",
                lower.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(*l < *u)) {
            return Err(Error::InvalidDomain("lower bound not below upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![T::zero(); dim], vec![T::one(); dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn volume(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(T::one(), |acc, (l, u)| acc * (*u - *l))
    }

    pub fn contains(&self, p: &[T]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= *l && *x <= *u)
    }

    /// Shrinks the box by `margin` on every side.
    pub fn shrink(&self, margin: T) -> Result<Self> {
        let two = T::of(2.0);
        let lower = self.lower.iter().map(|l| *l + margin).collect();
        let upper = self.upper.iter().map(|u| *u - margin).collect();
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| two * margin >= *u - *l)
        {
            return Err(Error::InvalidDomain(format!(
                "margin {margin} leaves an empty box"
            )));
        }
        Self::new(lower, upper)
    }
}

/// A set of pairwise distinct points stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Real> PointSet<T> {
    /// Builds a point set, rejecting duplicates and ragged input.
    pub fn new(points: Vec<Vec<T>>) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyPointSet)?.len();
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    /// Builds a point set from row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len(),
            });
        }
        let set = Self { dim, coords };
        set.check_distinct()?;
        Ok(set)
    }

    /// Builds a point set and checks every point lies in `dom`.
    pub fn in_domain(points: Vec<Vec<T>>, dom: &Domain<T>) -> Result<Self> {
        let set = Self::new(points)?;
        set.check_domain(dom)?;
        Ok(set)
    }

    /// The empty set of the given dimension (used for prior-only models).
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn check_domain(&self, dom: &Domain<T>) -> Result<()> {
        if dom.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: dom.dim(),
                found: self.dim,
            });
        }
        match self.iter().position(|p| !dom.contains(p)) {
            Some(index) => Err(Error::OutsideDomain { index }),
            None => Ok(()),
        }
    }

    fn check_distinct(&self) -> Result<()> {
        let tol = T::of(DUPLICATE_TOLERANCE);
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d = distance(self.point(i), self.point(j));
                if d < tol {
                    return Err(Error::DuplicatePoint {
                        first: i,
                        second: j,
                        distance: d.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Union with another set; fails if the result has duplicates.
    pub fn union(&self, other: &PointSet<T>) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Self::from_flat(self.dim, coords)
    }
}

#[inline]
pub(crate) fn distance_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
}

#[inline]
pub(crate) fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    distance_sq(a, b).sqrt()
}

/// Fill distance, separation radius and mesh ratio of a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryStats<T> {
    pub fill_distance: T,
    pub separation_radius: T,
    pub mesh_ratio: T,
    /// Upper bound on how far the probe-grid fill distance may fall below the true value.
    pub fill_slack: T,
}

fn probe_point<T: Real>(dom: &Domain<T>, resolution: usize, mut index: usize, out: &mut [T]) {
    let denom = T::of((resolution - 1) as f64);
    for (k, o) in out.iter_mut().enumerate() {
        let i = index % resolution;
        index /= resolution;
        let (l, u) = (dom.lower[k], dom.upper[k]);
        *o = l + (u - l) * T::of(i as f64) / denom;
    }
}

/// Half-diagonal of one probe-grid cell: the approximation error bound of
/// [`fill_distance`].
pub fn probe_slack<T: Real>(dom: &Domain<T>, resolution: usize) -> T {
    let denom = T::of((resolution.max(2) - 1) as f64);
    dom.lower
        .iter()
        .zip(&dom.upper)
        .map(|(l, u)| {
            let step = (*u - *l) / denom;
            step * step
        })
        .fold(T::zero(), |a, b| a + b)
        .sqrt()
        * T::of(0.5)
}

/// Largest distance from a probe-grid point of `dom` to its nearest site.
///
/// The probe grid has `resolution` points per axis including the boundary.
/// The result under-estimates the supremum by at most [`probe_slack`].
pub fn fill_distance<T: Real>(x: &PointSet<T>, dom: &Domain<T>, resolution: usize) -> Result<T> {
    if x.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument(
            "probe resolution must be at least 2 per axis".into(),
        ));
    }
    if x.dim() != dom.dim() {
        return Err(Error::DimensionMismatch {
            expected: dom.dim(),
            found: x.dim(),
        });
    }
    let d = dom.dim();
    let total = resolution.pow(d as u32);
    let best = (0..total)
        .into_par_iter()
        .map_init(
            || vec![T::zero(); d],
            |probe, idx| {
                probe_point(dom, resolution, idx, probe);
                x.iter()
                    .map(|p| distance_sq(p, probe))
                    .fold(T::max_value().unwrap(), |a, b| a.min(b))
            },
        )
        .reduce(T::zero, |a, b| a.max(b));
    Ok(best.sqrt())
}

/// Half the minimum pairwise distance (exhaustive).
pub fn separation_radius<T: Real>(x: &PointSet<T>) -> Result<T> {
    if x.len() < 2 {
        return Err(Error::SeparationUndefined);
    }
    let mut best = T::max_value().unwrap();
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            best = best.min(distance_sq(x.point(i), x.point(j)));
        }
    }
    Ok(best.sqrt() * T::of(0.5))
}

pub fn mesh_ratio<T: Real>(
    x: &PointSet<T>,
    dom: &Domain<T>,
    resolution: usize,
) -> Result<GeometryStats<T>> {
    let separation_radius = separation_radius(x)?;
    let fill_distance = fill_distance(x, dom, resolution)?;
    Ok(GeometryStats {
        fill_distance,
        separation_radius,
        mesh_ratio: fill_distance / separation_radius,
        fill_slack: probe_slack(dom, resolution),
    })
}

/// Point-set families produced by [`generate_points`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    /// Tensor-product lattice including the boundary; count is per axis.
    Grid,
    /// Halton sequence with bases (2, 3) or (2, 3, 5), starting at index 1.
    Halton,
    /// I.i.d. uniform points drawn from a seeded stream.
    UniformRandom,
}

const HALTON_BASES: [u64; 3] = [2, 3, 5];

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Generates a deterministic point set in `dom`.
///
/// For [`PointKind::Grid`] `count` is the number of points per axis; for
/// the other kinds it is the total number of points.
pub fn generate_points<T: Real>(
    kind: PointKind,
    count: usize,
    dom: &Domain<T>,
    seed: u64,
) -> Result<PointSet<T>> {
    if count == 0 {
        return Err(Error::EmptyPointSet);
    }
    let d = dom.dim();
    let scale = |k: usize, unit: f64| dom.lower[k] + (dom.upper[k] - dom.lower[k]) * T::of(unit);
    let coords: Vec<T> = match kind {
        PointKind::Grid => {
            let total = count.pow(d as u32);
            let mut coords = Vec::with_capacity(total * d);
            for mut idx in 0..total {
                for k in 0..d {
                    let i = idx % count;
                    idx /= count;
                    let unit = if count == 1 {
                        0.5
                    } else {
                        i as f64 / (count - 1) as f64
                    };
                    coords.push(scale(k, unit));
                }
            }
            coords
        }
        PointKind::Halton => (1..=count as u64)
            .flat_map(|i| (0..d).map(move |k| (i, k)))
            .map(|(i, k)| scale(k, radical_inverse(i, HALTON_BASES[k])))
            .collect(),
        PointKind::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tol = T::of(DUPLICATE_TOLERANCE);
            let mut coords: Vec<T> = Vec::with_capacity(count * d);
            let mut candidate = vec![T::zero(); d];
            while coords.len() < count * d {
                for (k, c) in candidate.iter_mut().enumerate() {
                    *c = scale(k, rng.random::<f64>());
                }
                let duplicate = coords
                    .chunks_exact(d)
                    .any(|p| distance(p, &candidate) < tol);
                if !duplicate {
                    coords.extend_from_slice(&candidate);
                }
            }
            coords
        }
    };
    PointSet::from_flat(d, coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit2() -> Domain<f64> {
        Domain::unit(2).unwrap()
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Domain::new(vec![0.0], vec![1.0]).is_err());
        assert!(Domain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert_relative_eq!(Domain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap().volume(), 4.0);
    }

    #[test]
    fn point_set_rejects_duplicates_and_outside_points() {
        let err = PointSet::new(vec![vec![0.0, 0.0], vec![0.0, 1e-13]]).unwrap_err();
        assert!(matches!(err, Error::DuplicatePoint { .. }));
        let err = PointSet::in_domain(vec![vec![0.5, 1.5]], &unit2()).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { index: 0 }));
        assert!(matches!(
            PointSet::<f64>::new(vec![]).unwrap_err(),
            Error::EmptyPointSet
        ));
    }

    #[test]
    fn fill_distance_single_center() {
        let x = PointSet::new(vec![vec![0.5, 0.5]]).unwrap();
        let h = fill_distance(&x, &unit2(), 201).unwrap();
        assert_relative_eq!(h, 2f64.sqrt() / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn fill_distance_grid() {
        let x = generate_points(PointKind::Grid, 3, &unit2(), 0).unwrap();
        let h = fill_distance(&x, &unit2(), 201).unwrap();
        let slack = probe_slack(&unit2(), 201);
        assert!((h - 2f64.sqrt() / 4.0).abs() <= slack);
    }

    #[test]
    fn fill_distance_empty_errors() {
        let x = PointSet::<f64>::empty(2);
        assert!(matches!(
            fill_distance(&x, &unit2(), 10).unwrap_err(),
            Error::EmptyPointSet
        ));
    }

    #[test]
    fn separation_examples() {
        let x = PointSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(separation_radius(&x).unwrap(), 0.5);
        let g = generate_points(PointKind::Grid, 3, &unit2(), 0).unwrap();
        assert_relative_eq!(separation_radius(&g).unwrap(), 0.25);
        let one = PointSet::new(vec![vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            separation_radius(&one).unwrap_err(),
            Error::SeparationUndefined
        ));
    }

    #[test]
    fn mesh_ratio_examples() {
        let g = generate_points(PointKind::Grid, 3, &unit2(), 0).unwrap();
        let stats = mesh_ratio(&g, &unit2(), 201).unwrap();
        assert_relative_eq!(stats.mesh_ratio, 2f64.sqrt(), epsilon = 1e-12);

        // the off-diagonal corners (1,0) and (0,1) are at distance 1 from both sites
        let two = PointSet::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let stats = mesh_ratio(&two, &unit2(), 201).unwrap();
        assert_relative_eq!(stats.fill_distance, 1.0, epsilon = 1e-14);
        assert_relative_eq!(stats.separation_radius, 2f64.sqrt() / 2.0, epsilon = 1e-14);
        assert_relative_eq!(stats.mesh_ratio, 2f64.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn grid_includes_corners() {
        let g = generate_points(PointKind::Grid, 3, &unit2(), 0).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.iter().any(|p| p == [0.0, 0.0]));
        assert!(g.iter().any(|p| p == [1.0, 1.0]));
    }

    #[test]
    fn halton_first_points() {
        let h = generate_points(PointKind::Halton, 5, &unit2(), 0).unwrap();
        let expected = [
            [0.5, 1.0 / 3.0],
            [0.25, 2.0 / 3.0],
            [0.75, 1.0 / 9.0],
            [0.125, 4.0 / 9.0],
            [0.625, 7.0 / 9.0],
        ];
        for (p, e) in h.iter().zip(expected) {
            assert_relative_eq!(p[0], e[0], epsilon = 1e-15);
            assert_relative_eq!(p[1], e[1], epsilon = 1e-15);
        }
        let h3 = generate_points(PointKind::Halton, 1, &Domain::<f64>::unit(3).unwrap(), 0).unwrap();
        assert_relative_eq!(h3.point(0)[2], 0.2);
    }

    #[test]
    fn uniform_random_is_deterministic() {
        let a = generate_points(PointKind::UniformRandom, 10, &unit2(), 42).unwrap();
        let b = generate_points(PointKind::UniformRandom, 10, &unit2(), 42).unwrap();
        assert_eq!(a, b);
        a.check_domain(&unit2()).unwrap();
        let c = generate_points(PointKind::UniformRandom, 10, &unit2(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn works_in_single_precision() {
        let dom = Domain::<f32>::unit(2).unwrap();
        let g = generate_points(PointKind::Grid, 3, &dom, 0).unwrap();
        let stats = mesh_ratio(&g, &dom, 101).unwrap();
        assert!((stats.mesh_ratio - 2f32.sqrt()).abs() < 1e-5);
    }
}
