//! Central finite differences for vector fields.

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Jacobian `J[(i, j)] = ∂_j f_i(x)` by central differences with step `h`.
pub fn jacobian<T: Real, F>(f: F, x: &[T], h: T) -> DMatrix<T>
where
    F: Fn(&[T]) -> Vec<T>,
{
    let d = x.len();
    let mut probe = x.to_vec();
    let two_h = h + h;
    let mut jac: Option<DMatrix<T>> = None;
    for j in 0..d {
        probe[j] = x[j] + h;
        let fp = f(&probe);
        probe[j] = x[j] - h;
        let fm = f(&probe);
        probe[j] = x[j];
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(fp.len(), d));
        for i in 0..fp.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / two_h;
        }
    }
    jac.unwrap_or_else(|| DMatrix::zeros(0, 0))
}

/// Richardson combination `(4 J(h) − J(2h)) / 3` of [`jacobian`], accurate to `O(h⁴)`.
pub fn jacobian_extrapolated<T: Real, F>(f: F, x: &[T], h: T) -> DMatrix<T>
where
    F: Fn(&[T]) -> Vec<T>,
{
    let fine = jacobian(&f, x, h);
    let coarse = jacobian(&f, x, h + h);
    (fine * T::of(4.0) - coarse) / T::of(3.0)
}

pub fn divergence<T: Real, F>(f: F, x: &[T], h: T) -> T
where
    F: Fn(&[T]) -> Vec<T>,
{
    jacobian(f, x, h).trace()
}

/// Curl of a field in two (one component) or three dimensions.
pub fn curl<T: Real, F>(f: F, x: &[T], h: T) -> Vec<T>
where
    F: Fn(&[T]) -> Vec<T>,
{
    curl_from_jacobian(&jacobian(f, x, h))
}

pub fn curl_from_jacobian<T: Real>(j: &DMatrix<T>) -> Vec<T> {
    match j.ncols() {
        2 => vec![j[(1, 0)] - j[(0, 1)]],
        3 => vec![
            j[(2, 1)] - j[(1, 2)],
            j[(0, 2)] - j[(2, 0)],
            j[(1, 0)] - j[(0, 1)],
        ],
        d => panic!("curl undefined in dimension {d}"),
    }
}

/// Euclidean magnitude of a curl vector.
pub fn curl_magnitude<T: Real>(c: &[T]) -> T {
    c.iter().fold(T::zero(), |a, v| a + *v * *v).sqrt()
}
