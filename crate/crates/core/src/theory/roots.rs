use crate::scalar::Real;

pub(crate) const ROOT_TOL: f64 = 1e-12;
pub(crate) const MAX_BISECTIONS: usize = 200;

/// Bisection for a monotone `f` with a sign change on `[lo, hi]`.
///
/// `increasing` gives the direction of `f`. Stops once `|f| <= tol`, the
/// iteration cap is hit, or the bracket collapses to adjacent floats.
pub(crate) fn bisect<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, increasing: bool) -> T {
    bisect_with(f, lo, hi, increasing, ROOT_TOL)
}

pub(crate) fn bisect_with<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, increasing: bool, tol: f64) -> T {
    let tol = T::attainable(tol);
    let two = T::lit(2.0);
    let mut mid = (lo + hi) / two;
    for _ in 0..MAX_BISECTIONS {
        mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let value = f(mid);
        if value.abs() <= tol {
            break;
        }
        if (value > T::zero()) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mid
}
