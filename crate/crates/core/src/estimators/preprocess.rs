use nalgebra::DMatrix;

use crate::scalar::Real;
use crate::theory::roots::bisect;

/// Subtracts each column's mean.
pub fn center_columns<T: Real>(table: &DMatrix<T>) -> DMatrix<T> {
    let n = T::from_usize_lossy(table.nrows().max(1));
    let mut out = table.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Median of the Marchenko–Pastur law with ratio `y ∈ (0, 1]` and unit
/// scale, supported on `[(1 − √y)², (1 + √y)²]`.
pub fn marchenko_pastur_median(y: f64) -> f64 {
    assert!(y > 0.0 && y <= 1.0, "ratio must lie in (0, 1]");
    let lo = (1.0 - y.sqrt()).powi(2);
    let hi = (1.0 + y.sqrt()).powi(2);
    // With x = lo + (hi − lo)(1 − cos t)/2 the density times dx/dt is smooth
    // on [0, π].
    let integrand = |t: f64| {
        let x = lo + (hi - lo) * (1.0 - t.cos()) / 2.0;
        let half = (hi - lo) / 2.0;
        half * half * t.sin().powi(2) / (2.0 * std::f64::consts::PI * y * x)
    };
    let cdf = |s: f64| midpoint(integrand, 0.0, s, 4000);
    let t = bisect(|s: f64| cdf(s) - 0.5, 0.0, std::f64::consts::PI, true);
    lo + (hi - lo) * (1.0 - t.cos()) / 2.0
}

/// Composite midpoint rule; never evaluates `f` at the endpoints, where the
/// substituted density is 0/0 for `y = 1`.
fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    (0..intervals).map(|i| f(a + h * (i as f64 + 0.5))).sum::<f64>() * h
}

/// Experimental: rescales a table so that its bulk of squared singular values
/// has the median predicted for unit noise (entry variance `1/d`).
///
/// Returns the rescaled table and the estimated noise standard deviation
/// relative to the model's. Needs a full dense SVD.
pub fn normalize_noise_scale<T: Real>(table: &DMatrix<T>) -> (DMatrix<T>, T) {
    let (n, d) = (table.nrows(), table.ncols());
    let mut sq: Vec<f64> = table
        .clone()
        .singular_values()
        .iter()
        .map(|s| s.to_f64_lossy().powi(2))
        .collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let observed = if sq.len() % 2 == 1 {
        sq[sq.len() / 2]
    } else {
        (sq[sq.len() / 2 - 1] + sq[sq.len() / 2]) / 2.0
    };
    // Nonzero squared singular values of unit noise: MP(n/d) when n ≤ d, and
    // (n/d)·MP(d/n) otherwise.
    let expected = if n <= d {
        marchenko_pastur_median(n as f64 / d as f64)
    } else {
        n as f64 / d as f64 * marchenko_pastur_median(d as f64 / n as f64)
    };
    let scale = T::lit((observed / expected).sqrt());
    (table / scale, scale)
}
