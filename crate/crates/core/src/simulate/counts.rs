use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::estimators::center_columns;
use crate::linalg::{truncated_svd_with, SvdOptions};
use crate::model::{GroundTruth, TableSet};
use crate::scalar::Real;

/// Splits the rows of `counts` into `splits` random blocks of near-equal
/// size, adds `Poisson(λ_i)` to every entry of block `i`, then transforms
/// `X_i = 2√(Y_i/d)` and optionally centers each column.
///
/// Rows keep their original relative order inside a block.
pub fn count_pipeline<T: Real, R: Rng + ?Sized>(
    counts: &DMatrix<i64>,
    ambient_rates: &[f64],
    splits: usize,
    center: bool,
    rng: &mut R,
) -> Result<TableSet<T>> {
    let (n, d) = counts.shape();
    if splits == 0 || splits > n {
        return Err(Error::InvalidParameter(format!("cannot split {n} rows into {splits} blocks")));
    }
    if ambient_rates.len() != splits {
        return Err(Error::shape(format!("{splits} splits but {} ambient rates", ambient_rates.len())));
    }
    if let Some(bad) = ambient_rates.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::InvalidParameter(format!("ambient rate {bad} must be finite and nonnegative")));
    }
    if let Some((k, &value)) = counts.iter().enumerate().find(|(_, &v)| v < 0) {
        return Err(Error::NegativeCounts { row: k % n, col: k / n, value });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let (base, extra) = (n / splits, n % splits);
    let mut start = 0;
    let mut tables = Vec::with_capacity(splits);
    for (i, &lambda) in ambient_rates.iter().enumerate() {
        let size = base + usize::from(i < extra);
        let mut rows = order[start..start + size].to_vec();
        rows.sort_unstable();
        start += size;
        let poisson = if lambda > 0.0 {
            Some(Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        } else {
            None
        };
        let mut y = DMatrix::<f64>::zeros(size, d);
        // Column-major fill keeps the draw order fixed.
        for col in 0..d {
            for (a, &row) in rows.iter().enumerate() {
                let noise = poisson.as_ref().map_or(0.0, |p| p.sample(rng));
                y[(a, col)] = counts[(row, col)] as f64 + noise;
            }
        }
        let x = y.map(|v| T::lit(2.0 * (v / d as f64).sqrt()));
        tables.push(if center { center_columns(&x) } else { x });
    }
    TableSet::new(tables, d)
}

/// Synthetic counts with a planted nonnegative low-rank rate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCounts {
    pub counts: DMatrix<i64>,
    /// `Λ = base (1 + strength · A Bᵀ / r)` with `A, B` uniform on `[0, 1]`.
    pub rates: DMatrix<f64>,
}

/// Draws `Y_kj ~ Poisson(Λ_kj)` for an `n × d` rate matrix of rank at most
/// `r + 1`.
pub fn planted_counts<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    r: usize,
    base_rate: f64,
    strength: f64,
    rng: &mut R,
) -> Result<PlantedCounts> {
    if !(base_rate > 0.0 && base_rate.is_finite()) || !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "base rate {base_rate} must be positive and strength {strength} nonnegative"
        )));
    }
    if r == 0 {
        return Err(Error::InvalidParameter("planted rank must be at least 1".into()));
    }
    let a = DMatrix::<f64>::from_fn(n, r, |_, _| rng.random::<f64>());
    let b = DMatrix::<f64>::from_fn(d, r, |_, _| rng.random::<f64>());
    let mut rates = &a * b.transpose();
    rates.apply(|x| *x = base_rate * (1.0 + strength * *x / r as f64));
    let mut counts = DMatrix::<i64>::zeros(n, d);
    for col in 0..d {
        for row in 0..n {
            let p = Poisson::new(rates[(row, col)]).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            counts[(row, col)] = p.sample(rng) as i64;
        }
    }
    Ok(PlantedCounts { counts, rates })
}

/// Reference subspace: the top `r` right singular vectors of a held-out table.
pub fn held_out_truth<T: Real>(table: &DMatrix<T>, r: usize, opts: &SvdOptions) -> Result<GroundTruth<T>> {
    let svd = truncated_svd_with(table, r, opts)?;
    GroundTruth::new(svd.right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_single_split_is_the_plain_transform() {
        let counts = DMatrix::from_row_slice(2, 3, &[4i64, 0, 9, 1, 16, 25]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tables: TableSet<f64> = count_pipeline(&counts, &[0.0], 1, false, &mut rng).unwrap();
        let x = tables.table(0);
        for row in 0..2 {
            for col in 0..3 {
                let expected = 2.0 * (counts[(row, col)] as f64 / 3.0).sqrt();
                assert_eq!(x[(row, col)], expected);
            }
        }
    }

    #[test]
    fn transform_arithmetic() {
        let counts = DMatrix::from_element(1, 1600, 4i64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tables: TableSet<f64> = count_pipeline(&counts, &[0.0], 1, false, &mut rng).unwrap();
        assert!((tables.table(0)[(0, 7)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn negative_counts_rejected() {
        let counts = DMatrix::from_row_slice(2, 2, &[1i64, 2, 3, -4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            count_pipeline::<f64, _>(&counts, &[1.0], 1, true, &mut rng),
            Err(Error::NegativeCounts { row: 1, col: 1, value: -4 })
        );
    }

    #[test]
    fn splits_partition_rows() {
        let counts = DMatrix::from_fn(11, 4, |r, c| (r * 4 + c) as i64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tables: TableSet<f64> = count_pipeline(&counts, &[0.0, 0.0, 0.0], 3, false, &mut rng).unwrap();
        let sizes: Vec<usize> = tables.tables().iter().map(|t| t.nrows()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        // Column 0 holds 4r, which maps to 2√r.
        let mut seen: Vec<usize> = tables
            .tables()
            .iter()
            .flat_map(|t| t.column(0).iter().map(|x| (x / 2.0).powi(2).round() as usize).collect::<Vec<_>>())
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn centering_is_on_request() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let planted = planted_counts(60, 20, 2, 5.0, 1.0, &mut rng).unwrap();
        let tables: TableSet<f64> = count_pipeline(&planted.counts, &[1.0, 2.0], 2, true, &mut rng).unwrap();
        for t in tables.tables() {
            for col in t.column_iter() {
                assert!(col.sum().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ambient_noise_is_stabilized_and_drowns_the_signal() {
        // After 2√(Y/d) the per-column variance tends to 1/d as λ grows, while
        // the planted structure's share of the total energy shrinks.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, d) = (400, 50);
        let planted = planted_counts(n, d, 3, 20.0, 2.0, &mut rng).unwrap();
        let mut previous = (f64::INFINITY, f64::INFINITY);
        for lambda in [10.0, 50.0, 1000.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let tables: TableSet<f64> = count_pipeline(&planted.counts, &[lambda], 1, true, &mut rng).unwrap();
            let x = tables.table(0);
            let var = x.norm_squared() / ((n - 1) * d) as f64;
            let excess = (d as f64 * var - 1.0).abs();
            let sv = x.singular_values();
            let share = sv[0] * sv[0] / x.norm_squared();
            assert!(excess < previous.0, "lambda {lambda}: excess {excess}");
            assert!(share < previous.1, "lambda {lambda}: share {share}");
            previous = (excess, share);
        }
        assert!(previous.0 < 0.01);
    }

    #[test]
    fn held_out_truth_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let planted = planted_counts(100, 30, 2, 10.0, 3.0, &mut rng).unwrap();
        let x = planted.counts.map(|v| v as f64);
        let truth = held_out_truth(&center_columns(&x), 2, &SvdOptions::default()).unwrap();
        assert_eq!(truth.rank(), 2);
        assert_eq!(truth.d(), 30);
    }
}
