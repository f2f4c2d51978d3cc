//! Dense linear algebra: truncated SVD (dense or Lanczos), symmetric
//! eigendecomposition and Haar-distributed orthonormal frames.

mod lanczos;
mod operator;

pub use operator::{LinearOperator, RowMajorStack, WeightedStack};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Leading singular triplets, values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplet<T: Real> {
    pub values: DVector<T>,
    /// `n × k`
    pub left: DMatrix<T>,
    /// `d × k`
    pub right: DMatrix<T>,
}

impl<T: Real> SvdTriplet<T> {
    /// Applies the sign convention of [`crate::model::canonicalize_signs`] to
    /// the right vectors and mirrors each flip on the left.
    pub(crate) fn new(values: DVector<T>, mut left: DMatrix<T>, mut right: DMatrix<T>) -> Self {
        for j in 0..right.ncols() {
            let col = right.column(j);
            let mut best = T::zero();
            let mut negative = false;
            for &x in col.iter() {
                if x.abs() > best {
                    best = x.abs();
                    negative = x < T::zero();
                }
            }
            if negative {
                right.column_mut(j).neg_mut();
                left.column_mut(j).neg_mut();
            }
        }
        Self {
            values,
            left,
            right,
        }
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }
}

/// Solver controls for [`truncated_svd_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdOptions {
    /// Use a dense decomposition when `min(n, d)` is at most this.
    pub dense_threshold: usize,
    /// Relative residual `||A^T u − σ v|| / σ_1` accepted by the iterative path.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size; `None` picks one from `k`.
    pub krylov_dim: Option<usize>,
    /// Seed of the start vector.
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            dense_threshold: 512,
            tol: 1e-10,
            max_restarts: 2000,
            krylov_dim: None,
            seed: 0x5356_4453,
        }
    }
}

impl SvdOptions {
    pub(crate) fn krylov_dim(&self, k: usize) -> usize {
        self.krylov_dim.unwrap_or(24).max(2 * k + 8)
    }

    /// Always take the iterative path.
    pub fn iterative() -> Self {
        Self {
            dense_threshold: 0,
            ..Self::default()
        }
    }
}

/// The `k` leading singular triplets of `matrix`.
pub fn truncated_svd<T: Real>(matrix: &DMatrix<T>, k: usize) -> Result<SvdTriplet<T>> {
    truncated_svd_with(matrix, k, &SvdOptions::default())
}

pub fn truncated_svd_with<T: Real, Op: LinearOperator<T> + ?Sized>(
    op: &Op,
    k: usize,
    opts: &SvdOptions,
) -> Result<SvdTriplet<T>> {
    let max = op.nrows().min(op.ncols());
    if k == 0 || k > max {
        return Err(Error::RankTooLarge { requested: k, max });
    }
    if max <= opts.dense_threshold || 2 * k + 8 >= max {
        let dense = sorted_svd(op.to_dense(), k);
        return Ok(SvdTriplet::new(dense.values, dense.left, dense.right));
    }
    lanczos::lanczos_svd(op, k, opts)
}

/// Dense SVD truncated to `k` triplets, values sorted descending
/// (stable in the decomposition's own order for ties).
pub(crate) fn sorted_svd<T: Real>(matrix: DMatrix<T>, k: usize) -> SvdTriplet<T> {
    let svd = matrix.svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.truncate(k);
    let values = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
    let left = u.select_columns(order.iter());
    let right = v_t.select_rows(order.iter()).transpose();
    SvdTriplet {
        values,
        left,
        right,
    }
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig<T: Real> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
}

impl<T: Real> SymEig<T> {
    pub fn max_value(&self) -> T {
        self.values[0]
    }

    pub fn max_vector(&self) -> DVector<T> {
        self.vectors.column(0).into_owned()
    }

    /// `λ_1 − λ_2`, or infinity for a 1×1 matrix.
    pub fn top_gap(&self) -> f64 {
        if self.values.len() < 2 {
            f64::INFINITY
        } else {
            (self.values[0] - self.values[1]).to_f64_lossy()
        }
    }
}

pub fn sym_eig<T: Real>(matrix: &DMatrix<T>) -> Result<SymEig<T>> {
    if !matrix.is_square() {
        return Err(Error::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let asym = (matrix - matrix.transpose()).amax();
    let scale = matrix.amax().max(T::one());
    if asym > T::attainable(1e-10) * scale {
        return Err(Error::NotSymmetric {
            asymmetry: asym.to_f64_lossy(),
        });
    }
    let eig = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    crate::model::canonicalize_signs(&mut vectors);
    Ok(SymEig { values, vectors })
}

/// A `d × r` matrix with orthonormal columns, Haar distributed: QR of a
/// standard Gaussian matrix with the signs of `R`'s diagonal made positive.
pub fn haar_orthonormal<T: Real, R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<DMatrix<T>> {
    if r == 0 || r > d {
        return Err(Error::RankTooLarge { requested: r, max: d });
    }
    let g = DMatrix::from_fn(d, r, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z)
    });
    let qr = g.qr();
    let rmat = qr.r();
    let mut q = qr.q();
    for j in 0..r {
        if rmat[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}
