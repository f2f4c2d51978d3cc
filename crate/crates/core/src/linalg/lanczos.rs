//! Thick-restarted Golub–Kahan–Lanczos bidiagonalization with full
//! reorthogonalization, for a few leading singular triplets of a large
//! operator.
//!
//! The projected matrix is kept as the explicit Gram block `B = U^T A V`
//! (upper triangular, arrow-shaped after a restart), so the restart needs no
//! special bookkeeping: the reorthogonalization coefficients are exactly the
//! new column of `B`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::operator::LinearOperator;
use super::{sorted_svd, SvdOptions, SvdTriplet};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn lanczos_svd<T: Real, Op: LinearOperator<T> + ?Sized>(
    op: &Op,
    k: usize,
    opts: &SvdOptions,
) -> Result<SvdTriplet<T>> {
    match op.row_major_copy() {
        Some(fused) => run(&fused, k, opts),
        None => run(op, k, opts),
    }
}

fn run<T: Real, Op: LinearOperator<T> + ?Sized>(op: &Op, k: usize, opts: &SvdOptions) -> Result<SvdTriplet<T>> {
    let n = op.nrows();
    let d = op.ncols();
    let full = n.min(d);
    let p = opts.krylov_dim(k).min(full);
    let keep = (k + (p - k) / 2).min(p.saturating_sub(1)).max(k);
    let tol = T::attainable(opts.tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut v_basis = DMatrix::<T>::zeros(d, p + 1);
    let mut u_basis = DMatrix::<T>::zeros(n, p);
    // Column i holds `Aᵀ u_i`, so each step needs one `apply_gram` only.
    let mut at_u = DMatrix::<T>::zeros(d, p);
    let mut b = DMatrix::<T>::zeros(p, p);

    let start = random_unit(d, &mut rng);
    v_basis.set_column(0, &start);

    let mut u = DVector::<T>::zeros(n);
    let mut r = DVector::<T>::zeros(d);
    let mut gram = DVector::<T>::zeros(d);
    let mut kept = 0usize;
    let mut last_residual = f64::INFINITY;

    for _restart in 0..=opts.max_restarts {
        let mut beta = T::zero();
        for j in kept..p {
            op.apply_gram(&v_basis.column(j).into_owned(), &mut u, &mut gram);
            let h = orthogonalize(&u_basis, j, &mut u);
            for (i, hi) in h.iter().enumerate() {
                b[(i, j)] = *hi;
            }
            let mut alpha = u.norm();
            if alpha <= breakdown_threshold::<T>(&b, n) {
                u = random_orthogonal(&u_basis, j, n, &mut rng);
                alpha = T::zero();
                op.apply_transpose(&u, &mut r);
            } else {
                u /= alpha;
                // Aᵀ u = (Aᵀ A v − Σ h_i Aᵀ u_i) / α
                r.copy_from(&gram);
                if j > 0 {
                    r.gemv(-T::one(), &at_u.columns(0, j), &h, T::one());
                }
                r /= alpha;
            }
            b[(j, j)] = alpha;
            u_basis.set_column(j, &u);
            at_u.set_column(j, &r);

            orthogonalize(&v_basis, j + 1, &mut r);
            beta = r.norm();
            if beta <= breakdown_threshold::<T>(&b, d) {
                let fresh = random_orthogonal(&v_basis, j + 1, d, &mut rng);
                v_basis.set_column(j + 1, &fresh);
                beta = T::zero();
            } else {
                v_basis.set_column(j + 1, &(&r / beta));
            }
        }

        let small = sorted_svd(b.clone(), p);
        let sigma_max = small.values[0].max(T::lit(f64::MIN_POSITIVE));
        let last_row = p - 1;
        let residual = (0..k)
            .map(|i| (beta * small.left[(last_row, i)]).abs())
            .fold(T::zero(), |a, x| a.max(x));
        last_residual = (residual / sigma_max).to_f64_lossy();

        if residual <= tol * sigma_max || p == full {
            let left = u_basis.columns(0, p) * small.left.columns(0, k);
            let right = v_basis.columns(0, p) * small.right.columns(0, k);
            let values = small.values.rows(0, k).into_owned();
            return Ok(SvdTriplet::new(values, left, right));
        }

        // Restart from the leading `keep` Ritz pairs plus the residual direction.
        let ritz_v = v_basis.columns(0, p) * small.right.columns(0, keep);
        let ritz_u = u_basis.columns(0, p) * small.left.columns(0, keep);
        let ritz_at_u = at_u.columns(0, p) * small.left.columns(0, keep);
        at_u.columns_mut(0, keep).copy_from(&ritz_at_u);
        let next = v_basis.column(p).into_owned();
        v_basis.columns_mut(0, keep).copy_from(&ritz_v);
        v_basis.set_column(keep, &next);
        u_basis.columns_mut(0, keep).copy_from(&ritz_u);
        b.fill(T::zero());
        for i in 0..keep {
            b[(i, i)] = small.values[i];
        }
        kept = keep;
    }

    Err(Error::ConvergenceFailure {
        restarts: opts.max_restarts,
        residual: last_residual,
    })
}

fn breakdown_threshold<T: Real>(b: &DMatrix<T>, dim: usize) -> T {
    let scale = b.amax().max(T::one());
    scale * T::eps() * T::from_usize_lossy(dim).sqrt()
}

/// Classical Gram–Schmidt against the first `cols` columns, applied twice.
/// Returns the accumulated projection coefficients.
fn orthogonalize<T: Real>(basis: &DMatrix<T>, cols: usize, x: &mut DVector<T>) -> DVector<T> {
    if cols == 0 {
        return DVector::zeros(0);
    }
    let q = basis.columns(0, cols);
    let mut h = q.tr_mul(x);
    x.gemv(-T::one(), &q, &h, T::one());
    let h2 = q.tr_mul(x);
    x.gemv(-T::one(), &q, &h2, T::one());
    h += h2;
    h
}

fn random_unit<T: Real>(dim: usize, rng: &mut ChaCha8Rng) -> DVector<T> {
    let mut x = DVector::from_fn(dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z)
    });
    let norm = x.norm();
    x /= norm;
    x
}

fn random_orthogonal<T: Real>(
    basis: &DMatrix<T>,
    cols: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> DVector<T> {
    loop {
        let mut x = random_unit(dim, rng);
        orthogonalize(basis, cols, &mut x);
        let norm = x.norm();
        if norm > T::lit(1e-3) {
            x /= norm;
            return x;
        }
    }
}
