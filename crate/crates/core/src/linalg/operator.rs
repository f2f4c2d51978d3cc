use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// A real matrix accessed only through products with vectors.
pub trait LinearOperator<T: Real>: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>);
    /// `y = A^T x`
    fn apply_transpose(&self, x: &DVector<T>, y: &mut DVector<T>);
    fn to_dense(&self) -> DMatrix<T>;

    /// `u = A x` and `y = Aᵀ u`.
    fn apply_gram(&self, x: &DVector<T>, u: &mut DVector<T>, y: &mut DVector<T>) {
        self.apply(x, u);
        self.apply_transpose(u, y);
    }

    /// A row-major copy with a single-pass [`LinearOperator::apply_gram`],
    /// for operators that benefit from one.
    fn row_major_copy(&self) -> Option<RowMajorStack<T>> {
        None
    }
}

impl<T: Real> LinearOperator<T> for DMatrix<T> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>) {
        y.gemv(T::one(), self, x, T::zero());
    }

    fn apply_transpose(&self, x: &DVector<T>, y: &mut DVector<T>) {
        y.gemv_tr(T::one(), self, x, T::zero());
    }

    fn to_dense(&self) -> DMatrix<T> {
        self.clone()
    }

    fn row_major_copy(&self) -> Option<RowMajorStack<T>> {
        Some(RowMajorStack::new(&[self], &[T::one()]))
    }
}

/// The vertical concatenation `[w_1 X_1; ...; w_m X_m]`, never materialized.
/// Blocks with zero weight are dropped.
pub struct WeightedStack<'a, T: Real> {
    blocks: Vec<(&'a DMatrix<T>, T, usize)>,
    nrows: usize,
    ncols: usize,
}

impl<'a, T: Real> WeightedStack<'a, T> {
    /// `tables` must share a column count and `weights` must match in length.
    pub fn new(tables: &'a [DMatrix<T>], weights: &[T]) -> Self {
        assert_eq!(tables.len(), weights.len(), "one weight per table");
        let ncols = tables.first().map_or(0, |x| x.ncols());
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (x, &w) in tables.iter().zip(weights) {
            assert_eq!(x.ncols(), ncols, "tables must share a column count");
            if w != T::zero() {
                blocks.push((x, w, offset));
                offset += x.nrows();
            }
        }
        Self {
            blocks,
            nrows: offset,
            ncols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

impl<T: Real> LinearOperator<T> for WeightedStack<'_, T> {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>) {
        for &(block, w, offset) in &self.blocks {
            let mut seg = y.rows_mut(offset, block.nrows());
            seg.gemv(w, block, x, T::zero());
        }
    }

    fn apply_transpose(&self, x: &DVector<T>, y: &mut DVector<T>) {
        y.fill(T::zero());
        for &(block, w, offset) in &self.blocks {
            let seg = x.rows(offset, block.nrows());
            y.gemv_tr(w, block, &seg, T::one());
        }
    }

    fn to_dense(&self) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for &(block, w, offset) in &self.blocks {
            out.rows_mut(offset, block.nrows()).copy_from(&(block * w));
        }
        out
    }

    fn row_major_copy(&self) -> Option<RowMajorStack<T>> {
        let blocks: Vec<&DMatrix<T>> = self.blocks.iter().map(|b| b.0).collect();
        let weights: Vec<T> = self.blocks.iter().map(|b| b.1).collect();
        Some(RowMajorStack::new(&blocks, &weights))
    }
}

/// `[w_1 X_1; ...; w_m X_m]` with every block stored row by row (as the
/// column-major `X_iᵀ`), so that `Aᵀ A x` takes one pass over memory.
pub struct RowMajorStack<T: Real> {
    /// `(X_iᵀ, w_i)`
    blocks: Vec<(DMatrix<T>, T)>,
    nrows: usize,
    ncols: usize,
}

impl<T: Real> RowMajorStack<T> {
    pub fn new(tables: &[&DMatrix<T>], weights: &[T]) -> Self {
        assert_eq!(tables.len(), weights.len(), "one weight per table");
        let ncols = tables.first().map_or(0, |x| x.ncols());
        let blocks: Vec<(DMatrix<T>, T)> = tables
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w != T::zero())
            .map(|(x, &w)| {
                assert_eq!(x.ncols(), ncols, "tables must share a column count");
                (transpose_tiled(x), w)
            })
            .collect();
        let nrows = blocks.iter().map(|b| b.0.ncols()).sum();
        Self { blocks, nrows, ncols }
    }
}

/// Cache-blocked transpose.
pub(crate) fn transpose_tiled<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    const TILE: usize = 32;
    let (n, d) = a.shape();
    let mut out = DMatrix::zeros(d, n);
    let src = a.as_slice();
    let dst = out.as_mut_slice();
    for jb in (0..d).step_by(TILE) {
        for ib in (0..n).step_by(TILE) {
            for j in jb..(jb + TILE).min(d) {
                for i in ib..(ib + TILE).min(n) {
                    dst[i * d + j] = src[j * n + i];
                }
            }
        }
    }
    out
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// For each row `x_k` of one block: `u_k = w x_k·v` and, when `y` is given,
/// `y += w u_k x_k`. Rows are taken four at a time so `y` is streamed once
/// per four rows.
fn block_pass<T: Real>(xt: &[T], d: usize, w: T, v: &[T], u: &mut [T], mut y: Option<&mut [T]>) {
    let v = &v[..d];
    let mut rows = xt.chunks_exact(4 * d);
    let mut k = 0;
    for quad in &mut rows {
        let (r0, rest) = quad.split_at(d);
        let (r1, rest) = rest.split_at(d);
        let (r2, r3) = rest.split_at(d);
        let a = [dot(r0, v) * w, dot(r1, v) * w, dot(r2, v) * w, dot(r3, v) * w];
        u[k..k + 4].copy_from_slice(&a);
        if let Some(y) = y.as_deref_mut() {
            let b = [a[0] * w, a[1] * w, a[2] * w, a[3] * w];
            let y = &mut y[..d];
            for i in 0..d {
                y[i] += b[0] * r0[i] + b[1] * r1[i] + b[2] * r2[i] + b[3] * r3[i];
            }
        }
        k += 4;
    }
    for row in rows.remainder().chunks_exact(d) {
        let a = dot(row, v) * w;
        u[k] = a;
        if let Some(y) = y.as_deref_mut() {
            let b = a * w;
            for (yi, &x) in y.iter_mut().zip(row) {
                *yi += b * x;
            }
        }
        k += 1;
    }
}

impl<T: Real> LinearOperator<T> for RowMajorStack<T> {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>) {
        let mut offset = 0;
        for (xt, w) in &self.blocks {
            let n = xt.ncols();
            block_pass(xt.as_slice(), self.ncols, *w, x.as_slice(), &mut y.as_mut_slice()[offset..offset + n], None);
            offset += n;
        }
    }

    fn apply_transpose(&self, x: &DVector<T>, y: &mut DVector<T>) {
        y.fill(T::zero());
        let mut offset = 0;
        for (xt, w) in &self.blocks {
            let n = xt.ncols();
            y.gemv(*w, xt, &x.rows(offset, n), T::one());
            offset += n;
        }
    }

    fn apply_gram(&self, x: &DVector<T>, u: &mut DVector<T>, y: &mut DVector<T>) {
        y.fill(T::zero());
        let mut offset = 0;
        for (xt, w) in &self.blocks {
            let n = xt.ncols();
            block_pass(
                xt.as_slice(),
                self.ncols,
                *w,
                x.as_slice(),
                &mut u.as_mut_slice()[offset..offset + n],
                Some(y.as_mut_slice()),
            );
            offset += n;
        }
    }

    fn to_dense(&self) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        let mut offset = 0;
        for (xt, w) in &self.blocks {
            let n = xt.ncols();
            out.rows_mut(offset, n).copy_from(&(xt.transpose() * *w));
            offset += n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_matches_dense_products() {
        let a = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let b = DMatrix::from_fn(2, 4, |i, j| (i as f64) - (j as f64));
        let tables = vec![a.clone(), b.clone()];
        let op = WeightedStack::new(&tables, &[2.0, 0.5]);
        let dense = op.to_dense();
        assert_eq!(dense.nrows(), 5);
        let x = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let mut y = DVector::zeros(5);
        op.apply(&x, &mut y);
        assert!((y - &dense * &x).amax() < 1e-12);
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut z = DVector::zeros(4);
        op.apply_transpose(&u, &mut z);
        assert!((z - dense.tr_mul(&u)).amax() < 1e-12);
    }

    #[test]
    fn row_major_stack_matches_column_major() {
        let a = DMatrix::from_fn(7, 5, |i, j| ((i * 5 + j) as f64).sin());
        let b = DMatrix::from_fn(6, 5, |i, j| ((i + 2 * j) as f64).cos());
        let tables = vec![a, b];
        let weights = [1.5, 0.7];
        let dense = WeightedStack::new(&tables, &weights).to_dense();
        let op = WeightedStack::new(&tables, &weights).row_major_copy().unwrap();
        assert!((op.to_dense() - &dense).amax() < 1e-15);
        let x = DVector::from_fn(5, |i, _| i as f64 - 1.5);
        let (mut u, mut y) = (DVector::zeros(13), DVector::zeros(5));
        op.apply_gram(&x, &mut u, &mut y);
        assert!((&u - &dense * &x).amax() < 1e-12);
        assert!((&y - dense.tr_mul(&(&dense * &x))).amax() < 1e-12);
        let mut z = DVector::zeros(5);
        op.apply_transpose(&u, &mut z);
        assert!((z - y).amax() < 1e-12);
        let mut u2 = DVector::zeros(13);
        op.apply(&x, &mut u2);
        assert_eq!(u, u2);
    }

    #[test]
    fn tiled_transpose() {
        let a = DMatrix::from_fn(70, 45, |i, j| (i * 100 + j) as f64);
        assert_eq!(transpose_tiled(&a), a.transpose());
    }

    #[test]
    fn zero_weight_blocks_dropped() {
        let tables = vec![DMatrix::<f64>::zeros(3, 2), DMatrix::zeros(4, 2)];
        let op = WeightedStack::new(&tables, &[0.0, 1.0]);
        assert_eq!(op.nrows(), 4);
    }
}
