//! Stack-SVD and SVD-Stack on observed tables, rank one and rank r, plus
//! signal-strength estimation and optional preprocessing.

mod preprocess;
mod theta;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{truncated_svd_with, SvdOptions, SvdTriplet, WeightedStack};
use crate::model::{Family, MethodTag, ProblemSpec, SubspaceEstimate, TableSet, WeightVector, Weighting};
use crate::scalar::Real;
use crate::theory::{rank_r_weight_bookkeeping, svdstack_signal};

pub use preprocess::{center_columns, marchenko_pastur_median, normalize_noise_scale};
pub use theta::{
    auto_weights, auto_weights_from_svds, estimate_theta_above_threshold, estimate_theta_cross_table,
    theta_from_projection, theta_from_top_singular_value, AutoWeightOptions, AutoWeights, ThetaEstimate,
    ThetaMethod, DEFAULT_EDGE_MARGIN,
};

/// Leading right singular vectors of `[w_1 X_1; …; w_m X_m]`.
pub fn stack_svd<T: Real>(tables: &TableSet<T>, w: &WeightVector<T>, k: usize) -> Result<SubspaceEstimate<T>> {
    stack_svd_with(tables, w, k, &SvdOptions::default())
}

pub fn stack_svd_with<T: Real>(
    tables: &TableSet<T>,
    w: &WeightVector<T>,
    k: usize,
    opts: &SvdOptions,
) -> Result<SubspaceEstimate<T>> {
    let weights = rank_one_weights(tables, w)?;
    let svd = weighted_stack_svd(tables, &weights, k, opts)?;
    let tag = MethodTag::new(Family::StackSvd, weighting_kind(&weights));
    Ok(SubspaceEstimate::new(svd.right, svd.values, tag))
}

fn weighted_stack_svd<T: Real>(
    tables: &TableSet<T>,
    weights: &[T],
    k: usize,
    opts: &SvdOptions,
) -> Result<SvdTriplet<T>> {
    let stack = WeightedStack::new(tables.tables(), weights);
    truncated_svd_with(&stack, k, opts)
}

fn rank_one_weights<T: Real>(tables: &TableSet<T>, w: &WeightVector<T>) -> Result<Vec<T>> {
    if w.m() != tables.m() || w.components() != 1 {
        return Err(Error::shape(format!(
            "{} tables but weights are {}x{}",
            tables.m(),
            w.m(),
            w.components()
        )));
    }
    Ok(w.to_vec())
}

/// Equal positive weights are unweighted, a single positive level with
/// zeros is binary, anything else is custom.
fn weighting_kind<T: Real>(weights: &[T]) -> Weighting {
    let positive: Vec<T> = weights.iter().copied().filter(|&x| x > T::zero()).collect();
    let uniform = positive.iter().all(|&x| x == positive[0]);
    match (uniform, positive.len() == weights.len()) {
        (true, true) => Weighting::Unweighted,
        (true, false) => Weighting::Binary,
        _ => Weighting::Custom,
    }
}

/// Top-`k` SVD of every table, computed in parallel.
pub fn per_table_svds<T: Real>(tables: &TableSet<T>, k: usize, opts: &SvdOptions) -> Result<Vec<SvdTriplet<T>>> {
    tables
        .tables()
        .par_iter()
        .map(|x| truncated_svd_with(x, k, opts))
        .collect()
}

/// Stacks the rows `w_i v̂_iᵀ` of each table's top right singular vector
/// and returns the leading `k` right singular vectors of the stack.
pub fn svd_stack<T: Real>(tables: &TableSet<T>, w: &WeightVector<T>, k: usize) -> Result<SubspaceEstimate<T>> {
    svd_stack_with(tables, w, k, &SvdOptions::default())
}

pub fn svd_stack_with<T: Real>(
    tables: &TableSet<T>,
    w: &WeightVector<T>,
    k: usize,
    opts: &SvdOptions,
) -> Result<SubspaceEstimate<T>> {
    let weights = rank_one_weights(tables, w)?;
    let svds = per_table_svds(tables, 1, opts)?;
    svd_stack_from_svds(&svds, &weights, k)
}

/// SVD-Stack from precomputed per-table decompositions (only each table's
/// first right vector is used).
pub fn svd_stack_from_svds<T: Real>(svds: &[SvdTriplet<T>], weights: &[T], k: usize) -> Result<SubspaceEstimate<T>> {
    if svds.len() != weights.len() {
        return Err(Error::shape(format!("{} decompositions but {} weights", svds.len(), weights.len())));
    }
    let rows: Vec<DVector<T>> = svds
        .iter()
        .zip(weights)
        .map(|(s, &w)| s.right.column(0) * w)
        .collect();
    let (vectors, values) = consensus(&rows, k)?;
    let tag = MethodTag::new(Family::SvdStack, weighting_kind(weights));
    Ok(SubspaceEstimate::new(vectors, values, tag))
}

/// Leading `k` right singular vectors of the matrix whose rows are `rows`.
fn consensus<T: Real>(rows: &[DVector<T>], k: usize) -> Result<(DMatrix<T>, DVector<T>)> {
    let count = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if k == 0 || k > count.min(d) {
        return Err(Error::RankTooLarge {
            requested: k,
            max: count.min(d),
        });
    }
    let stacked_t = DMatrix::from_columns(rows);
    let svd = truncated_svd_with(&stacked_t.transpose(), k, &SvdOptions::default())?;
    Ok((svd.right, svd.values))
}

/// The top `k` right singular vectors of a single table, as in the
/// "best table only" baseline.
pub fn single_table<T: Real>(tables: &TableSet<T>, index: usize, k: usize) -> Result<SubspaceEstimate<T>> {
    let x = tables
        .tables()
        .get(index)
        .ok_or_else(|| Error::shape(format!("table index {index} out of range")))?;
    let svd = truncated_svd_with(x, k, &SvdOptions::default())?;
    Ok(SubspaceEstimate::new(
        svd.right,
        svd.values,
        MethodTag::new(Family::SvdStack, Weighting::Binary),
    ))
}

fn check_rank_r<T: Real>(tables: &TableSet<T>, spec: &ProblemSpec<T>) -> Result<()> {
    if spec.m() != tables.m() {
        return Err(Error::shape(format!("{} tables but the spec has {}", tables.m(), spec.m())));
    }
    Ok(())
}

/// Rank-r optimally weighted Stack-SVD: component `j` is read from the
/// stack weighted for it, at the position its own strength takes there.
pub fn stack_svd_rank_r<T: Real>(tables: &TableSet<T>, spec: &ProblemSpec<T>) -> Result<SubspaceEstimate<T>> {
    stack_svd_rank_r_with(tables, spec, &SvdOptions::default())
}

pub fn stack_svd_rank_r_with<T: Real>(
    tables: &TableSet<T>,
    spec: &ProblemSpec<T>,
    opts: &SvdOptions,
) -> Result<SubspaceEstimate<T>> {
    check_rank_r(tables, spec)?;
    let columns: Vec<(DVector<T>, T)> = (0..spec.rank())
        .into_par_iter()
        .map(|j| {
            let book = rank_r_weight_bookkeeping(spec, j)?;
            let svd = weighted_stack_svd(tables, &book.weights, book.order + 1, opts)?;
            Ok((svd.right.column(book.order).into_owned(), svd.values[book.order]))
        })
        .collect::<Result<_>>()?;
    let vectors = DMatrix::from_columns(&columns.iter().map(|(v, _)| v.clone()).collect::<Vec<_>>());
    let values = DVector::from_iterator(columns.len(), columns.iter().map(|(_, s)| *s));
    Ok(SubspaceEstimate::new(
        vectors,
        values,
        MethodTag::new(Family::StackSvd, Weighting::Weighted),
    ))
}

/// Rank-r optimally weighted SVD-Stack.
///
/// Each table contributes its top `r` right singular vectors, matched to
/// components by the order of that table's strengths. Output column `j` is
/// the consensus direction whose rank matches `S_j` among all components;
/// ties in `S_j` leave only the subspace meaningful.
pub fn svd_stack_rank_r<T: Real>(tables: &TableSet<T>, spec: &ProblemSpec<T>) -> Result<SubspaceEstimate<T>> {
    svd_stack_rank_r_with(tables, spec, &SvdOptions::default())
}

pub fn svd_stack_rank_r_with<T: Real>(
    tables: &TableSet<T>,
    spec: &ProblemSpec<T>,
    opts: &SvdOptions,
) -> Result<SubspaceEstimate<T>> {
    check_rank_r(tables, spec)?;
    let r = spec.rank();
    let svds = per_table_svds(tables, r, opts)?;
    svd_stack_rank_r_from_svds(&svds, spec)
}

pub fn svd_stack_rank_r_from_svds<T: Real>(svds: &[SvdTriplet<T>], spec: &ProblemSpec<T>) -> Result<SubspaceEstimate<T>> {
    let r = spec.rank();
    if svds.len() != spec.m() || svds.iter().any(|s| s.k() < r) {
        return Err(Error::shape(format!(
            "need {} decompositions with at least {r} triplets each",
            spec.m()
        )));
    }
    let theta = spec.theta();
    let c = spec.c();
    let mut rows = Vec::with_capacity(spec.m() * r);
    for (i, svd) in svds.iter().enumerate() {
        for j in 0..r {
            let t = theta[(i, j)];
            if let Some(other) = (0..r).find(|&k| k != j && theta[(i, k)] == t) {
                return Err(Error::AmbiguousComponentOrder { component: j, other });
            }
            let position = (0..r).filter(|&k| theta[(i, k)] > t).count();
            let t2 = t * t;
            let w = t * ((t2 + T::one()) / (t2 + c[i])).sqrt();
            rows.push(svd.right.column(position) * w);
        }
    }
    let (vectors, values) = consensus(&rows, r)?;

    let signal: Vec<T> = (0..r).map(|j| svdstack_signal(&spec.theta_column(j), c)).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| signal[b].partial_cmp(&signal[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank_of = vec![0; r];
    for (pos, &j) in order.iter().enumerate() {
        rank_of[j] = pos;
    }
    let tied = (0..r).any(|a| (a + 1..r).any(|b| signal[a] == signal[b]));
    let vectors = vectors.select_columns(rank_of.iter());
    let values = DVector::from_iterator(r, rank_of.iter().map(|&p| values[p]));
    let mut estimate = SubspaceEstimate::new(vectors, values, MethodTag::new(Family::SvdStack, Weighting::Weighted));
    estimate.componentwise = !tied;
    Ok(estimate)
}
