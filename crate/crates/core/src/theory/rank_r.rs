use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::weighted::{
    stacksvd_weight_matrix, svdstack_signal, svdstack_weight_matrix, weighted_stacksvd_root_with,
};
use super::{PredictionReport, TheoryOptions};
use crate::error::{Error, Result};
use crate::model::{Family, MethodTag, ProblemSpec, Weighting};
use crate::scalar::Real;

/// Euler–Mascheroni constant.
pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_860_61;

/// Largest table count [`inadmissibility_instance`] will build.
const MAX_INSTANCE_TABLES: f64 = 1e7;

/// Per-component predictions for the optimally weighted rank-r estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRPrediction<T: Real> {
    /// Components carry `γ_j`; `overlap` is `Σ γ_j`.
    pub stacksvd: PredictionReport<T>,
    /// Components carry `S_j / (S_j + 1)`; `overlap` is their sum.
    pub svdstack: PredictionReport<T>,
    /// Optimal Stack-SVD weights, one inner vector per component.
    pub weights_stacksvd: Vec<Vec<T>>,
    pub weights_svdstack: Vec<Vec<T>>,
}

pub fn predict_rank_r<T: Real>(spec: &ProblemSpec<T>) -> RankRPrediction<T> {
    predict_rank_r_with(spec, &TheoryOptions::default())
}

pub fn predict_rank_r_with<T: Real>(spec: &ProblemSpec<T>, opts: &TheoryOptions) -> RankRPrediction<T> {
    let c = spec.c();
    let mut gammas = Vec::with_capacity(spec.rank());
    let mut svd_overlaps = Vec::with_capacity(spec.rank());
    let mut stack = PredictionReport::new(MethodTag::new(Family::StackSvd, Weighting::Weighted), T::zero(), false);
    let mut svd = PredictionReport::new(MethodTag::new(Family::SvdStack, Weighting::Weighted), T::zero(), false);
    for j in 0..spec.rank() {
        let theta = spec.theta_column(j);
        let gamma = weighted_stacksvd_root_with(&theta, c, opts.root_tol).unwrap_or(T::zero());
        let s = svdstack_signal(&theta, c);
        gammas.push(gamma);
        svd_overlaps.push(s / (s + T::one()));
        stack = stack.diag(&format!("gamma_{j}"), gamma);
        svd = svd.diag(&format!("S_{j}"), s);
    }
    let total = |v: &[T]| v.iter().fold(T::zero(), |a, &x| a + x);
    stack.overlap = total(&gammas);
    stack.detectable = gammas.iter().any(|&g| g > T::zero());
    stack.components = gammas;
    svd.overlap = total(&svd_overlaps);
    svd.detectable = svd_overlaps.iter().any(|&g| g > T::zero());
    svd.components = svd_overlaps;
    RankRPrediction {
        stacksvd: stack,
        svdstack: svd,
        weights_stacksvd: columns(&stacksvd_weight_matrix(spec)),
        weights_svdstack: columns(&svdstack_weight_matrix(spec)),
    }
}

fn columns<T: Real>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// How component `j` ranks inside the stack weighted for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentBookkeeping<T: Real> {
    pub component: usize,
    pub weights: Vec<T>,
    /// `θ̃²_jk = Σ_i θ_ij θ_ik / √(θ_ij² + c_i)` for every `k`.
    pub cross_strengths: Vec<T>,
    /// Zero-based position of `θ̃_jj` among the `θ̃_jk` sorted descending;
    /// component `j` is read off that right singular vector.
    pub order: usize,
}

pub fn rank_r_weight_bookkeeping<T: Real>(spec: &ProblemSpec<T>, j: usize) -> Result<ComponentBookkeeping<T>> {
    if j >= spec.rank() {
        return Err(Error::shape(format!("component {j} out of range for rank {}", spec.rank())));
    }
    let theta = spec.theta();
    let c = spec.c();
    let scale: DVector<T> = DVector::from_fn(spec.m(), |i, _| (theta[(i, j)].powi(2) + c[i]).sqrt());
    let cross: Vec<T> = (0..spec.rank())
        .map(|k| (0..spec.m()).fold(T::zero(), |a, i| a + theta[(i, j)] * theta[(i, k)] / scale[i]))
        .collect();
    let own = cross[j];
    let tie = T::attainable(1e-12);
    for (k, &x) in cross.iter().enumerate() {
        if k != j && (x - own).abs() <= tie * x.abs().max(own.abs()).max(T::lit(f64::MIN_POSITIVE)) {
            return Err(Error::AmbiguousComponentOrder { component: j, other: k });
        }
    }
    let order = cross.iter().filter(|&&x| x > own).count();
    let weights = (0..spec.m()).map(|i| theta[(i, j)] / scale[i]).collect();
    Ok(ComponentBookkeeping {
        component: j,
        weights,
        cross_strengths: cross,
        order,
    })
}

/// An instance on which every estimator except optimally weighted Stack-SVD
/// sits exactly at its threshold, while weighted Stack-SVD reaches overlap at
/// least `1 − ε`: `θ_i = 1` and `c_i = 2i − 1` for
/// `M = ⌈e^{−γ} e^{2/ε}⌉` tables.
pub fn inadmissibility_instance<T: Real>(epsilon: f64) -> Result<ProblemSpec<T>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let m = ((-EULER_MASCHERONI).exp() * (2.0 / epsilon).exp()).ceil();
    if m > MAX_INSTANCE_TABLES {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let m = m as usize;
    let theta = vec![T::one(); m];
    let c: Vec<T> = (1..=m).map(|i| T::from_usize_lossy(2 * i - 1)).collect();
    ProblemSpec::rank_one(&theta, &c)
}
