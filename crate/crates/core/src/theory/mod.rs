//! Asymptotic performance of the estimators: squared overlaps, detectability
//! thresholds, optimal weights and the spectral quantities behind them.
//!
//! Every predictor here is a pure function of a [`ProblemSpec`]; none touches
//! data.

mod rank_r;
pub(crate) mod roots;
mod weighted;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymEig};
use crate::model::{Family, MethodTag, ProblemSpec, WeightVector, Weighting};
use crate::scalar::Real;

pub use rank_r::{
    inadmissibility_instance, predict_rank_r, predict_rank_r_with, rank_r_weight_bookkeeping, ComponentBookkeeping,
    RankRPrediction, EULER_MASCHERONI,
};
pub use weighted::{
    eval_general_weighted_stacksvd, eval_general_weighted_stacksvd_with, optimal_weights_stacksvd,
    optimal_weights_svdstack, predict_weighted_stacksvd, predict_weighted_stacksvd_with,
    predict_weighted_svdstack, weighted_stacksvd_root, weighted_stacksvd_root_with,
    WeightedStackSpectrum,
};
pub(crate) use weighted::svdstack_signal;

/// Largest table count accepted by [`SubsetRule::Best`].
pub const SUBSET_ENUMERATION_CAP: usize = 20;

/// Hard ceiling on a configured subset cap; enumeration allocates `2^m` sums.
pub const MAX_SUBSET_CAP: usize = 30;

/// Numerical controls of the predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryOptions {
    /// Bisection stops once the secular function is within this of zero.
    pub root_tol: f64,
    /// Largest table count for [`SubsetRule::Best`].
    pub subset_cap: usize,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self {
            root_tol: roots::ROOT_TOL,
            subset_cap: SUBSET_ENUMERATION_CAP,
        }
    }
}

impl TheoryOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.root_tol > 0.0 && self.root_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("root tolerance {} must lie in (0, 1)", self.root_tol)));
        }
        if self.subset_cap > MAX_SUBSET_CAP {
            return Err(Error::InvalidParameter(format!(
                "subset cap {} exceeds {MAX_SUBSET_CAP}",
                self.subset_cap
            )));
        }
        Ok(())
    }
}

/// Limiting squared overlap of a single table's top right singular vector.
/// Zero at or below the threshold `θ⁴ = c`.
pub fn beta_squared<T: Real>(theta: T, c: T) -> T {
    let t2 = theta * theta;
    let t4 = t2 * t2;
    if t4 > c {
        (t4 - c) / (t4 + t2)
    } else {
        T::zero()
    }
}

/// Per-table (and per-component) squared overlaps `β²`, shape `m × rank`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaVector<T: Real> {
    squared: DMatrix<T>,
}

impl<T: Real> BetaVector<T> {
    /// Rank-one vector from `β²` values, each in `[0, 1)`.
    pub fn from_squared(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::shape("beta vector needs at least one entry"));
        }
        if values.iter().any(|&b| !(b >= T::zero() && b < T::one())) {
            return Err(Error::InvalidParameter("beta^2 entries must lie in [0, 1)".into()));
        }
        Ok(Self {
            squared: DMatrix::from_column_slice(values.len(), 1, values),
        })
    }

    pub fn squared(&self) -> &DMatrix<T> {
        &self.squared
    }

    pub fn m(&self) -> usize {
        self.squared.nrows()
    }

    pub fn rank(&self) -> usize {
        self.squared.ncols()
    }

    /// `β²` of component `j`.
    pub fn column(&self, j: usize) -> DVector<T> {
        self.squared.column(j).into_owned()
    }

    /// `β` (not squared) of component `j`.
    pub fn beta(&self, j: usize) -> DVector<T> {
        self.column(j).map(|b| b.sqrt())
    }

    /// Tables with `β > 0` for component `j`.
    pub fn informative(&self, j: usize) -> usize {
        self.squared.column(j).iter().filter(|&&b| b > T::zero()).count()
    }
}

pub fn beta_from_theta<T: Real>(spec: &ProblemSpec<T>) -> BetaVector<T> {
    let theta = spec.theta();
    let c = spec.c();
    BetaVector {
        squared: DMatrix::from_fn(spec.m(), spec.rank(), |i, j| beta_squared(theta[(i, j)], c[i])),
    }
}

/// `(w∘β)(w∘β)ᵀ + diag(w²∘(1−β²))`; with no weights, `ββᵀ + diag(1−β²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ABetaMatrix<T: Real> {
    matrix: DMatrix<T>,
}

impl<T: Real> ABetaMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn eig(&self) -> Result<SymEig<T>> {
        sym_eig(&self.matrix)
    }
}

/// Builds the limiting Gram matrix of the stacked per-table vectors for a
/// rank-one `beta`.
pub fn build_a_beta<T: Real>(
    beta: &BetaVector<T>,
    w: Option<&WeightVector<T>>,
) -> Result<ABetaMatrix<T>> {
    if beta.rank() != 1 {
        return Err(Error::shape("A_beta is defined for a rank-one beta vector"));
    }
    let weights = match w {
        Some(w) => {
            if w.m() != beta.m() || w.components() != 1 {
                return Err(Error::shape(format!(
                    "{} tables in beta but weights are {}x{}",
                    beta.m(),
                    w.m(),
                    w.components()
                )));
            }
            Some(w.column(0))
        }
        None => None,
    };
    Ok(ABetaMatrix {
        matrix: a_beta_matrix(&beta.column(0), weights.as_ref()),
    })
}

pub(crate) fn a_beta_matrix<T: Real>(beta_sq: &DVector<T>, w: Option<&DVector<T>>) -> DMatrix<T> {
    let m = beta_sq.len();
    let scaled = DVector::from_fn(m, |i, _| {
        let wi = w.map_or(T::one(), |w| w[i]);
        wi * beta_sq[i].sqrt()
    });
    let mut a = &scaled * scaled.transpose();
    for i in 0..m {
        let wi = w.map_or(T::one(), |w| w[i]);
        a[(i, i)] += wi * wi * (T::one() - beta_sq[i]);
    }
    a
}

/// Asymptotic prediction for one estimator on one problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport<T: Real> {
    pub method: MethodTag,
    /// Squared overlap; summed over components for rank-r reports.
    pub overlap: T,
    /// Per-component squared overlaps.
    pub components: Vec<T>,
    pub detectable: bool,
    /// SVD-Stack with exactly one informative table: the overlap is that
    /// table's own `β²`.
    pub degenerate: bool,
    pub weights: Option<Vec<T>>,
    pub subset: Option<Vec<usize>>,
    pub diagnostics: BTreeMap<String, T>,
}

impl<T: Real> PredictionReport<T> {
    pub(crate) fn new(method: MethodTag, overlap: T, detectable: bool) -> Self {
        Self {
            method,
            overlap,
            components: vec![overlap],
            detectable,
            degenerate: false,
            weights: None,
            subset: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub(crate) fn diag(mut self, key: &str, value: T) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

pub fn predict_unweighted_svdstack<T: Real>(spec: &ProblemSpec<T>) -> Result<PredictionReport<T>> {
    spec.theta_vector()?;
    let beta = beta_from_theta(spec);
    let tag = MethodTag::new(Family::SvdStack, Weighting::Unweighted);
    let beta_sq = beta.column(0);
    if spec.m() == 1 {
        return Ok(PredictionReport::new(tag, beta_sq[0], beta_sq[0] > T::zero()));
    }
    match beta.informative(0) {
        0 => Ok(PredictionReport::new(tag, T::zero(), false)),
        1 => {
            let single = beta_sq.iter().fold(T::zero(), |a, &b| a.max(b));
            let mut report = PredictionReport::new(tag, single, true);
            report.degenerate = true;
            Ok(report)
        }
        _ => {
            let eig = sym_eig(&a_beta_matrix(&beta_sq, None))?;
            let lambda = eig.max_value();
            let proj = beta.beta(0).dot(&eig.max_vector());
            let overlap = proj * proj / lambda;
            Ok(PredictionReport::new(tag, overlap, true).diag("lambda_max", lambda))
        }
    }
}

pub fn predict_unweighted_stacksvd<T: Real>(spec: &ProblemSpec<T>) -> Result<PredictionReport<T>> {
    let theta = spec.theta_vector()?;
    let t2 = theta.norm_squared();
    let c_sum = spec.c().sum();
    let margin = t2 * t2 - c_sum;
    let overlap = stack_overlap(t2, c_sum);
    let tag = MethodTag::new(Family::StackSvd, Weighting::Unweighted);
    Ok(PredictionReport::new(tag, overlap, overlap > T::zero()).diag("margin", margin))
}

/// `(t2² − c_sum) / (t2 (t2 + 1))`, or zero when the numerator is not positive.
fn stack_overlap<T: Real>(t2: T, c_sum: T) -> T {
    let num = t2 * t2 - c_sum;
    if num > T::zero() {
        num / (t2 * (t2 + T::one()))
    } else {
        T::zero()
    }
}

/// Which tables binary Stack-SVD keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubsetRule {
    /// Tables individually at or above their threshold, `θ⁴ ≥ c`.
    Auto,
    Explicit(Vec<usize>),
    /// The best of all nonempty subsets; needs `m <= SUBSET_ENUMERATION_CAP`.
    Best,
}

pub fn predict_binary_stacksvd<T: Real>(
    spec: &ProblemSpec<T>,
    rule: &SubsetRule,
) -> Result<PredictionReport<T>> {
    predict_binary_stacksvd_with(spec, rule, &TheoryOptions::default())
}

pub fn predict_binary_stacksvd_with<T: Real>(
    spec: &ProblemSpec<T>,
    rule: &SubsetRule,
    opts: &TheoryOptions,
) -> Result<PredictionReport<T>> {
    let theta = spec.theta_vector()?;
    let c = spec.c();
    let m = spec.m();
    let subset = match rule {
        SubsetRule::Auto => auto_subset(&theta, c),
        SubsetRule::Explicit(indices) => {
            if indices.is_empty() {
                return Err(Error::SubsetEmpty);
            }
            let mut s = indices.clone();
            s.sort_unstable();
            s.dedup();
            if let Some(&bad) = s.iter().find(|&&i| i >= m) {
                return Err(Error::shape(format!("table index {bad} out of range for m = {m}")));
            }
            s
        }
        SubsetRule::Best => best_subset(&theta, c, opts.subset_cap)?,
    };
    let (overlap, margin) = binary_overlap(&theta, c, &subset);
    let tag = MethodTag::new(Family::StackSvd, Weighting::Binary);
    let mut report = PredictionReport::new(tag, overlap, overlap > T::zero()).diag("margin", margin);
    report.subset = Some(subset);
    Ok(report)
}

/// SVD-Stack with unit weights on `rule`'s tables and zero elsewhere.
///
/// `Auto` keeps the tables whose own top vector is informative (`θ⁴ > c`);
/// an empty selection predicts zero. `Best` enumerates every nonempty subset.
pub fn predict_binary_svdstack<T: Real>(
    spec: &ProblemSpec<T>,
    rule: &SubsetRule,
) -> Result<PredictionReport<T>> {
    predict_binary_svdstack_with(spec, rule, &TheoryOptions::default())
}

pub fn predict_binary_svdstack_with<T: Real>(
    spec: &ProblemSpec<T>,
    rule: &SubsetRule,
    opts: &TheoryOptions,
) -> Result<PredictionReport<T>> {
    let theta = spec.theta_vector()?;
    let c = spec.c();
    let m = spec.m();
    let subset = match rule {
        SubsetRule::Auto => (0..m).filter(|&i| theta[i].powi(4) > c[i]).collect(),
        SubsetRule::Explicit(indices) => {
            let mut s = indices.clone();
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(Error::SubsetEmpty);
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= m) {
                return Err(Error::shape(format!("table index {bad} out of range for m = {m}")));
            }
            s
        }
        SubsetRule::Best => {
            if m > opts.subset_cap.min(MAX_SUBSET_CAP) {
                return Err(Error::TooManyTablesForEnumeration {
                    m,
                    cap: opts.subset_cap.min(MAX_SUBSET_CAP),
                });
            }
            let mut best = (T::zero(), vec![0]);
            for mask in 1u32..(1 << m) {
                let s: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
                let overlap = predict_unweighted_svdstack(&spec.select(&s)?)?.overlap;
                if overlap > best.0 {
                    best = (overlap, s);
                }
            }
            best.1
        }
    };
    let tag = MethodTag::new(Family::SvdStack, Weighting::Binary);
    let mut report = if subset.is_empty() {
        PredictionReport::new(tag, T::zero(), false)
    } else {
        let inner = predict_unweighted_svdstack(&spec.select(&subset)?)?;
        let mut report = PredictionReport::new(tag, inner.overlap, inner.detectable);
        report.degenerate = inner.degenerate;
        report.diagnostics = inner.diagnostics;
        report
    };
    report.subset = Some(subset);
    Ok(report)
}

fn auto_subset<T: Real>(theta: &DVector<T>, c: &DVector<T>) -> Vec<usize> {
    (0..theta.len())
        .filter(|&i| theta[i].powi(4) >= c[i])
        .collect()
}

/// Overlap and margin `(Σ_S θ²)² − Σ_S c` of binary Stack-SVD on `subset`.
pub(crate) fn binary_overlap<T: Real>(theta: &DVector<T>, c: &DVector<T>, subset: &[usize]) -> (T, T) {
    let t2 = subset.iter().fold(T::zero(), |a, &i| a + theta[i] * theta[i]);
    let c_sum = subset.iter().fold(T::zero(), |a, &i| a + c[i]);
    (stack_overlap(t2, c_sum), t2 * t2 - c_sum)
}

fn best_subset<T: Real>(theta: &DVector<T>, c: &DVector<T>, cap: usize) -> Result<Vec<usize>> {
    let m = theta.len();
    let cap = cap.min(MAX_SUBSET_CAP);
    if m > cap {
        return Err(Error::TooManyTablesForEnumeration { m, cap });
    }
    let count = 1usize << m;
    // Subset sums built from the subset without its lowest table.
    let mut t2 = vec![T::zero(); count];
    let mut cs = vec![T::zero(); count];
    let mut best = (T::zero(), 1usize);
    let mut found = false;
    for mask in 1..count {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        t2[mask] = t2[rest] + theta[low] * theta[low];
        cs[mask] = cs[rest] + c[low];
        let value = stack_overlap(t2[mask], cs[mask]);
        if !found || value > best.0 {
            best = (value, mask);
            found = true;
        }
    }
    Ok((0..m).filter(|&i| best.1 & (1 << i) != 0).collect())
}

/// One detectability condition: `detectable` iff `margin > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold<T: Real> {
    pub detectable: bool,
    /// Left-hand side minus right-hand side of the condition.
    pub margin: T,
}

impl<T: Real> Threshold<T> {
    fn from_margin(margin: T) -> Self {
        Self {
            detectable: margin > T::zero(),
            margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionThresholds<T: Real> {
    /// Second largest `β²` is positive (the only one when `m = 1`).
    pub svdstack: Threshold<T>,
    /// `max θ⁴/c > 1`.
    pub svdstack_weighted: Threshold<T>,
    /// `‖θ‖⁴ > ‖c‖₁`.
    pub stacksvd: Threshold<T>,
    /// `Σ θ⁴/c > 1`.
    pub stacksvd_weighted: Threshold<T>,
    /// `(Σ_S θ²)² > Σ_S c` for the automatic subset.
    pub stacksvd_binary_auto: Threshold<T>,
}

pub fn detection_thresholds<T: Real>(spec: &ProblemSpec<T>) -> Result<DetectionThresholds<T>> {
    let theta = spec.theta_vector()?;
    let c = spec.c();
    let mut beta_sq: Vec<T> = theta.iter().zip(c.iter()).map(|(&t, &ci)| beta_squared(t, ci)).collect();
    beta_sq.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    // A single table is its own SVD-Stack estimate.
    let second = beta_sq.get(1).copied().unwrap_or(beta_sq[0]);
    let ratios: Vec<T> = theta.iter().zip(c.iter()).map(|(&t, &ci)| t.powi(4) / ci).collect();
    let max_ratio = ratios.iter().fold(T::zero(), |a, &b| a.max(b));
    let sum_ratio = ratios.iter().fold(T::zero(), |a, &b| a + b);
    let t2 = theta.norm_squared();
    let (_, binary_margin) = binary_overlap(&theta, c, &auto_subset(&theta, c));
    Ok(DetectionThresholds {
        svdstack: Threshold::from_margin(second),
        svdstack_weighted: Threshold::from_margin(max_ratio - T::one()),
        stacksvd: Threshold::from_margin(t2 * t2 - c.sum()),
        stacksvd_weighted: Threshold::from_margin(sum_ratio - T::one()),
        stacksvd_binary_auto: Threshold::from_margin(binary_margin),
    })
}
