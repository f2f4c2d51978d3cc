use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::roots::{bisect_with, ROOT_TOL};
use super::{beta_squared, PredictionReport, TheoryOptions};
use crate::error::{Error, Result};
use crate::model::{Family, MethodTag, ProblemSpec, WeightVector, Weighting};
use crate::scalar::Real;

/// `w = θ / √(θ² + c)`, one column per component.
pub fn optimal_weights_stacksvd<T: Real>(spec: &ProblemSpec<T>) -> Result<WeightVector<T>> {
    WeightVector::new(stacksvd_weight_matrix(spec))
}

/// `w = θ √((θ² + 1) / (θ² + c))`, one column per component.
pub fn optimal_weights_svdstack<T: Real>(spec: &ProblemSpec<T>) -> Result<WeightVector<T>> {
    WeightVector::new(svdstack_weight_matrix(spec))
}

pub(crate) fn stacksvd_weight_matrix<T: Real>(spec: &ProblemSpec<T>) -> DMatrix<T> {
    let (theta, c) = (spec.theta(), spec.c());
    DMatrix::from_fn(spec.m(), spec.rank(), |i, j| {
        let t = theta[(i, j)];
        t / (t * t + c[i]).sqrt()
    })
}

pub(crate) fn svdstack_weight_matrix<T: Real>(spec: &ProblemSpec<T>) -> DMatrix<T> {
    let (theta, c) = (spec.theta(), spec.c());
    DMatrix::from_fn(spec.m(), spec.rank(), |i, j| {
        let t = theta[(i, j)];
        let t2 = t * t;
        t * ((t2 + T::one()) / (t2 + c[i])).sqrt()
    })
}

/// The root `x ∈ (0, 1)` of `Σ θ⁴ (1 − x) / (c + x θ²) = 1`, or `None` when
/// `Σ θ⁴ / c ≤ 1`.
pub fn weighted_stacksvd_root<T: Real>(theta: &DVector<T>, c: &DVector<T>) -> Option<T> {
    weighted_stacksvd_root_with(theta, c, ROOT_TOL)
}

/// [`weighted_stacksvd_root`] with bisection stopping at `|f| <= tol`.
pub fn weighted_stacksvd_root_with<T: Real>(theta: &DVector<T>, c: &DVector<T>, tol: f64) -> Option<T> {
    let ratio = theta
        .iter()
        .zip(c.iter())
        .fold(T::zero(), |a, (&t, &ci)| a + t.powi(4) / ci);
    if ratio <= T::one() {
        return None;
    }
    let f = |x: T| {
        theta.iter().zip(c.iter()).fold(-T::one(), |a, (&t, &ci)| {
            let t2 = t * t;
            a + t2 * t2 * (T::one() - x) / (ci + x * t2)
        })
    };
    Some(bisect_with(f, T::zero(), T::one(), false, tol))
}

pub fn predict_weighted_stacksvd<T: Real>(spec: &ProblemSpec<T>) -> Result<PredictionReport<T>> {
    predict_weighted_stacksvd_with(spec, &TheoryOptions::default())
}

pub fn predict_weighted_stacksvd_with<T: Real>(
    spec: &ProblemSpec<T>,
    opts: &TheoryOptions,
) -> Result<PredictionReport<T>> {
    let theta = spec.theta_vector()?;
    let tag = MethodTag::new(Family::StackSvd, Weighting::Weighted);
    let root = weighted_stacksvd_root_with(&theta, spec.c(), opts.root_tol);
    let mut report = match root {
        Some(x) => PredictionReport::new(tag, x, true).diag("gamma_star", x),
        None => PredictionReport::new(tag, T::zero(), false),
    };
    report.weights = WeightVector::new(stacksvd_weight_matrix(spec)).ok().map(|w| w.to_vec());
    Ok(report)
}

/// `S = Σ β²/(1 − β²)` of one component.
pub(crate) fn svdstack_signal<T: Real>(theta: &DVector<T>, c: &DVector<T>) -> T {
    theta.iter().zip(c.iter()).fold(T::zero(), |a, (&t, &ci)| {
        let b = beta_squared(t, ci);
        a + b / (T::one() - b)
    })
}

pub fn predict_weighted_svdstack<T: Real>(spec: &ProblemSpec<T>) -> Result<PredictionReport<T>> {
    let theta = spec.theta_vector()?;
    let s = svdstack_signal(&theta, spec.c());
    let tag = MethodTag::new(Family::SvdStack, Weighting::Weighted);
    let overlap = s / (s + T::one());
    let mut report = PredictionReport::new(tag, overlap, s > T::zero()).diag("S", s);
    report.weights = WeightVector::new(svdstack_weight_matrix(spec)).ok().map(|w| w.to_vec());
    Ok(report)
}

/// Population quantities of a weighted stack with arbitrary weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedStackSpectrum<T: Real> {
    /// Outlier eigenvalue of the weighted population matrix.
    pub gamma1: T,
    /// `Σ c w⁴ / (γ₁ − w²)²`; the spike is visible iff this is below one.
    pub assumption_check: T,
    /// Limiting squared overlap `L(w)`.
    pub performance: T,
}

pub fn eval_general_weighted_stacksvd<T: Real>(
    spec: &ProblemSpec<T>,
    w: &WeightVector<T>,
) -> Result<WeightedStackSpectrum<T>> {
    eval_general_weighted_stacksvd_with(spec, w, &TheoryOptions::default())
}

pub fn eval_general_weighted_stacksvd_with<T: Real>(
    spec: &ProblemSpec<T>,
    w: &WeightVector<T>,
    opts: &TheoryOptions,
) -> Result<WeightedStackSpectrum<T>> {
    let theta = spec.theta_vector()?;
    let c = spec.c();
    if w.m() != spec.m() || w.components() != 1 {
        return Err(Error::shape(format!(
            "{} tables but weights are {}x{}",
            spec.m(),
            w.m(),
            w.components()
        )));
    }
    let w2: Vec<T> = w.column(0).iter().map(|&x| x * x).collect();
    let a: Vec<T> = theta.iter().zip(&w2).map(|(&t, &x)| t * t * x).collect();
    let a_sum = a.iter().fold(T::zero(), |s, &x| s + x);
    if !(a_sum > T::zero()) {
        return Err(Error::NoSecularRoot);
    }
    let informative_max = w2
        .iter()
        .zip(&a)
        .filter(|(_, &ai)| ai > T::zero())
        .fold(T::zero(), |m, (&x, _)| m.max(x));
    let overall_max = w2.iter().fold(T::zero(), |m, &x| m.max(x));

    let secular = |lambda: T| {
        w2.iter()
            .zip(&a)
            .filter(|(_, &ai)| ai > T::zero())
            .fold(T::one(), |s, (&x, &ai)| s + ai / (x - lambda))
    };
    let gamma1 = bisect_with(secular, informative_max, informative_max + a_sum + T::one(), true, opts.root_tol);

    let assumption_check = w2
        .iter()
        .zip(c.iter())
        .fold(T::zero(), |s, (&x, &ci)| s + ci * x * x / (gamma1 - x).powi(2));
    let spread = w2
        .iter()
        .zip(&a)
        .fold(T::zero(), |s, (&x, &ai)| s + ai / (x - gamma1).powi(2));
    let performance = if gamma1 <= overall_max || assumption_check >= T::one() {
        T::zero()
    } else {
        ((T::one() - assumption_check) / (gamma1 * spread)).min(T::one())
    };
    Ok(WeightedStackSpectrum {
        gamma1,
        assumption_check,
        performance,
    })
}
