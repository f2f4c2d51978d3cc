use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::per_table_svds;
use crate::error::{Error, Result};
use crate::linalg::{truncated_svd_with, SvdOptions, SvdTriplet};
use crate::model::{Family, TableSet, WeightVector};
use crate::scalar::Real;
use crate::theory::beta_squared;

/// Default gap required above the bulk edge `(1 + √c)²` before the top
/// singular value is treated as an outlier.
pub const DEFAULT_EDGE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMethod {
    AboveThresholdQuadratic,
    CrossTable,
}

/// Estimated strength of one table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaEstimate<T: Real> {
    pub theta: T,
    /// Estimated overlap `|⟨v̂, v⟩|` of the table's own top vector, in `[0, 1)`.
    pub beta: T,
    pub method: ThetaMethod,
    /// Table whose top vector was projected on, for cross-table estimates.
    pub reference: Option<usize>,
}

/// Inverts `σ₁² = θ² + 1 + c + c/θ²` for the root with `θ⁴ > c`.
pub fn theta_from_top_singular_value<T: Real>(sigma_sq: T, c: T, margin: T) -> Result<T> {
    let edge = (T::one() + c.sqrt()).powi(2);
    let shifted = sigma_sq - (T::one() + c);
    let disc = shifted * shifted - T::lit(4.0) * c;
    if !(sigma_sq > edge + margin) || disc < T::zero() {
        return Err(Error::NoOutlierSingularValue {
            sigma_sq: sigma_sq.to_f64_lossy(),
            edge: edge.to_f64_lossy(),
        });
    }
    Ok(((shifted + disc.sqrt()) / T::lit(2.0)).sqrt())
}

/// `|⟨v̂, v⟩|` implied by a strength, clamped below one.
fn beta_of<T: Real>(theta: T, c: T) -> T {
    beta_squared(theta, c).sqrt().min(T::one() - T::eps())
}

pub fn estimate_theta_above_threshold<T: Real>(
    table: &DMatrix<T>,
    c: T,
    margin: T,
    opts: &SvdOptions,
) -> Result<ThetaEstimate<T>> {
    let svd = truncated_svd_with(table, 1, opts)?;
    above_threshold_from_sigma(svd.values[0], c, margin)
}

fn above_threshold_from_sigma<T: Real>(sigma: T, c: T, margin: T) -> Result<ThetaEstimate<T>> {
    let theta = theta_from_top_singular_value(sigma * sigma, c, margin)?;
    Ok(ThetaEstimate {
        theta,
        beta: beta_of(theta, c),
        method: ThetaMethod::AboveThresholdQuadratic,
        reference: None,
    })
}

/// Inverts `‖X v̂_ref‖² → θ² β_ref² + c`.
pub fn theta_from_projection<T: Real>(projection_sq: T, c: T, beta_ref: T) -> Result<T> {
    if !(beta_ref > T::zero()) {
        return Err(Error::ReferenceBelowThreshold);
    }
    Ok((projection_sq - c).max(T::zero()).sqrt() / beta_ref)
}

/// Strength of `target` read off its projection on the reference table's top
/// right singular vector.
pub fn estimate_theta_cross_table<T: Real>(
    reference: &DMatrix<T>,
    c_ref: T,
    target: &DMatrix<T>,
    c_tgt: T,
    opts: &SvdOptions,
) -> Result<ThetaEstimate<T>> {
    let svd = truncated_svd_with(reference, 1, opts)?;
    let reference_estimate = above_threshold_from_sigma(svd.values[0], c_ref, T::lit(DEFAULT_EDGE_MARGIN))
        .map_err(|_| Error::ReferenceBelowThreshold)?;
    let v = svd.right.column(0).into_owned();
    cross_from_reference(target, c_tgt, &v, reference_estimate.beta, None)
}

fn cross_from_reference<T: Real>(
    target: &DMatrix<T>,
    c: T,
    v_ref: &DVector<T>,
    beta_ref: T,
    reference: Option<usize>,
) -> Result<ThetaEstimate<T>> {
    let projection_sq = (target * v_ref).norm_squared();
    let theta = theta_from_projection(projection_sq, c, beta_ref)?;
    Ok(ThetaEstimate {
        theta,
        beta: beta_of(theta, c),
        method: ThetaMethod::CrossTable,
        reference,
    })
}

/// Controls for [`auto_weights`].
#[derive(Debug, Clone, PartialEq, serde::Deserialize, Serialize)]
pub struct AutoWeightOptions {
    /// Outlier margin above the bulk edge, in units of the Tracy–Widom scale
    /// of the table's top squared singular value.
    pub edge_margin_tw: f64,
    /// Cross-table projections whose excess over `c` is below this many null
    /// standard deviations are treated as no signal.
    pub significance: f64,
    pub svd: SvdOptions,
}

impl Default for AutoWeightOptions {
    fn default() -> Self {
        Self {
            edge_margin_tw: 4.0,
            significance: 3.0,
            svd: SvdOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoWeights<T: Real> {
    pub weights: WeightVector<T>,
    pub estimates: Vec<ThetaEstimate<T>>,
    pub reference: usize,
}

/// Estimates every table's strength from the data and applies the optimal
/// weight formula of `family`.
pub fn auto_weights<T: Real>(
    tables: &TableSet<T>,
    family: Family,
    opts: &AutoWeightOptions,
) -> Result<AutoWeights<T>> {
    let svds = per_table_svds(tables, 1, &opts.svd)?;
    auto_weights_from_svds(tables, &svds, family, opts)
}

/// Fluctuation scale of the largest eigenvalue of `XᵀX` for an `n × d`
/// pure-noise table with entry variance `1/d`.
fn tracy_widom_scale(n: usize, d: usize) -> f64 {
    let (n, d) = (n as f64, d as f64);
    (n.sqrt() + d.sqrt()) * (1.0 / n.sqrt() + 1.0 / d.sqrt()).powf(1.0 / 3.0) / d
}

/// [`auto_weights`] with each table's top singular triplet already computed.
pub fn auto_weights_from_svds<T: Real>(
    tables: &TableSet<T>,
    svds: &[SvdTriplet<T>],
    family: Family,
    opts: &AutoWeightOptions,
) -> Result<AutoWeights<T>> {
    if svds.len() != tables.m() {
        return Err(Error::shape(format!("{} tables but {} decompositions", tables.m(), svds.len())));
    }
    let c = tables.aspect_ratios();
    let d = tables.d();
    let mut estimates: Vec<Option<ThetaEstimate<T>>> = Vec::with_capacity(tables.m());
    let mut reference: Option<(usize, T)> = None;
    for (i, svd) in svds.iter().enumerate() {
        let n = tables.table(i).nrows();
        let margin = T::lit(DEFAULT_EDGE_MARGIN.max(opts.edge_margin_tw * tracy_widom_scale(n, d)));
        let sigma = svd.values[0];
        let estimate = above_threshold_from_sigma(sigma, c[i], margin).ok();
        if estimate.is_some() {
            let ratio = sigma * sigma / (T::one() + c[i].sqrt()).powi(2);
            if reference.is_none_or(|(_, best)| ratio > best) {
                reference = Some((i, ratio));
            }
        }
        estimates.push(estimate);
    }
    let (reference, _) = reference.ok_or(Error::AllTablesBelowThreshold)?;
    let v_ref = svds[reference].right.column(0).into_owned();
    let beta_ref = estimates[reference].as_ref().map(|e| e.beta).unwrap_or(T::zero());

    let mut filled = Vec::with_capacity(tables.m());
    for (i, estimate) in estimates.into_iter().enumerate() {
        let estimate = match estimate {
            Some(e) => e,
            None => {
                let x = tables.table(i);
                let mut e = cross_from_reference(x, c[i], &v_ref, beta_ref, Some(reference))?;
                let null_sd = T::lit((2.0 * x.nrows() as f64).sqrt() / d as f64);
                if e.theta * e.theta * beta_ref * beta_ref <= T::lit(opts.significance) * null_sd {
                    e.theta = T::zero();
                    e.beta = T::zero();
                }
                e
            }
        };
        filled.push(estimate);
    }
    let theta: Vec<T> = filled.iter().map(|e| e.theta).collect();
    let weights: Vec<T> = theta
        .iter()
        .zip(&c)
        .map(|(&t, &ci)| {
            let t2 = t * t;
            match family {
                Family::StackSvd => t / (t2 + ci).sqrt(),
                Family::SvdStack => t * ((t2 + T::one()) / (t2 + ci)).sqrt(),
            }
        })
        .collect();
    Ok(AutoWeights {
        weights: WeightVector::from_slice(&weights)?,
        estimates: filled,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_the_outlier_location() {
        let theta: f64 = theta_from_top_singular_value(6.25, 1.0, 1e-6).unwrap();
        assert!((theta - 2.0).abs() < 1e-12);
        for (t, c) in [(1.3f64, 0.5f64), (3.0, 2.0), (1.1, 1.4)] {
            let sigma_sq = t * t + 1.0 + c + c / (t * t);
            let back = theta_from_top_singular_value(sigma_sq, c, 1e-6).unwrap();
            assert!((back - t).abs() < 1e-10, "theta {t}, c {c}");
        }
    }

    #[test]
    fn bulk_edge_has_no_outlier() {
        let c: f64 = 1.7;
        let edge = (1.0 + c.sqrt()).powi(2);
        assert!(matches!(
            theta_from_top_singular_value(edge, c, 1e-6),
            Err(Error::NoOutlierSingularValue { .. })
        ));
    }

    #[test]
    fn projection_inversion() {
        let theta: f64 = theta_from_projection(1.81, 1.0, 0.9).unwrap();
        assert!((theta - 1.0).abs() < 1e-12);
        assert_eq!(theta_from_projection(0.5f64, 1.0, 0.9).unwrap(), 0.0);
        assert_eq!(theta_from_projection(2.0f64, 1.0, 0.0), Err(Error::ReferenceBelowThreshold));
    }
}
