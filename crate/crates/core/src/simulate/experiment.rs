use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_tables, NoiseSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    auto_weights_from_svds, per_table_svds, stack_svd_rank_r_with, stack_svd_with, svd_stack_from_svds,
    svd_stack_rank_r_from_svds, AutoWeightOptions,
};
use crate::linalg::{SvdOptions, SvdTriplet};
use crate::model::{alignment_of, Family, MethodTag, ProblemSpec, TableSet, WeightVector, Weighting};
use crate::scalar::Real;
use crate::theory::{
    optimal_weights_stacksvd, optimal_weights_svdstack, predict_binary_stacksvd, predict_binary_svdstack,
    predict_rank_r, predict_unweighted_stacksvd, predict_unweighted_svdstack, predict_weighted_stacksvd,
    predict_weighted_svdstack, SubsetRule,
};

/// The six rank-one methods.
pub const DEFAULT_METHODS: [MethodTag; 6] = [
    MethodTag { family: Family::StackSvd, weighting: Weighting::Unweighted },
    MethodTag { family: Family::StackSvd, weighting: Weighting::Binary },
    MethodTag { family: Family::StackSvd, weighting: Weighting::Weighted },
    MethodTag { family: Family::SvdStack, weighting: Weighting::Unweighted },
    MethodTag { family: Family::SvdStack, weighting: Weighting::Binary },
    MethodTag { family: Family::SvdStack, weighting: Weighting::Weighted },
];

/// Values swept by an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "values")]
pub enum Grid {
    /// One point at the plan's `d`.
    Single,
    /// Column dimensions.
    Dimension(Vec<usize>),
    /// Table counts; grid point `M` uses the first `M` tables of the spec.
    TableCount(Vec<usize>),
}

/// Where weights and binary subsets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSource {
    /// The true strengths.
    #[default]
    Oracle,
    /// Strengths estimated from each replicate's tables.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan<T: Real> {
    pub spec: ProblemSpec<T>,
    pub d: usize,
    pub grid: Grid,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<MethodTag>,
    pub noise: NoiseSpec,
    pub weights: WeightSource,
    pub svd: SvdOptions,
}

impl<T: Real> ExperimentPlan<T> {
    /// Single point, ten replicates, the six rank-one methods (the weighted
    /// pair for rank r), Gaussian noise and oracle weights.
    pub fn new(spec: ProblemSpec<T>, d: usize) -> Self {
        let methods = if spec.rank() == 1 {
            DEFAULT_METHODS.to_vec()
        } else {
            vec![DEFAULT_METHODS[2], DEFAULT_METHODS[5]]
        };
        Self {
            spec,
            d,
            grid: Grid::Single,
            replicates: 10,
            seed: 0,
            methods,
            noise: NoiseSpec::default(),
            weights: WeightSource::Oracle,
            svd: SvdOptions {
                tol: 1e-7,
                ..SvdOptions::default()
            },
        }
    }

    /// `(grid value, spec, d)` for every grid point.
    fn points(&self) -> Result<Vec<(usize, ProblemSpec<T>, usize)>> {
        match &self.grid {
            Grid::Single => Ok(vec![(self.d, self.spec.clone(), self.d)]),
            Grid::Dimension(ds) => Ok(ds.iter().map(|&d| (d, self.spec.clone(), d)).collect()),
            Grid::TableCount(ms) => ms
                .iter()
                .map(|&m| {
                    if m == 0 || m > self.spec.m() {
                        return Err(Error::InvalidPlan(format!(
                            "table count {m} outside 1..={}",
                            self.spec.m()
                        )));
                    }
                    Ok((m, self.spec.prefix(m)?, self.d))
                })
                .collect(),
        }
    }

    fn validate(&self) -> Result<Vec<(usize, ProblemSpec<T>, usize)>> {
        if self.replicates == 0 {
            return Err(Error::InvalidPlan("at least one replicate is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidPlan("no methods selected".into()));
        }
        for m in &self.methods {
            if m.weighting == Weighting::Custom {
                return Err(Error::InvalidPlan(format!("{m} has no prediction to compare against")));
            }
            if self.spec.rank() > 1 && m.weighting != Weighting::Weighted {
                return Err(Error::InvalidPlan(format!("{m} is only supported for rank one")));
            }
        }
        if self.spec.rank() > 1 && self.weights == WeightSource::Estimated {
            return Err(Error::InvalidPlan("estimated weights are only supported for rank one".into()));
        }
        let points = self.points()?;
        if points.is_empty() {
            return Err(Error::InvalidPlan("the grid is empty".into()));
        }
        for (_, spec, d) in &points {
            if let Some(&n) = spec.row_counts(*d).iter().find(|&&n| n < spec.rank().max(1)) {
                return Err(Error::InvalidPlan(format!(
                    "d = {d} gives a table with {n} rows, fewer than the rank {}",
                    spec.rank()
                )));
            }
        }
        Ok(points)
    }
}

/// Aggregate for one (grid point, method).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub grid_value: usize,
    pub method: String,
    pub mean_overlap: f64,
    pub std_err: f64,
    pub theory: Option<f64>,
    pub bias: Option<f64>,
    /// Per-replicate overlaps, in replicate order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn row(&self, grid_value: usize, method: MethodTag) -> Option<&ResultRow> {
        let name = method.to_string();
        self.rows
            .iter()
            .find(|r| r.grid_value == grid_value && r.method == name)
    }
}

/// Replicate `rep` of grid point `point` draws from its own ChaCha stream, so
/// results do not depend on scheduling.
fn replicate_rng(seed: u64, point: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | rep as u64);
    rng
}

pub fn run_experiment<T: Real>(plan: &ExperimentPlan<T>) -> Result<ExperimentResult> {
    let points = plan.validate()?;
    let theories: Vec<Vec<Option<f64>>> = points
        .iter()
        .map(|(_, spec, _)| plan.methods.iter().map(|&m| theory(spec, m)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..plan.replicates).map(move |r| (p, r)))
        .collect();
    let overlaps: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(p, rep)| {
            let (_, spec, d) = &points[p];
            let mut rng = replicate_rng(plan.seed, p, rep);
            run_replicate(plan, spec, *d, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(points.len() * plan.methods.len());
    for (p, (grid_value, _, _)) in points.iter().enumerate() {
        for (k, method) in plan.methods.iter().enumerate() {
            let samples: Vec<f64> = (0..plan.replicates)
                .map(|rep| overlaps[p * plan.replicates + rep][k])
                .collect();
            let (mean, std_err) = mean_and_std_err(&samples);
            let theory = theories[p][k];
            rows.push(ResultRow {
                grid_value: *grid_value,
                method: method.to_string(),
                mean_overlap: mean,
                std_err,
                theory,
                bias: theory.map(|t| mean - t),
                samples,
            });
        }
    }
    Ok(ExperimentResult { rows })
}

fn mean_and_std_err(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn theory<T: Real>(spec: &ProblemSpec<T>, method: MethodTag) -> Result<Option<f64>> {
    let value = if spec.rank() > 1 {
        let rank_r = predict_rank_r(spec);
        match method.family {
            Family::StackSvd => rank_r.stacksvd.overlap,
            Family::SvdStack => rank_r.svdstack.overlap,
        }
    } else {
        match (method.family, method.weighting) {
            (Family::StackSvd, Weighting::Unweighted) => predict_unweighted_stacksvd(spec)?.overlap,
            (Family::StackSvd, Weighting::Binary) => predict_binary_stacksvd(spec, &SubsetRule::Auto)?.overlap,
            (Family::StackSvd, Weighting::Weighted) => predict_weighted_stacksvd(spec)?.overlap,
            (Family::SvdStack, Weighting::Unweighted) => predict_unweighted_svdstack(spec)?.overlap,
            (Family::SvdStack, Weighting::Binary) => predict_binary_svdstack(spec, &SubsetRule::Auto)?.overlap,
            (Family::SvdStack, Weighting::Weighted) => predict_weighted_svdstack(spec)?.overlap,
            (_, Weighting::Custom) => return Ok(None),
        }
    };
    Ok(Some(value.to_f64_lossy()))
}

/// Overlap `‖VᵀV̂‖_F²` of every planned method on one fresh draw.
fn run_replicate<T: Real>(
    plan: &ExperimentPlan<T>,
    spec: &ProblemSpec<T>,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let (tables, truth) = generate_tables(spec, d, &plan.noise, rng)?;
    let needs_svds = plan.weights == WeightSource::Estimated
        || plan.methods.iter().any(|m| m.family == Family::SvdStack);
    let svds = if needs_svds {
        Some(per_table_svds(&tables, spec.rank(), &plan.svd)?)
    } else {
        None
    };
    let working = match plan.weights {
        WeightSource::Oracle => spec.clone(),
        WeightSource::Estimated => estimated_spec(&tables, svds.as_deref().unwrap_or_default(), &plan.svd)?,
    };
    plan.methods
        .iter()
        .map(|&method| {
            let vectors = if spec.rank() > 1 {
                match method.family {
                    Family::StackSvd => stack_svd_rank_r_with(&tables, spec, &plan.svd)?.vectors,
                    Family::SvdStack => svd_stack_rank_r_from_svds(svds.as_deref().unwrap_or_default(), spec)?.vectors,
                }
            } else {
                let Some(weights) = rank_one_weights(&working, method)? else {
                    // Every table was discarded: no estimate, no alignment.
                    return Ok(0.0);
                };
                match method.family {
                    Family::StackSvd => stack_svd_with(&tables, &weights, 1, &plan.svd)?.vectors,
                    Family::SvdStack => {
                        svd_stack_from_svds(svds.as_deref().unwrap_or_default(), &weights.to_vec(), 1)?.vectors
                    }
                }
            };
            Ok(alignment_of(&vectors, &truth.v)?.frobenius.to_f64_lossy())
        })
        .collect()
}

/// Rank-one weights for `method`; `None` when a binary rule keeps no table.
fn rank_one_weights<T: Real>(spec: &ProblemSpec<T>, method: MethodTag) -> Result<Option<WeightVector<T>>> {
    let m = spec.m();
    let weights = match (method.family, method.weighting) {
        (_, Weighting::Unweighted) => WeightVector::ones(m),
        (family, Weighting::Binary) => {
            let report = match family {
                Family::StackSvd => predict_binary_stacksvd(spec, &SubsetRule::Auto)?,
                Family::SvdStack => predict_binary_svdstack(spec, &SubsetRule::Auto)?,
            };
            let subset = report.subset.unwrap_or_default();
            if subset.is_empty() {
                return Ok(None);
            }
            WeightVector::indicator(m, &subset)?
        }
        (Family::StackSvd, Weighting::Weighted) => optimal_weights_stacksvd(spec)?,
        (Family::SvdStack, Weighting::Weighted) => optimal_weights_svdstack(spec)?,
        (_, Weighting::Custom) => return Err(Error::InvalidPlan(format!("{method} is not runnable"))),
    };
    Ok(Some(weights))
}

/// Rank-one spec with estimated strengths and the tables' own aspect ratios.
fn estimated_spec<T: Real>(tables: &TableSet<T>, svds: &[SvdTriplet<T>], svd: &SvdOptions) -> Result<ProblemSpec<T>> {
    let opts = AutoWeightOptions {
        svd: svd.clone(),
        ..AutoWeightOptions::default()
    };
    let auto = auto_weights_from_svds(tables, svds, Family::StackSvd, &opts)?;
    let theta: Vec<T> = auto.estimates.iter().map(|e| e.theta).collect();
    ProblemSpec::rank_one(&theta, &tables.aspect_ratios())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(theta: &[f64], c: &[f64], d: usize) -> ExperimentPlan<f64> {
        ExperimentPlan::new(ProblemSpec::rank_one(theta, c).unwrap(), d)
    }

    #[test]
    fn zero_replicates_rejected() {
        let mut p = plan(&[2.0], &[1.0], 50);
        p.replicates = 0;
        assert!(matches!(run_experiment(&p), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn one_row_per_method() {
        let mut p = plan(&[2.0, 1.5], &[1.0, 0.5], 80);
        p.replicates = 1;
        let result = run_experiment(&p).unwrap();
        assert_eq!(result.rows.len(), 6);
        for row in &result.rows {
            assert_eq!(row.grid_value, 80);
            assert_eq!(row.std_err, 0.0);
            assert!(row.mean_overlap >= 0.0 && row.mean_overlap <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut p = plan(&[1.5, 1.2, 0.3], &[1.0, 0.7, 2.0], 60);
        p.grid = Grid::TableCount(vec![1, 2, 3]);
        p.replicates = 3;
        p.seed = 17;
        let a = run_experiment(&p).unwrap();
        let b = run_experiment(&p).unwrap();
        assert_eq!(a, b);
        p.seed = 18;
        assert_ne!(run_experiment(&p).unwrap(), a);
    }

    #[test]
    fn table_count_grid_bounds() {
        let mut p = plan(&[1.5, 1.2], &[1.0, 1.0], 40);
        p.grid = Grid::TableCount(vec![3]);
        assert!(matches!(run_experiment(&p), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn rank_r_restricted_to_weighted() {
        let spec = ProblemSpec::from_rows(&[vec![2.0, 1.5], vec![2.0, 1.5]], &[1.0, 1.0]).unwrap();
        let mut p = ExperimentPlan::new(spec, 60);
        p.replicates = 2;
        assert_eq!(run_experiment(&p).unwrap().rows.len(), 2);
        p.methods = DEFAULT_METHODS.to_vec();
        assert!(matches!(run_experiment(&p), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn standard_error_uses_sample_deviation() {
        let (mean, se) = mean_and_std_err(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }
}
