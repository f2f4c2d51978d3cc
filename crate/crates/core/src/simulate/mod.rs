//! Synthetic data under the spiked model, the Monte Carlo harness and the
//! count-matrix pipeline.

mod counts;
mod experiment;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::haar_orthonormal;
use crate::model::{GroundTruth, ProblemSpec, TableSet};
use crate::scalar::Real;

pub use counts::{count_pipeline, held_out_truth, planted_counts, PlantedCounts};
pub use experiment::{
    run_experiment, ExperimentPlan, ExperimentResult, Grid, ResultRow, WeightSource, DEFAULT_METHODS,
};

/// Noise entry distribution; always rescaled to mean 0 and variance `1/d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// `Exp(1) − 1`.
    CenteredExponential,
    /// `±1` with equal probability.
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily) -> Self {
        Self { family }
    }

    /// One unit-variance draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => StandardNormal.sample(rng),
            NoiseFamily::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            NoiseFamily::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// An `n × d` noise matrix with entry variance `1/d`.
    pub fn matrix<T: Real, R: Rng + ?Sized>(&self, n: usize, d: usize, rng: &mut R) -> DMatrix<T> {
        let scale = 1.0 / (d as f64).sqrt();
        DMatrix::from_fn(n, d, |_, _| T::lit(self.sample(rng) * scale))
    }
}

/// Draws `X_i = U_i diag(θ_i) Vᵀ + E_i` for every table of `spec`, with
/// `n_i = round(d c_i)` rows, Haar `V` and `U_i`, and noise from `noise`.
///
/// Draw order: `V`, then for each table `U_i` followed by `E_i`.
pub fn generate_tables<T: Real, R: Rng + ?Sized>(
    spec: &ProblemSpec<T>,
    d: usize,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<(TableSet<T>, GroundTruth<T>)> {
    let r = spec.rank();
    let rows = spec.row_counts(d);
    if let Some(&n) = rows.iter().find(|&&n| n < r.max(1)) {
        return Err(Error::RankTooLarge { requested: r, max: n });
    }
    let v = haar_orthonormal::<T, R>(d, r, rng)?;
    let mut tables = Vec::with_capacity(spec.m());
    let mut lefts = Vec::with_capacity(spec.m());
    for (i, &n) in rows.iter().enumerate() {
        let u = haar_orthonormal::<T, R>(n, r, rng)?;
        let mut x = noise.matrix::<T, R>(n, d, rng);
        let scaled_u = DMatrix::from_fn(n, r, |a, j| u[(a, j)] * spec.theta()[(i, j)]);
        x.gemm(T::one(), &scaled_u, &v.transpose(), T::one());
        tables.push(x);
        lefts.push(u);
    }
    let truth = GroundTruth::new(v)?.with_left_factors(lefts);
    Ok((TableSet::new(tables, d)?, truth))
}

/// [`generate_tables`] from a seed.
pub fn generate_tables_seeded<T: Real>(
    spec: &ProblemSpec<T>,
    d: usize,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<(TableSet<T>, GroundTruth<T>)> {
    generate_tables(spec, d, noise, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Random instance: `c^{1/4} ~ Exp(1) + 0.1` and `θ = c^{1/4} e^W` with
/// `W ~ N(μ, 0.1²)`, independently per table.
pub fn sample_random_spec<T: Real, R: Rng + ?Sized>(mu: f64, m: usize, rng: &mut R) -> Result<ProblemSpec<T>> {
    if m == 0 {
        return Err(Error::InvalidParameter("a random spec needs at least one table".into()));
    }
    let w = Normal::new(mu, 0.1).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut theta = Vec::with_capacity(m);
    let mut c = Vec::with_capacity(m);
    for _ in 0..m {
        let e: f64 = Exp1.sample(rng);
        let root = e + 0.1;
        c.push(T::lit(root.powi(4)));
        theta.push(T::lit(root * w.sample(rng).exp()));
    }
    ProblemSpec::rank_one(&theta, &c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for family in [NoiseFamily::Gaussian, NoiseFamily::CenteredExponential, NoiseFamily::Rademacher] {
            let spec = NoiseSpec::new(family);
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| spec.sample(&mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 0.01, "{family:?} mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "{family:?} variance {var}");
        }
    }

    #[test]
    fn pure_noise_energy() {
        let spec = ProblemSpec::rank_one(&[0.0, 0.0], &[1.0, 0.5]).unwrap();
        let (tables, _) = generate_tables_seeded::<f64>(&spec, 1000, &NoiseSpec::default(), 4).unwrap();
        for x in tables.tables() {
            let n = x.nrows() as f64;
            assert!((x.norm_squared() - n).abs() / n < 0.05);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let spec = ProblemSpec::rank_one(&[1.0, 2.0], &[0.5, 1.0]).unwrap();
        let a = generate_tables_seeded::<f64>(&spec, 60, &NoiseSpec::default(), 9).unwrap();
        let b = generate_tables_seeded::<f64>(&spec, 60, &NoiseSpec::default(), 9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.table(0).nrows(), 30);
    }

    #[test]
    fn too_few_rows_rejected() {
        let spec = ProblemSpec::from_rows(&[vec![1.0, 1.0, 1.0]], &[0.01]).unwrap();
        assert!(matches!(
            generate_tables_seeded::<f64>(&spec, 100, &NoiseSpec::default(), 0),
            Err(Error::RankTooLarge { requested: 3, max: 1 })
        ));
    }

    #[test]
    fn random_spec_support_and_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = sample_random_spec::<f64, _>(0.0, 10_000, &mut rng).unwrap();
        let mut ratios: Vec<f64> = (0..spec.m())
            .map(|i| spec.theta()[(i, 0)] / spec.c()[i].powf(0.25))
            .collect();
        assert!(spec.c().iter().all(|&c| c > 0.1f64.powi(4)));
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ratios[ratios.len() / 2];
        assert!((median - 1.0).abs() < 0.05);
    }
}
