//! Domain types: asymptotic problem instances, observed tables, weights,
//! estimates and ground truth, plus the alignment metrics that compare them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Asymptotic problem instance: per-table signal strengths and aspect ratios.
///
/// `theta` is `m × rank` with entry `(i, j)` the strength of component `j`
/// in table `i`; `c[i]` is the limit of `n_i / d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T: Real> {
    theta: DMatrix<T>,
    c: DVector<T>,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(theta: DMatrix<T>, c: DVector<T>) -> Result<Self> {
        validate_spec(&theta, &c)?;
        Ok(Self { theta, c })
    }

    /// Rank-one instance from per-table strengths.
    pub fn rank_one(theta: &[T], c: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(theta.len(), 1, theta), DVector::from_column_slice(c))
    }

    /// Instance from one row of strengths per table.
    pub fn from_rows(theta_rows: &[Vec<T>], c: &[T]) -> Result<Self> {
        let m = theta_rows.len();
        let rank = theta_rows.first().map_or(0, Vec::len);
        if theta_rows.iter().any(|row| row.len() != rank) {
            return Err(Error::shape("theta rows have differing lengths"));
        }
        let theta = DMatrix::from_fn(m, rank, |i, j| theta_rows[i][j]);
        Self::new(theta, DVector::from_column_slice(c))
    }

    pub fn m(&self) -> usize {
        self.theta.nrows()
    }

    pub fn rank(&self) -> usize {
        self.theta.ncols()
    }

    pub fn theta(&self) -> &DMatrix<T> {
        &self.theta
    }

    pub fn c(&self) -> &DVector<T> {
        &self.c
    }

    /// Strengths of component `j` across tables.
    pub fn theta_column(&self, j: usize) -> DVector<T> {
        self.theta.column(j).into_owned()
    }

    /// Rank-one view; fails for rank > 1.
    pub fn theta_vector(&self) -> Result<DVector<T>> {
        if self.rank() != 1 {
            return Err(Error::shape(format!(
                "operation needs a rank-one instance, got rank {}",
                self.rank()
            )));
        }
        Ok(self.theta_column(0))
    }

    /// Rank-one instance made of component `j`.
    pub fn component(&self, j: usize) -> Self {
        Self {
            theta: DMatrix::from_column_slice(self.m(), 1, self.theta.column(j).as_slice()),
            c: self.c.clone(),
        }
    }

    /// The first `m` tables.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m() {
            return Err(Error::shape(format!("prefix of length {m} from {} tables", self.m())));
        }
        Ok(Self {
            theta: self.theta.rows(0, m).into_owned(),
            c: self.c.rows(0, m).into_owned(),
        })
    }

    /// Tables selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::SubsetEmpty);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.m()) {
            return Err(Error::shape(format!("table index {bad} out of range for m = {}", self.m())));
        }
        let theta = DMatrix::from_fn(indices.len(), self.rank(), |r, j| self.theta[(indices[r], j)]);
        let c = DVector::from_fn(indices.len(), |r, _| self.c[indices[r]]);
        Ok(Self { theta, c })
    }

    /// Sample sizes `n_i = round(d c_i)` for a finite column dimension.
    pub fn row_counts(&self, d: usize) -> Vec<usize> {
        self.c
            .iter()
            .map(|&ci| (ci.to_f64_lossy() * d as f64).round() as usize)
            .collect()
    }
}

/// Checks the invariants of a problem instance given its raw parts.
pub fn validate_spec<T: Real>(theta: &DMatrix<T>, c: &DVector<T>) -> Result<()> {
    if theta.nrows() == 0 || theta.ncols() == 0 {
        return Err(Error::shape("theta must have at least one table and one component"));
    }
    if theta.nrows() != c.len() {
        return Err(Error::shape(format!(
            "theta has {} tables but c has {} entries",
            theta.nrows(),
            c.len()
        )));
    }
    for (i, &ci) in c.iter().enumerate() {
        if !(ci > T::zero()) || !ci.is_finite() {
            return Err(Error::NonPositiveAspectRatio {
                index: i,
                value: ci.to_f64_lossy(),
            });
        }
    }
    for j in 0..theta.ncols() {
        for i in 0..theta.nrows() {
            let t = theta[(i, j)];
            if !(t >= T::zero()) || !t.is_finite() {
                return Err(Error::NegativeTheta {
                    table: i,
                    component: j,
                    value: t.to_f64_lossy(),
                });
            }
        }
    }
    Ok(())
}

/// Observed matrices `X_1..X_m`, all with `d` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSet<T: Real> {
    tables: Vec<DMatrix<T>>,
    d: usize,
}

impl<T: Real> TableSet<T> {
    pub fn new(tables: Vec<DMatrix<T>>, d: usize) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::shape("a table set needs at least one table"));
        }
        for (i, x) in tables.iter().enumerate() {
            if x.ncols() != d {
                return Err(Error::shape(format!(
                    "table {i} has {} columns, expected d = {d}",
                    x.ncols()
                )));
            }
            if x.nrows() == 0 {
                return Err(Error::shape(format!("table {i} has no rows")));
            }
        }
        Ok(Self { tables, d })
    }

    /// Infers `d` from the first table.
    pub fn from_tables(tables: Vec<DMatrix<T>>) -> Result<Self> {
        let d = tables.first().map_or(0, |x| x.ncols());
        Self::new(tables, d)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[DMatrix<T>] {
        &self.tables
    }

    pub fn table(&self, i: usize) -> &DMatrix<T> {
        &self.tables[i]
    }

    pub fn into_tables(self) -> Vec<DMatrix<T>> {
        self.tables
    }

    /// Empirical aspect ratios `n_i / d`.
    pub fn aspect_ratios(&self) -> Vec<T> {
        let d = T::from_usize_lossy(self.d);
        self.tables
            .iter()
            .map(|x| T::from_usize_lossy(x.nrows()) / d)
            .collect()
    }

    pub fn total_rows(&self) -> usize {
        self.tables.iter().map(|x| x.nrows()).sum()
    }

    /// Tables selected by index.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::SubsetEmpty);
        }
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            out.push(
                self.tables
                    .get(i)
                    .ok_or_else(|| Error::shape(format!("table index {i} out of range")))?
                    .clone(),
            );
        }
        Self::new(out, self.d)
    }
}

/// Nonnegative per-table weights; one column per component.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T: Real> {
    weights: DMatrix<T>,
}

impl<T: Real> WeightVector<T> {
    pub fn new(weights: DMatrix<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no entries".into()));
        }
        if weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidWeights("entries must be finite and nonnegative".into()));
        }
        if !weights.iter().any(|&w| w > T::zero()) {
            return Err(Error::InvalidWeights("at least one entry must be positive".into()));
        }
        Ok(Self { weights })
    }

    /// Rank-one weights.
    pub fn from_slice(w: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(w.len(), 1, w))
    }

    pub fn ones(m: usize) -> Self {
        Self {
            weights: DMatrix::from_element(m, 1, T::one()),
        }
    }

    /// Indicator weights of a subset of `m` tables.
    pub fn indicator(m: usize, subset: &[usize]) -> Result<Self> {
        let mut w = DMatrix::zeros(m, 1);
        for &i in subset {
            if i >= m {
                return Err(Error::shape(format!("table index {i} out of range for m = {m}")));
            }
            w[(i, 0)] = T::one();
        }
        Self::new(w)
    }

    pub fn m(&self) -> usize {
        self.weights.nrows()
    }

    pub fn components(&self) -> usize {
        self.weights.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.weights
    }

    pub fn column(&self, j: usize) -> DVector<T> {
        self.weights.column(j).into_owned()
    }

    /// Weights of component 0 as a plain vector.
    pub fn to_vec(&self) -> Vec<T> {
        self.weights.column(0).iter().copied().collect()
    }

    /// Rescales so the largest entry is one.
    pub fn normalized(&self) -> Self {
        let max = self.weights.iter().fold(T::zero(), |a, &b| a.max(b));
        Self {
            weights: &self.weights / max,
        }
    }

    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(&self.weights * factor)
    }
}

/// Which estimator family produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    StackSvd,
    SvdStack,
}

/// How the tables were weighted before stacking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Unweighted,
    Binary,
    Weighted,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodTag {
    pub family: Family,
    pub weighting: Weighting,
}

impl MethodTag {
    pub fn new(family: Family, weighting: Weighting) -> Self {
        Self { family, weighting }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let family = match self.family {
            Family::StackSvd => "stack-svd",
            Family::SvdStack => "svd-stack",
        };
        let weighting = match self.weighting {
            Weighting::Unweighted => "unweighted",
            Weighting::Binary => "binary",
            Weighting::Weighted => "weighted",
            Weighting::Custom => "custom",
        };
        write!(f, "{family}/{weighting}")
    }
}

/// Estimated shared singular vectors, one unit-norm column per component.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate<T: Real> {
    pub vectors: DMatrix<T>,
    pub singular_values: DVector<T>,
    pub method: MethodTag,
    /// False when columns are only meaningful as a subspace (tied component
    /// strengths), in which case per-component overlaps should not be reported.
    pub componentwise: bool,
}

impl<T: Real> SubspaceEstimate<T> {
    pub fn new(mut vectors: DMatrix<T>, singular_values: DVector<T>, method: MethodTag) -> Self {
        canonicalize_signs(&mut vectors);
        Self {
            vectors,
            singular_values,
            method,
            componentwise: true,
        }
    }

    pub fn d(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.method.weighting = weighting;
        self
    }
}

/// Flips each column so that its first entry of largest magnitude is nonnegative.
pub fn canonicalize_signs<T: Real>(m: &mut DMatrix<T>) {
    for mut col in m.column_iter_mut() {
        let mut best = T::zero();
        let mut sign_negative = false;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign_negative = x < T::zero();
            }
        }
        if sign_negative {
            col.neg_mut();
        }
    }
}

/// True shared subspace and, when retained by a generator, the left factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub v: DMatrix<T>,
    pub u: Vec<DMatrix<T>>,
}

impl<T: Real> GroundTruth<T> {
    pub fn new(v: DMatrix<T>) -> Result<Self> {
        let gram = v.tr_mul(&v);
        let err = (gram - DMatrix::identity(v.ncols(), v.ncols())).amax();
        if err > T::attainable(1e-10) * T::lit(10.0) {
            return Err(Error::InvalidParameter(format!(
                "ground-truth columns are not orthonormal (error {:e})",
                err.to_f64_lossy()
            )));
        }
        Ok(Self { v, u: Vec::new() })
    }

    pub fn with_left_factors(mut self, u: Vec<DMatrix<T>>) -> Self {
        self.u = u;
        self
    }

    pub fn d(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport<T: Real> {
    /// `(v_j^T v̂_j)^2` for each component.
    pub overlaps: Vec<T>,
    /// `||V^T V̂||_F^2`.
    pub frobenius: T,
    /// `||Π_V̂ − Π_V||_F`.
    pub projection_distance: T,
}

pub fn alignment<T: Real>(
    estimate: &SubspaceEstimate<T>,
    truth: &GroundTruth<T>,
) -> Result<AlignmentReport<T>> {
    alignment_of(&estimate.vectors, &truth.v)
}

/// Alignment metrics between raw estimated columns and a true basis.
pub fn alignment_of<T: Real>(
    estimate: &DMatrix<T>,
    truth: &DMatrix<T>,
) -> Result<AlignmentReport<T>> {
    if estimate.nrows() != truth.nrows() || estimate.ncols() != truth.ncols() {
        return Err(Error::shape(format!(
            "estimate is {}x{} but truth is {}x{}",
            estimate.nrows(),
            estimate.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    let cross = truth.tr_mul(estimate);
    let overlaps = (0..truth.ncols()).map(|j| cross[(j, j)].powi(2)).collect();
    let frobenius = cross.norm_squared();
    let projection_distance = projection_distance(estimate, truth);
    Ok(AlignmentReport {
        overlaps,
        frobenius,
        projection_distance,
    })
}

/// `||Π_A − Π_B||_F` computed from orthonormal bases of the column spaces,
/// without forming `d × d` projectors.
pub fn projection_distance<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let qa = column_space_basis(a);
    let qb = column_space_basis(b);
    let ra = T::from_usize_lossy(qa.ncols());
    let rb = T::from_usize_lossy(qb.ncols());
    let overlap = qa.tr_mul(&qb).norm_squared();
    (ra + rb - overlap * T::lit(2.0)).max(T::zero()).sqrt()
}

/// Orthonormal basis of the column space, dropping numerically null directions.
pub(crate) fn column_space_basis<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    if a.ncols() == 0 {
        return a.clone();
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let smax = svd.singular_values.iter().fold(T::zero(), |m, &s| m.max(s));
    let cutoff = smax * T::eps() * T::from_usize_lossy(a.nrows().max(a.ncols())) * T::lit(4.0);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cutoff && smax > T::zero())
        .collect();
    u.select_columns(keep.iter())
}
