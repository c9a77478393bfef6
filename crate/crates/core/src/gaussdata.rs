//! Mock data generation, sample summaries and subset restriction.
//!
//! Random numbers come from `ChaCha20Rng` seeded with `seed_from_u64`, and
//! Gaussian variates from `rand_distr::Normal`. Both are portable, so a given
//! seed yields the same data on every platform.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statcore::SpdMatrix;

/// Seeded generator used throughout the crate.
pub type Rng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Strictly increasing, nonempty list of coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateGrid {
    points: Vec<f64>,
}

impl CoordinateGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("coordinate grid is empty"));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("coordinate grid has non-finite points"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("coordinate grid must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// Integer grid `first, first+1, ..., last`.
    pub fn integer_range(first: i64, last: i64) -> Result<Self> {
        Self::new((first..=last).map(|t| t as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Independent draws on a grid: row i is observation y_i, column j is t_j.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    grid: CoordinateGrid,
    observations: DMatrix<f64>,
    seed: u64,
}

impl SampleSet {
    pub fn new(grid: CoordinateGrid, observations: DMatrix<f64>, seed: u64) -> Result<Self> {
        if observations.ncols() != grid.len() {
            return Err(Error::param(format!(
                "observations have {} columns but the grid has {} points",
                observations.ncols(),
                grid.len()
            )));
        }
        if observations.nrows() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: observations.nrows(),
            });
        }
        Ok(Self {
            grid,
            observations,
            seed,
        })
    }

    pub fn grid(&self) -> &CoordinateGrid {
        &self.grid
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_samples(&self) -> usize {
        self.observations.nrows()
    }

    pub fn dim(&self) -> usize {
        self.observations.ncols()
    }

    /// Long-format CSV dump with header `t,rep,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "rep", "y"])?;
        for rep in 0..self.n_samples() {
            for (j, t) in self.grid.points().iter().enumerate() {
                w.write_record(&[
                    t.to_string(),
                    rep.to_string(),
                    self.observations[(rep, j)].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `y_i(t) = (1 + eta_i(t)) f_T(t)` with i.i.d. Gaussian `eta`.
pub fn generate_mock_data(
    true_model: impl Fn(f64) -> f64,
    grid: &CoordinateGrid,
    noise_mean: f64,
    noise_variance: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SampleSet> {
    if !noise_variance.is_finite() || noise_variance <= 0.0 {
        return Err(Error::param(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    if n_samples < 2 {
        return Err(Error::param(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    let eta = Normal::new(noise_mean, noise_variance.sqrt())
        .map_err(|e| Error::param(format!("noise distribution: {e}")))?;
    let truth: Vec<f64> = grid.points().iter().map(|&t| true_model(t)).collect();
    let mut rng = rng_from_seed(seed);
    // row-major fill so the stream order does not depend on the matrix layout
    let mut obs = DMatrix::zeros(n_samples, grid.len());
    for i in 0..n_samples {
        for (j, f) in truth.iter().enumerate() {
            obs[(i, j)] = (1.0 + eta.sample(&mut rng)) * f;
        }
    }
    SampleSet::new(grid.clone(), obs, seed)
}

/// Sample mean, sample covariance and sample size.
///
/// The standard-error covariance `cov / n` is always derived on demand.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    mean: DVector<f64>,
    covariance: SpdMatrix,
    n_samples: usize,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, covariance: SpdMatrix, n_samples: usize) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::param(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.dim(),
                covariance.dim()
            )));
        }
        if n_samples < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: n_samples,
            });
        }
        Ok(Self {
            mean,
            covariance,
            n_samples,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.covariance
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Covariance of the sample mean, `cov / n`.
    pub fn stderr_covariance(&self) -> SpdMatrix {
        self.covariance
            .scaled(1.0 / self.n_samples as f64)
            .expect("positive rescaling keeps the matrix SPD")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SummaryRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: SummaryRecord = serde_json::from_str(s)?;
        rec.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct SummaryRecord {
    mean: Vec<f64>,
    /// row-major
    covariance: Vec<f64>,
    n_samples: usize,
}

impl From<&GaussianSummary> for SummaryRecord {
    fn from(s: &GaussianSummary) -> Self {
        let d = s.dim();
        let m = s.covariance.matrix();
        Self {
            mean: s.mean.iter().copied().collect(),
            covariance: (0..d)
                .flat_map(|i| (0..d).map(move |j| m[(i, j)]))
                .collect(),
            n_samples: s.n_samples,
        }
    }
}

impl TryFrom<SummaryRecord> for GaussianSummary {
    type Error = Error;

    fn try_from(rec: SummaryRecord) -> Result<Self> {
        let d = rec.mean.len();
        let cov = SpdMatrix::from_row_slice(d, &rec.covariance)?;
        GaussianSummary::new(DVector::from_vec(rec.mean), cov, rec.n_samples)
    }
}

/// Sample mean and unbiased (N - 1) sample covariance.
pub fn summarize(data: &SampleSet) -> Result<GaussianSummary> {
    let n = data.n_samples();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let obs = data.observations();
    let d = obs.ncols();
    let mean = DVector::from_fn(d, |j, _| obs.column(j).mean());
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        let ci = obs.column(i);
        for j in i..d {
            let cj = obs.column(j);
            let s: f64 = ci
                .iter()
                .zip(cj.iter())
                .map(|(a, b)| (a - mean[i]) * (b - mean[j]))
                .sum();
            let v = s / (n as f64 - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let covariance = SpdMatrix::new(cov).map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!(
            "sample covariance of {n} draws in {d} dimensions is not usable: {msg}"
        )),
        other => other,
    })?;
    GaussianSummary::new(mean, covariance, n)
}

/// Kept grid indices for one candidate data subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetSpec {
    kept_indices: Vec<usize>,
    label: i64,
}

impl SubsetSpec {
    pub fn new(kept_indices: Vec<usize>, label: i64) -> Result<Self> {
        if kept_indices.is_empty() {
            return Err(Error::param("subset keeps no points"));
        }
        let mut sorted = kept_indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("subset indices must be unique"));
        }
        Ok(Self {
            kept_indices,
            label,
        })
    }

    /// Keeps every grid point with `t >= t_min`; labelled by `t_min`.
    pub fn from_t_min(grid: &CoordinateGrid, t_min: i64) -> Result<Self> {
        let kept: Vec<usize> = grid
            .points()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= t_min as f64)
            .map(|(i, _)| i)
            .collect();
        if kept.is_empty() {
            return Err(Error::param(format!(
                "t_min = {t_min} leaves no grid points"
            )));
        }
        Self::new(kept, t_min)
    }

    pub fn full(grid: &CoordinateGrid) -> Self {
        let label = grid.points()[0].floor() as i64;
        Self::new((0..grid.len()).collect(), label).expect("grid is nonempty")
    }

    pub fn kept_indices(&self) -> &[usize] {
        &self.kept_indices
    }

    /// The t_min label.
    pub fn label(&self) -> i64 {
        self.label
    }

    pub fn d_kept(&self) -> usize {
        self.kept_indices.len()
    }

    /// Grid indices not kept, ascending.
    pub fn cut_indices(&self, d: usize) -> Vec<usize> {
        (0..d).filter(|i| !self.kept_indices.contains(i)).collect()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self.kept_indices.iter().find(|&&i| i >= d) {
            Some(bad) => Err(Error::param(format!(
                "subset index {bad} out of range for dimension {d}"
            ))),
            None => Ok(()),
        }
    }
}

/// Restricts mean and covariance to the kept indices (principal submatrix).
pub fn restrict(summary: &GaussianSummary, subset: &SubsetSpec) -> Result<GaussianSummary> {
    restrict_indices(summary, subset.kept_indices())
}

pub fn restrict_indices(summary: &GaussianSummary, indices: &[usize]) -> Result<GaussianSummary> {
    let d = summary.dim();
    if indices.is_empty() {
        return Err(Error::param("cannot restrict to an empty index set"));
    }
    if let Some(bad) = indices.iter().find(|&&i| i >= d) {
        return Err(Error::param(format!(
            "index {bad} out of range for dimension {d}"
        )));
    }
    let mean = DVector::from_fn(indices.len(), |i, _| summary.mean[indices[i]]);
    let cov = summary.covariance.principal_submatrix(indices)?;
    GaussianSummary::new(mean, cov, summary.n_samples)
}
