//! Kullback-Leibler divergence between multivariate Gaussians.
//!
//! The closed form is
//!
//! ```text
//! I(f, g) = 1/2 [ tr(S_g^-1 S_f) + (m_g - m_f)^T S_g^-1 (m_g - m_f) - d + ln(det S_g / det S_f) ]
//! ```
//!
//! and [`kl_monte_carlo`] estimates the defining integral `E_f[ln f - ln g]`
//! by sampling, as an independent check.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussdata::{rng_from_seed, Rng};
use crate::statcore::{chi_squared, log_det, SpdMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Draws per Monte Carlo batch; each batch owns one ChaCha stream.
const MC_BATCH: usize = 16_384;

#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    covariance: SpdMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, covariance: SpdMatrix) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::param(format!(
                "mean has length {} but covariance is {}-dimensional",
                mean.len(),
                covariance.dim()
            )));
        }
        Ok(Self { mean, covariance })
    }

    /// Zero-mean Gaussian with the given covariance.
    pub fn centered(covariance: SpdMatrix) -> Self {
        Self {
            mean: DVector::zeros(covariance.dim()),
            covariance,
        }
    }

    pub fn from_parts(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let cov = SpdMatrix::from_row_slice(mean.len(), cov_row_major)?;
        Self::new(DVector::from_column_slice(mean), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.covariance
    }

    pub fn log_density(&self, z: &DVector<f64>) -> f64 {
        let r = z - &self.mean;
        let maha = self.covariance.whiten_vec(&r).norm_squared();
        -0.5 * (self.dim() as f64 * LN_2PI + log_det(&self.covariance) + maha)
    }

    /// `mean + L xi` with standard normal `xi`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + self.covariance.cholesky_factor() * xi
    }

    fn sampler(&self) -> (DMatrix<f64>, &DVector<f64>) {
        (self.covariance.cholesky_factor(), &self.mean)
    }
}

fn check_same_dim(f: &GaussianDist, g: &GaussianDist) -> Result<()> {
    if f.dim() != g.dim() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            f.dim(),
            g.dim()
        )));
    }
    Ok(())
}

/// Closed-form `I(f, g)`.
pub fn kl_gaussian(f: &GaussianDist, g: &GaussianDist) -> Result<f64> {
    check_same_dim(f, g)?;
    let d = f.dim() as f64;
    // tr(S_g^-1 S_f) = |L_g^-1 L_f|_F^2
    let trace = g
        .covariance
        .whiten(&f.covariance.cholesky_factor())
        .norm_squared();
    let maha = chi_squared(&(&g.mean - &f.mean), &g.covariance)?;
    let log_ratio = log_det(&g.covariance) - log_det(&f.covariance);
    Ok((0.5 * (trace + maha - d + log_ratio)).max(0.0))
}

/// `J(f, g) = I(f, g) + I(g, f)`.
pub fn symmetrized_kl(f: &GaussianDist, g: &GaussianDist) -> Result<f64> {
    Ok(kl_gaussian(f, g)? + kl_gaussian(g, f)?)
}

/// Exact marginal on `keep` (principal submatrix).
pub fn marginalize(dist: &GaussianDist, keep: &[usize]) -> Result<GaussianDist> {
    if keep.is_empty() {
        return Err(Error::param("marginal needs at least one kept index"));
    }
    let mut seen = keep.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("kept indices must be unique"));
    }
    let cov = dist.covariance.principal_submatrix(keep)?;
    let mean = DVector::from_fn(keep.len(), |i, _| dist.mean[keep[i]]);
    GaussianDist::new(mean, cov)
}

/// Independent joint of `a` and `b`: concatenated means, block-diagonal covariance.
pub fn block_join(a: &GaussianDist, b: &GaussianDist) -> GaussianDist {
    let (da, db) = (a.dim(), b.dim());
    let mut cov = DMatrix::zeros(da + db, da + db);
    cov.view_mut((0, 0), (da, da))
        .copy_from(a.covariance.matrix());
    cov.view_mut((da, da), (db, db))
        .copy_from(b.covariance.matrix());
    let mean = DVector::from_iterator(da + db, a.mean.iter().chain(b.mean.iter()).copied());
    let covariance = SpdMatrix::new(cov).expect("block diagonal of SPD blocks is SPD");
    GaussianDist { mean, covariance }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub draws: usize,
}

impl McEstimate {
    /// Distance from `target` in units of the standard error.
    pub fn pull(&self, target: f64) -> f64 {
        (self.estimate - target).abs() / self.std_error
    }
}

/// Per-batch running moments (Welford), merged with Chan's formula.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }
}

fn batch_rng(seed: u64, batch: usize) -> Rng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(batch as u64);
    rng
}

/// Sample mean of `statistic(z)` over `z ~ dist`, in parallel batches with one
/// ChaCha stream per batch, so the result does not depend on thread count.
pub fn monte_carlo_mean<F>(
    dist: &GaussianDist,
    n_draws: usize,
    seed: u64,
    statistic: F,
) -> McEstimate
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let (chol, mean) = dist.sampler();
    let d = dist.dim();
    let n_batches = n_draws.div_ceil(MC_BATCH);
    let total = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(seed, b);
            let count = MC_BATCH.min(n_draws - b * MC_BATCH);
            let mut m = Moments::default();
            for _ in 0..count {
                let xi = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let z = mean + &chol * xi;
                m.push(statistic(&z));
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    let var = if total.n > 1.0 {
        total.m2 / (total.n - 1.0)
    } else {
        0.0
    };
    McEstimate {
        estimate: total.mean,
        std_error: (var / total.n).sqrt(),
        draws: n_draws,
    }
}

/// Sampling estimate of `E_f[ln f(z) - ln g(z)]`.
///
/// The standard error is the i.i.d. one, `s / sqrt(n)` (identical to the
/// jackknife error of a sample mean).
pub fn kl_monte_carlo(
    f: &GaussianDist,
    g: &GaussianDist,
    n_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_same_dim(f, g)?;
    if n_draws < 100 {
        return Err(Error::param(format!(
            "need at least 100 draws, got {n_draws}"
        )));
    }
    Ok(monte_carlo_mean(f, n_draws, seed, |z| {
        f.log_density(z) - g.log_density(z)
    }))
}

/// `E_z[ln p(z)] = -(d/2) ln 2pi - (1/2) ln det S - d/2` for `z ~ p`.
pub fn expected_log_density(dist: &GaussianDist) -> f64 {
    let d = dist.dim() as f64;
    -0.5 * d * LN_2PI - 0.5 * log_det(&dist.covariance) - 0.5 * d
}

/// Sampling estimate of `E_z[ln p(z)]`.
pub fn expected_log_density_monte_carlo(
    dist: &GaussianDist,
    n_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_draws < 100 {
        return Err(Error::param(format!(
            "need at least 100 draws, got {n_draws}"
        )));
    }
    Ok(monte_carlo_mean(dist, n_draws, seed, |z| {
        dist.log_density(z)
    }))
}

/// Both sides of the additivity identity for independent joins:
/// `(I(fx+fy, gx+gy), I(fx, gx) + I(fy, gy))`.
pub fn additivity_check(
    fx: &GaussianDist,
    gx: &GaussianDist,
    fy: &GaussianDist,
    gy: &GaussianDist,
) -> Result<(f64, f64)> {
    let lhs = kl_gaussian(&block_join(fx, fy), &block_join(gx, gy))?;
    let rhs = kl_gaussian(fx, gx)? + kl_gaussian(fy, gy)?;
    Ok((lhs, rhs))
}

/// `(I(f, g), I(f_keep, g_keep))`; the projected value never exceeds the full one.
pub fn projection_inequality_check(
    f: &GaussianDist,
    g: &GaussianDist,
    keep: &[usize],
) -> Result<(f64, f64)> {
    let full = kl_gaussian(f, g)?;
    let projected = kl_gaussian(&marginalize(f, keep)?, &marginalize(g, keep)?)?;
    Ok((full, projected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f() -> GaussianDist {
        GaussianDist::from_parts(&[0.0, 0.0], &[1.0, 0.5, 0.5, 2.0]).unwrap()
    }

    fn g() -> GaussianDist {
        GaussianDist::from_parts(&[0.0, 0.0], &[1.1, 0.0, 0.0, 2.0]).unwrap()
    }

    fn h() -> GaussianDist {
        GaussianDist::from_parts(&[0.0], &[1.5]).unwrap()
    }

    #[test]
    fn closed_form_demo_values() {
        assert_eq!(kl_gaussian(&f(), &f()).unwrap(), 0.0);
        let fg = kl_gaussian(&f(), &g()).unwrap();
        assert!((fg - 0.069).abs() < 5e-4, "{fg}");
        // 1/2 (1/1.1 + 1 - 2 + ln(2.2/1.75))
        assert_relative_eq!(
            fg,
            0.5 * (1.0 / 1.1 - 1.0 + (2.2f64 / 1.75).ln()),
            epsilon = 1e-14
        );

        let f1 = marginalize(&f(), &[0]).unwrap();
        assert_eq!(f1.covariance().matrix()[(0, 0)], 1.0);
        let f1h = kl_gaussian(&f1, &h()).unwrap();
        assert!((f1h - 0.036).abs() < 5e-4, "{f1h}");

        let g2 = marginalize(&g(), &[1]).unwrap();
        let hp = block_join(&h(), &g2);
        assert_eq!(
            hp.covariance().matrix(),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, 2.0]))
        );
        let fhp = kl_gaussian(&f(), &hp).unwrap();
        assert!((fhp - 0.103).abs() < 5e-4, "{fhp}");
    }

    #[test]
    fn asymmetry() {
        let a = kl_gaussian(&f(), &g()).unwrap();
        let b = kl_gaussian(&g(), &f()).unwrap();
        assert!((a - b).abs() > 1e-3);
        assert_relative_eq!(symmetrized_kl(&f(), &g()).unwrap(), a + b);
    }

    #[test]
    fn mean_shift_term() {
        let a = GaussianDist::from_parts(&[0.0], &[2.0]).unwrap();
        let b = GaussianDist::from_parts(&[1.0], &[2.0]).unwrap();
        assert_relative_eq!(kl_gaussian(&a, &b).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(kl_gaussian(&f(), &h()), Err(Error::Parameter(_))));
        assert!(kl_monte_carlo(&f(), &h(), 1000, 0).is_err());
        assert!(kl_monte_carlo(&f(), &g(), 99, 0).is_err());
    }

    #[test]
    fn marginal_examples() {
        let all = marginalize(&f(), &[0, 1]).unwrap();
        assert_eq!(all.covariance().matrix(), f().covariance().matrix());
        let diag = GaussianDist::from_parts(
            &[1.0, 2.0, 3.0],
            &[1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 9.0],
        )
        .unwrap();
        let m = marginalize(&diag, &[1]).unwrap();
        assert_eq!(m.covariance().matrix()[(0, 0)], 4.0);
        assert_eq!(m.mean()[0], 2.0);
        assert!(marginalize(&f(), &[]).is_err());
        assert!(marginalize(&f(), &[2]).is_err());
        assert!(marginalize(&f(), &[0, 0]).is_err());
    }

    #[test]
    fn join_with_empty_is_identity() {
        let empty = GaussianDist::new(DVector::zeros(0), SpdMatrix::identity(0)).unwrap();
        let j = block_join(&f(), &empty);
        assert_eq!(j.covariance().matrix(), f().covariance().matrix());
        assert_eq!(j.mean(), f().mean());
    }

    #[test]
    fn expected_log_density_examples() {
        let std = GaussianDist::from_parts(&[0.0], &[1.0]).unwrap();
        assert_relative_eq!(
            expected_log_density(&std),
            -0.5 * LN_2PI - 0.5,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            expected_log_density(&std),
            -1.418_938_533_204_672_7,
            epsilon = 1e-14
        );
        let oracle = -LN_2PI - 0.5 * log_det(f().covariance()) - 1.0;
        assert_relative_eq!(expected_log_density(&f()), oracle, epsilon = 1e-14);
        assert_relative_eq!(expected_log_density(&f()), -3.117_684_960_4, epsilon = 1e-9);
        assert_relative_eq!(LN_2PI, (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-15);
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let a = kl_monte_carlo(&f(), &g(), 50_000, 9).unwrap();
        let b = kl_monte_carlo(&f(), &g(), 50_000, 9).unwrap();
        assert_eq!(a, b);
        let c = kl_monte_carlo(&f(), &g(), 50_000, 10).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn monte_carlo_self_divergence_is_zero() {
        let e = kl_monte_carlo(&f(), &f(), 10_000, 1).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert!(e.pull(0.0).is_nan() || e.pull(0.0) <= 3.0);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let est = kl_monte_carlo(&f(), &g(), 200_000, 3).unwrap();
        assert!(est.pull(kl_gaussian(&f(), &g()).unwrap()) < 3.0, "{est:?}");
    }

    #[test]
    fn monte_carlo_error_scales_as_inverse_sqrt() {
        let errs: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&n| kl_monte_carlo(&f(), &g(), n, 5).unwrap().std_error)
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            let expected = 10f64.sqrt();
            assert!(ratio > expected / 2.0 && ratio < expected * 2.0, "{ratio}");
        }
    }

    #[test]
    fn additivity_and_projection_examples() {
        let (lhs, rhs) = additivity_check(&f(), &g(), &h(), &h()).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);

        let (lhs, rhs) = additivity_check(&f(), &f(), &h(), &h()).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));

        // f is correlated, so the h' divergence does not split
        let f1 = marginalize(&f(), &[0]).unwrap();
        let f2 = marginalize(&f(), &[1]).unwrap();
        let g2 = marginalize(&g(), &[1]).unwrap();
        let hp = block_join(&h(), &g2);
        let split = kl_gaussian(&f1, &h()).unwrap() + kl_gaussian(&f2, &g2).unwrap();
        assert_eq!(kl_gaussian(&f2, &g2).unwrap(), 0.0);
        assert!((kl_gaussian(&f(), &hp).unwrap() - split).abs() > 0.05);

        let (full, projected) = projection_inequality_check(&f(), &hp, &[0]).unwrap();
        assert!(projected <= full);
        assert!((projected - 0.036).abs() < 5e-4 && (full - 0.103).abs() < 5e-4);

        let (full, projected) = projection_inequality_check(&f(), &g(), &[0, 1]).unwrap();
        assert_eq!(full, projected);

        let same_marginal = GaussianDist::from_parts(&[0.0, 0.0], &[1.0, 0.0, 0.0, 3.0]).unwrap();
        let (full, projected) = projection_inequality_check(&f(), &same_marginal, &[0]).unwrap();
        assert_eq!(projected, 0.0);
        assert!(full > 0.0);
    }
}
