#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use subset_ic::gaussdata::{restrict, GaussianSummary, SubsetSpec};
use subset_ic::kl::GaussianDist;
use subset_ic::statcore::SpdMatrix;

pub const PIVOT: f64 = 16.0;

pub fn reference_truth(t: f64) -> f64 {
    1.80 - 0.53 * (1.0 - t / PIVOT)
}

/// Minimiser of `(y - X a)^T C^-1 (y - X a) + sum_j (a_j - mu_j)^2 / w_j^2`
/// for the polynomial basis `(1 - t/pivot)^j`, via explicit inverses:
/// `a = (X^T C^-1 X + W^-1)^-1 (X^T C^-1 y + W^-1 mu)`.
pub fn gls_oracle(
    summary: &GaussianSummary,
    points: &[f64],
    subset: &SubsetSpec,
    degree: usize,
    prior_mean: f64,
    prior_width: f64,
) -> Vec<f64> {
    let kept = restrict(summary, subset).unwrap();
    let c_inv = kept
        .stderr_covariance()
        .matrix()
        .clone()
        .try_inverse()
        .unwrap();
    let ts: Vec<f64> = subset.kept_indices().iter().map(|&i| points[i]).collect();
    let k = degree + 1;
    let x = DMatrix::from_fn(ts.len(), k, |i, j| (1.0 - ts[i] / PIVOT).powi(j as i32));
    let w_inv = DMatrix::identity(k, k) / (prior_width * prior_width);
    let lhs = x.transpose() * &c_inv * &x + &w_inv;
    let rhs = x.transpose() * &c_inv * kept.mean() + &w_inv * DVector::from_element(k, prior_mean);
    let a = lhs.try_inverse().unwrap() * rhs;
    a.iter().copied().collect()
}

pub fn random_spd<R: Rng>(rng: &mut R, d: usize) -> SpdMatrix {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose() + DMatrix::identity(d, d) * rng.random_range(0.1..1.0);
    SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

pub fn random_gaussian<R: Rng>(rng: &mut R, d: usize) -> GaussianDist {
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    GaussianDist::new(mean, random_spd(rng, d)).unwrap()
}

/// Nonempty, sorted, duplicate-free subset of `0..d`.
pub fn random_keep<R: Rng>(rng: &mut R, d: usize) -> Vec<usize> {
    loop {
        let keep: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.5)).collect();
        if !keep.is_empty() {
            return keep;
        }
    }
}
