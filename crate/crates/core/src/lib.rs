//! Information criteria for data-subset selection inside Bayesian
//! least-squares model averaging, and a Gaussian Kullback-Leibler toolkit.
//!
//! Two criteria compete for weighting fits that use different subsets of the
//! same data:
//!
//! * the *subspace* criterion `chi2_K + 2k - d_K`, which compares models on
//!   the kept data alone, and
//! * the *perfect-model* criterion `chi2_K + 2k - 2 d_K`, which keeps the full
//!   data space fixed by modelling the cut points with an interpolant.
//!
//! Modules:
//!
//! * [`gaussdata`]: mock data, sample summaries, subset restriction
//! * [`statcore`]: SPD algebra, chi-squared forms, incomplete gamma, Q-values
//! * [`fitting`]: Levenberg-Marquardt posterior-mode fits with Gaussian priors
//! * [`criteria`]: subspace/perfect criteria, degrees-of-freedom forms, weights
//! * [`averaging`]: candidate sweeps, grand averages, N-scaling studies
//! * [`kl`]: Gaussian K-L divergence, marginals, joins, Monte Carlo checks
//! * [`config`] and [`experiment`]: the experiment drivers used by the CLI
//!
//! ```
//! use subset_ic::kl::{kl_gaussian, GaussianDist};
//!
//! let f = GaussianDist::from_parts(&[0.0, 0.0], &[1.0, 0.5, 0.5, 2.0]).unwrap();
//! let g = GaussianDist::from_parts(&[0.0, 0.0], &[1.1, 0.0, 0.0, 2.0]).unwrap();
//! let d = kl_gaussian(&f, &g).unwrap();
//! assert!((d - 0.069).abs() < 5e-4);
//! ```

pub mod averaging;
pub mod config;
pub mod criteria;
pub mod error;
pub mod experiment;
pub mod fitting;
pub mod gaussdata;
pub mod kl;
pub mod statcore;

pub use error::{Error, Result};
