//! Experiment drivers behind the `subset-ic` subcommands, and the CSV/JSON
//! writers for their results.
//!
//! Candidate CSV columns:
//! `model,t_min,d_K,k,chi2,q_value,a0,a0_err,ic_subspace,ic_perfect,w_subspace,w_perfect`.
//! Grand-average CSV columns: `N,criterion,mean,err,stat_err,spread_err`, plus
//! a trailing `replication` column for replicated N-scaling runs. An optional
//! first line `# generated_unix=<seconds>` marks the run time.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::averaging::{
    average, candidate_weights, intercept_map, run_sweep, AveragedEstimate, CandidateResult,
    ScalingRow,
};
use crate::config::ExperimentConfig;
use crate::criteria::CriterionKind;
use crate::error::{Error, Result};
use crate::fitting::{out_of_sample_chi2, perfect_model_fit};
use crate::gaussdata::{generate_mock_data, rng_from_seed, GaussianSummary, SampleSet};
use crate::kl::{
    block_join, kl_gaussian, kl_monte_carlo, marginalize, projection_inequality_check,
    GaussianDist, McEstimate,
};
use crate::statcore::SpdMatrix;

pub const CANDIDATE_HEADER: [&str; 12] = [
    "model",
    "t_min",
    "d_K",
    "k",
    "chi2",
    "q_value",
    "a0",
    "a0_err",
    "ic_subspace",
    "ic_perfect",
    "w_subspace",
    "w_perfect",
];

pub const AVERAGE_HEADER: [&str; 6] = ["N", "criterion", "mean", "err", "stat_err", "spread_err"];

fn timestamp_line<W: Write>(out: &mut W) -> std::io::Result<()> {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(out, "# generated_unix={secs}")
}

/// Everything produced by one fixed-N sweep.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub data: SampleSet,
    pub candidates: Vec<CandidateResult>,
    pub w_subspace: Vec<f64>,
    pub w_perfect: Vec<f64>,
    pub averages: Vec<AveragedEstimate>,
}

/// Generates `config.n_samples` draws with seed `config.seed_base`, fits all
/// candidates and averages `a0` under the selected criteria.
pub fn run_sweep_experiment(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let grid = config.grid()?;
    let models = config.model_specs()?;
    let data = generate_mock_data(
        config.true_model(),
        &grid,
        config.noise_mean,
        config.noise_variance,
        config.n_samples,
        config.seed_base,
    )?;
    let candidates = run_sweep(&data, &models, &config.priors()?, &config.subsets()?)?;
    let map = intercept_map(&models);
    let averages = config
        .criterion
        .kinds()
        .into_iter()
        .map(|kind| average(&candidates, "a0", &map, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        w_subspace: candidate_weights(&candidates, CriterionKind::Subspace)?,
        w_perfect: candidate_weights(&candidates, CriterionKind::Perfect)?,
        data,
        candidates,
        averages,
    })
}

impl SweepReport {
    pub fn write_candidates_csv<W: Write>(&self, mut out: W, timestamp: bool) -> Result<()> {
        if timestamp {
            timestamp_line(&mut out)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CANDIDATE_HEADER)?;
        for (i, c) in self.candidates.iter().enumerate() {
            let mut row = vec![c.model_name.clone(), c.subset.label().to_string()];
            match c.fitted() {
                Some(f) => row.extend(
                    [
                        f.fit.d_kept as f64,
                        f.fit.k as f64,
                        f.fit.chi2_kept,
                        f.fit.q_value,
                        f.fit.params[0],
                        f.fit.param_error(0),
                        f.ic_subspace.value,
                        f.ic_perfect.value,
                        self.w_subspace[i],
                        self.w_perfect[i],
                    ]
                    .iter()
                    .map(|v| v.to_string()),
                ),
                None => {
                    row.push(c.subset.d_kept().to_string());
                    row.extend(std::iter::repeat_n("NaN".to_string(), 7));
                    row.extend(["0".to_string(), "0".to_string()]);
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_average_csv<W: Write>(&self, out: W, timestamp: bool) -> Result<()> {
        let n = self.data.n_samples();
        let rows: Vec<(usize, Option<usize>, &AveragedEstimate)> =
            self.averages.iter().map(|a| (n, None, a)).collect();
        write_average_rows(out, &rows, timestamp)
    }
}

/// Grand-average CSV; a `replication` column is added when any row has one.
pub fn write_average_rows<W: Write>(
    mut out: W,
    rows: &[(usize, Option<usize>, &AveragedEstimate)],
    timestamp: bool,
) -> Result<()> {
    if timestamp {
        timestamp_line(&mut out)?;
    }
    let with_rep = rows.iter().any(|r| r.1.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = AVERAGE_HEADER.to_vec();
    if with_rep {
        header.push("replication");
    }
    w.write_record(&header)?;
    for (n, rep, a) in rows {
        let mut rec = vec![
            n.to_string(),
            a.criterion_kind.to_string(),
            a.mean.to_string(),
            a.error().to_string(),
            a.stat_variance.sqrt().to_string(),
            a.spread_variance.sqrt().to_string(),
        ];
        if with_rep {
            rec.push(rep.unwrap_or(0).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// N-scaling rows; the replication column is written when `replicated`.
pub fn write_scaling_csv<W: Write>(
    out: W,
    rows: &[ScalingRow],
    replicated: bool,
    timestamp: bool,
) -> Result<()> {
    let rows: Vec<_> = rows
        .iter()
        .map(|r| {
            (
                r.n_samples,
                replicated.then_some(r.replication),
                &r.estimate,
            )
        })
        .collect();
    write_average_rows(out, &rows, timestamp)
}

// ---------------------------------------------------------------------------
// K-L demonstration

#[derive(Debug, Clone, Serialize)]
pub struct McCheck {
    pub estimate: f64,
    pub std_error: f64,
    pub closed_form: f64,
    pub pull: f64,
}

impl McCheck {
    fn new(est: McEstimate, closed_form: f64) -> Self {
        Self {
            estimate: est.estimate,
            std_error: est.std_error,
            closed_form,
            pull: est.pull(closed_form),
        }
    }

    pub fn passes(&self) -> bool {
        self.pull < 3.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub draws: usize,
    pub seed: u64,
    #[serde(rename = "I_f_g")]
    pub f_g: McCheck,
    #[serde(rename = "I_f1_h")]
    pub f1_h: McCheck,
    #[serde(rename = "I_f_hprime")]
    pub f_hprime: McCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionCheck {
    pub pair: String,
    pub keep: Vec<usize>,
    pub full: f64,
    pub projected: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KlDemoReport {
    #[serde(rename = "I_f_g")]
    pub f_g: f64,
    #[serde(rename = "I_f1_h")]
    pub f1_h: f64,
    #[serde(rename = "I_f_hprime")]
    pub f_hprime: f64,
    pub mc: Option<McReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim_check: Option<Vec<ProjectionCheck>>,
}

impl KlDemoReport {
    pub fn passes(&self) -> bool {
        let mc_ok = self
            .mc
            .as_ref()
            .is_none_or(|m| m.f_g.passes() && m.f1_h.passes() && m.f_hprime.passes());
        let dim_ok = self
            .dim_check
            .as_ref()
            .is_none_or(|c| c.iter().all(|p| p.holds));
        mc_ok && dim_ok
    }
}

/// The two-dimensional example: `f` with correlated covariance, candidates
/// `g` (full space), `h` (first coordinate only) and `h'` (h joined with the
/// second marginal of g).
pub struct KlDemoDistributions {
    pub f: GaussianDist,
    pub g: GaussianDist,
    pub f1: GaussianDist,
    pub h: GaussianDist,
    pub h_prime: GaussianDist,
}

impl KlDemoDistributions {
    pub fn new() -> Self {
        let f = GaussianDist::from_parts(&[0.0, 0.0], &[1.0, 0.5, 0.5, 2.0]).expect("SPD");
        let g = GaussianDist::from_parts(&[0.0, 0.0], &[1.1, 0.0, 0.0, 2.0]).expect("SPD");
        let h = GaussianDist::from_parts(&[0.0], &[1.5]).expect("SPD");
        let f1 = marginalize(&f, &[0]).expect("valid index");
        let g2 = marginalize(&g, &[1]).expect("valid index");
        let h_prime = block_join(&h, &g2);
        Self {
            f,
            g,
            f1,
            h,
            h_prime,
        }
    }
}

impl Default for KlDemoDistributions {
    fn default() -> Self {
        Self::new()
    }
}

/// Closed forms, plus Monte Carlo cross-checks unless `mc_draws == 0`.
pub fn kl_demo(mc_draws: usize, seed: u64, dim_check: bool) -> Result<KlDemoReport> {
    let d = KlDemoDistributions::new();
    let f_g = kl_gaussian(&d.f, &d.g)?;
    let f1_h = kl_gaussian(&d.f1, &d.h)?;
    let f_hprime = kl_gaussian(&d.f, &d.h_prime)?;
    let mc = if mc_draws == 0 {
        None
    } else {
        Some(McReport {
            draws: mc_draws,
            seed,
            f_g: McCheck::new(kl_monte_carlo(&d.f, &d.g, mc_draws, seed)?, f_g),
            f1_h: McCheck::new(
                kl_monte_carlo(&d.f1, &d.h, mc_draws, seed.wrapping_add(1))?,
                f1_h,
            ),
            f_hprime: McCheck::new(
                kl_monte_carlo(&d.f, &d.h_prime, mc_draws, seed.wrapping_add(2))?,
                f_hprime,
            ),
        })
    };
    let dim_check = if dim_check {
        let mut checks = Vec::new();
        for (name, other) in [("f,h'", &d.h_prime), ("f,g", &d.g)] {
            let (full, projected) = projection_inequality_check(&d.f, other, &[0])?;
            checks.push(ProjectionCheck {
                pair: name.into(),
                keep: vec![0],
                full,
                projected,
                holds: projected <= full + 1e-12,
            });
        }
        Some(checks)
    } else {
        None
    };
    Ok(KlDemoReport {
        f_g,
        f1_h,
        f_hprime,
        mc,
        dim_check,
    })
}

// ---------------------------------------------------------------------------
// Perfect-model bias check

#[derive(Debug, Clone, Serialize)]
pub struct BiasCheckReport {
    pub d_c: usize,
    pub n_replicas: usize,
    pub seed: u64,
    pub mean_out_of_sample_chi2: f64,
    pub std_error: f64,
    pub expected: f64,
    pub pull: f64,
    pub max_in_sample_chi2: f64,
    pub pass: bool,
}

/// Sample size behind each replica summary.
const BIAS_CHECK_N: usize = 320;

/// Cut-space Gaussian used by the bias check: the default true model on
/// `t = 1..=d_c` with multiplicative-noise variances and nearest-neighbour
/// correlation 0.3.
pub fn bias_check_population(d_c: usize) -> Result<GaussianDist> {
    let truth = ExperimentConfig::default().true_model();
    let mean: Vec<f64> = (1..=d_c).map(|t| truth(t as f64)).collect();
    let cov = DMatrix::from_fn(d_c, d_c, |i, j| {
        let rho = if i == j {
            1.0
        } else if i.abs_diff(j) == 1 {
            0.3
        } else {
            0.0
        };
        rho * mean[i] * mean[j]
    });
    GaussianDist::new(DVector::from_vec(mean), SpdMatrix::new(cov)?)
}

/// Monte Carlo over independent replica pairs: the perfect model is fitted to
/// the first replica and scored on the second. In-sample chi-squared is 0 by
/// construction; out-of-sample chi-squared should average `2 d_c`.
pub fn bias_check(d_c: usize, n_replicas: usize, seed: u64) -> Result<BiasCheckReport> {
    if d_c == 0 {
        return Err(Error::Config("d_c must be >= 1".into()));
    }
    if n_replicas < 100 {
        return Err(Error::Config(format!(
            "need at least 100 replicas, got {n_replicas}"
        )));
    }
    let population = bias_check_population(d_c)?;
    let cov = population.covariance().clone();
    // sample means of N draws are N(mu, cov / N)
    let stderr = GaussianDist::new(
        population.mean().clone(),
        cov.scaled(1.0 / BIAS_CHECK_N as f64)?,
    )?;
    let indices: Vec<usize> = (0..d_c).collect();
    let mut rng = rng_from_seed(seed);
    let mut chi2s = Vec::with_capacity(n_replicas);
    let mut max_in_sample: f64 = 0.0;
    for _ in 0..n_replicas {
        let fit_on = GaussianSummary::new(stderr.sample(&mut rng), cov.clone(), BIAS_CHECK_N)?;
        let score_on = GaussianSummary::new(stderr.sample(&mut rng), cov.clone(), BIAS_CHECK_N)?;
        let perfect = perfect_model_fit(&fit_on, &indices)?;
        let in_sample = out_of_sample_chi2(&perfect.params, &fit_on, &indices)?;
        max_in_sample = max_in_sample.max(in_sample).max(perfect.chi2_kept);
        chi2s.push(out_of_sample_chi2(&perfect.params, &score_on, &indices)?);
    }
    let n = chi2s.len() as f64;
    let mean = chi2s.iter().sum::<f64>() / n;
    let var = chi2s.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let expected = 2.0 * d_c as f64;
    let pull = (mean - expected).abs() / std_error;
    Ok(BiasCheckReport {
        d_c,
        n_replicas,
        seed,
        mean_out_of_sample_chi2: mean,
        std_error,
        expected,
        pull,
        max_in_sample_chi2: max_in_sample,
        pass: pull < 4.0 && max_in_sample == 0.0,
    })
}
