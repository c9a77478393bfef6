//! Model and data-subset averaging over a grid of candidate fits.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::criteria::{
    aic_perfect, aic_subspace, flat_log_model_prior, weights_from_values, CriterionKind,
    CriterionValue,
};
use crate::error::{Error, Result};
use crate::fitting::{fit, FitResult, ModelSpec, PriorSpec};
use crate::gaussdata::{
    generate_mock_data, summarize, CoordinateGrid, GaussianSummary, SampleSet, SubsetSpec,
};

#[derive(Debug, Clone)]
pub struct FittedCandidate {
    pub fit: FitResult,
    pub ic_subspace: CriterionValue,
    pub ic_perfect: CriterionValue,
}

impl FittedCandidate {
    pub fn ic(&self, kind: CriterionKind) -> &CriterionValue {
        match kind {
            CriterionKind::Subspace => &self.ic_subspace,
            CriterionKind::Perfect => &self.ic_perfect,
        }
    }
}

/// One (model, subset) pair. Failed fits keep their diagnostic and get zero
/// weight.
#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub model_name: String,
    pub subset: SubsetSpec,
    pub outcome: std::result::Result<FittedCandidate, String>,
}

impl CandidateResult {
    pub fn fitted(&self) -> Option<&FittedCandidate> {
        self.outcome.as_ref().ok()
    }

    pub fn id(&self) -> String {
        format!("{}:{}", self.model_name, self.subset.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedEstimate {
    pub parameter: String,
    pub mean: f64,
    pub variance: f64,
    pub stat_variance: f64,
    pub spread_variance: f64,
    pub criterion_kind: CriterionKind,
}

impl AveragedEstimate {
    pub fn error(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Which parameter index holds the averaged quantity in each model.
pub type ParameterMap = HashMap<String, usize>;

/// Weights over all candidates under `kind`; failed fits get 0.
pub fn candidate_weights(candidates: &[CandidateResult], kind: CriterionKind) -> Result<Vec<f64>> {
    let values: Vec<f64> = candidates
        .iter()
        .filter_map(|c| c.fitted().map(|f| f.ic(kind).value))
        .collect();
    if values.is_empty() {
        return Err(Error::param("no successfully fitted candidates"));
    }
    let mut fitted_weights = weights_from_values(&values)?.into_iter();
    Ok(candidates
        .iter()
        .map(|c| {
            if c.fitted().is_some() {
                fitted_weights.next().unwrap()
            } else {
                0.0
            }
        })
        .collect())
}

/// Weighted moments of one shared parameter:
/// `mean = sum w mu`, `stat = sum w sigma^2`, `spread = sum w mu^2 - mean^2`.
pub fn average(
    candidates: &[CandidateResult],
    parameter: &str,
    parameter_index: &ParameterMap,
    kind: CriterionKind,
) -> Result<AveragedEstimate> {
    if candidates.is_empty() {
        return Err(Error::param("cannot average an empty candidate list"));
    }
    let weights = candidate_weights(candidates, kind)?;
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut stat = 0.0;
    for (c, w) in candidates.iter().zip(&weights) {
        let Some(fitted) = c.fitted() else { continue };
        let idx = *parameter_index.get(&c.model_name).ok_or_else(|| {
            Error::Mapping(format!(
                "model {} has no entry for parameter {parameter}",
                c.model_name
            ))
        })?;
        if idx >= fitted.fit.params.len() {
            return Err(Error::Mapping(format!(
                "parameter {parameter} maps to index {idx} but model {} has {} parameters",
                c.model_name,
                fitted.fit.params.len()
            )));
        }
        let mu = fitted.fit.params[idx];
        mean += w * mu;
        second += w * mu * mu;
        stat += w * fitted.fit.param_cov.matrix()[(idx, idx)];
    }
    let spread = (second - mean * mean).max(0.0);
    Ok(AveragedEstimate {
        parameter: parameter.to_string(),
        mean,
        variance: stat + spread,
        stat_variance: stat,
        spread_variance: spread,
        criterion_kind: kind,
    })
}

fn fit_candidate(
    summary: &GaussianSummary,
    grid: &CoordinateGrid,
    subset: &SubsetSpec,
    model: &ModelSpec,
    prior: &PriorSpec,
    log_model_prior: f64,
) -> Result<FittedCandidate> {
    let fit = fit(summary, grid, subset, model, prior)?;
    let ic_subspace = aic_subspace(fit.chi2_kept, fit.k, fit.d_kept, log_model_prior)?;
    let ic_perfect = aic_perfect(fit.chi2_kept, fit.k, fit.d_kept, log_model_prior)?;
    Ok(FittedCandidate {
        fit,
        ic_subspace,
        ic_perfect,
    })
}

/// Fits every (model, subset) pair of an existing summary, model-major and in
/// the given subset order. Fits run in parallel; the output order is fixed.
pub fn sweep_summary(
    summary: &GaussianSummary,
    grid: &CoordinateGrid,
    models: &[ModelSpec],
    priors: &[PriorSpec],
    subsets: &[SubsetSpec],
) -> Result<Vec<CandidateResult>> {
    if models.is_empty() {
        return Err(Error::param("no models to fit"));
    }
    if subsets.is_empty() {
        return Err(Error::param("no data subsets to fit"));
    }
    if priors.len() != models.len() {
        return Err(Error::param(format!(
            "{} models but {} priors",
            models.len(),
            priors.len()
        )));
    }
    let log_model_prior = flat_log_model_prior(models.len());
    let pairs: Vec<(usize, &SubsetSpec)> = (0..models.len())
        .flat_map(|m| subsets.iter().map(move |s| (m, s)))
        .collect();
    Ok(pairs
        .into_par_iter()
        .map(|(m, subset)| CandidateResult {
            model_name: models[m].name().to_string(),
            subset: subset.clone(),
            outcome: fit_candidate(
                summary,
                grid,
                subset,
                &models[m],
                &priors[m],
                log_model_prior,
            )
            .map_err(|e| e.to_string()),
        })
        .collect())
}

/// Summarizes `data` and fits every (model, subset) pair.
pub fn run_sweep(
    data: &SampleSet,
    models: &[ModelSpec],
    priors: &[PriorSpec],
    subsets: &[SubsetSpec],
) -> Result<Vec<CandidateResult>> {
    let summary = summarize(data)?;
    sweep_summary(&summary, data.grid(), models, priors, subsets)
}

/// Weight-weighted mean of the t_min labels under `kind`.
pub fn mean_t_min(candidates: &[CandidateResult], kind: CriterionKind) -> Result<f64> {
    let w = candidate_weights(candidates, kind)?;
    Ok(candidates
        .iter()
        .zip(w)
        .map(|(c, w)| w * c.subset.label() as f64)
        .sum())
}

/// Index of the intercept `a0` in every polynomial model of the config.
pub fn intercept_map(models: &[ModelSpec]) -> ParameterMap {
    models.iter().map(|m| (m.name().to_string(), 0)).collect()
}

/// One grand-average row of an N-scaling study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n_samples: usize,
    pub replication: usize,
    pub seed: u64,
    pub estimate: AveragedEstimate,
}

/// Mock data, sweep and grand average of `a0` for every N in the config,
/// repeated `config.replications` times. Data for replication `r` and list
/// position `i` use seed `seed_base + r * len(n_list) + i`.
///
/// Rows are ordered by replication, then N, then criterion.
pub fn n_scaling_study(config: &ExperimentConfig) -> Result<Vec<ScalingRow>> {
    config.validate()?;
    let grid = config.grid()?;
    let models = config.model_specs()?;
    let priors = config.priors()?;
    let subsets = config.subsets()?;
    let map = intercept_map(&models);
    let kinds = config.criterion.kinds();
    let truth = config.true_model();
    let jobs: Vec<(usize, usize, usize)> = (0..config.replications)
        .flat_map(|r| {
            config
                .n_list
                .iter()
                .enumerate()
                .map(move |(i, &n)| (r, i, n))
        })
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(r, i, n)| -> Result<Vec<ScalingRow>> {
            let seed = config.seed_for(r, i);
            let data = generate_mock_data(
                truth,
                &grid,
                config.noise_mean,
                config.noise_variance,
                n,
                seed,
            )?;
            let candidates = run_sweep(&data, &models, &priors, &subsets)?;
            kinds
                .iter()
                .map(|&kind| {
                    Ok(ScalingRow {
                        n_samples: n,
                        replication: r,
                        seed,
                        estimate: average(&candidates, "a0", &map, kind)?,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}
