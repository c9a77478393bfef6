//! Information criteria for data-subset variation and model weights.
//!
//! Both criteria share the plug-in form `-2 ln p(M) + chi2_K + 2k` and differ
//! only in the penalty for the number of kept points:
//!
//! | kind       | penalty   |
//! |------------|-----------|
//! | subspace   | `-d_K`    |
//! | perfect    | `-2 d_K`  |
//!
//! The perfect-model criterion carries an extra `+d` that is the same for
//! every subset of a fixed data set. It is not stored; use
//! [`CriterionValue::with_total_dimension`] to show it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Subspace,
    Perfect,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 2] = [CriterionKind::Perfect, CriterionKind::Subspace];

    pub fn as_str(&self) -> &'static str {
        match self {
            CriterionKind::Subspace => "subspace",
            CriterionKind::Perfect => "perfect",
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subspace" => Ok(CriterionKind::Subspace),
            "perfect" => Ok(CriterionKind::Perfect),
            other => Err(Error::param(format!("unknown criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub kind: CriterionKind,
    pub value: f64,
    pub chi2: f64,
    pub k: usize,
    pub d_kept: usize,
    pub log_model_prior: f64,
}

impl CriterionValue {
    /// Value including the constant `+d` of the perfect-model form.
    pub fn with_total_dimension(&self, d: usize) -> f64 {
        match self.kind {
            CriterionKind::Perfect => self.value + d as f64,
            CriterionKind::Subspace => self.value,
        }
    }
}

fn check_inputs(chi2: f64, d_kept: usize, log_model_prior: f64) -> Result<()> {
    if !chi2.is_finite() || chi2 < 0.0 {
        return Err(Error::param(format!(
            "chi2 must be finite and >= 0, got {chi2}"
        )));
    }
    if d_kept == 0 {
        return Err(Error::param("at least one kept data point is required"));
    }
    if !log_model_prior.is_finite() || log_model_prior > 0.0 {
        return Err(Error::param(format!(
            "log model prior must be finite and <= 0, got {log_model_prior}"
        )));
    }
    Ok(())
}

/// `-2 ln p(M) + chi2_K + 2k - d_K`.
pub fn aic_subspace(
    chi2_kept: f64,
    k: usize,
    d_kept: usize,
    log_model_prior: f64,
) -> Result<CriterionValue> {
    check_inputs(chi2_kept, d_kept, log_model_prior)?;
    Ok(CriterionValue {
        kind: CriterionKind::Subspace,
        value: -2.0 * log_model_prior + chi2_kept + 2.0 * k as f64 - d_kept as f64,
        chi2: chi2_kept,
        k,
        d_kept,
        log_model_prior,
    })
}

/// `-2 ln p(M) + chi2_K + 2k - 2 d_K`.
pub fn aic_perfect(
    chi2_kept: f64,
    k: usize,
    d_kept: usize,
    log_model_prior: f64,
) -> Result<CriterionValue> {
    check_inputs(chi2_kept, d_kept, log_model_prior)?;
    Ok(CriterionValue {
        kind: CriterionKind::Perfect,
        value: -2.0 * log_model_prior + chi2_kept + 2.0 * k as f64 - 2.0 * d_kept as f64,
        chi2: chi2_kept,
        k,
        d_kept,
        log_model_prior,
    })
}

pub fn criterion(
    kind: CriterionKind,
    chi2_kept: f64,
    k: usize,
    d_kept: usize,
    log_model_prior: f64,
) -> Result<CriterionValue> {
    match kind {
        CriterionKind::Subspace => aic_subspace(chi2_kept, k, d_kept, log_model_prior),
        CriterionKind::Perfect => aic_perfect(chi2_kept, k, d_kept, log_model_prior),
    }
}

/// The criterion rewritten with `N_dof = d_K - k`, without the model-prior
/// term:
///
/// * subspace: `N_dof (chi2/N_dof - 1) + k`
/// * perfect: `N_dof (chi2/N_dof - 2)`
///
/// At `N_dof = 0` the expanded forms `chi2 + k` and `chi2` are returned.
pub fn ndof_form(ic: &CriterionValue) -> Result<f64> {
    if ic.d_kept < ic.k {
        return Err(Error::param(format!(
            "N_dof undefined: d_K = {} < k = {}",
            ic.d_kept, ic.k
        )));
    }
    let ndof = (ic.d_kept - ic.k) as f64;
    let k = ic.k as f64;
    let value = match (ic.kind, ndof > 0.0) {
        (CriterionKind::Subspace, true) => ndof * (ic.chi2 / ndof - 1.0) + k,
        (CriterionKind::Perfect, true) => ndof * (ic.chi2 / ndof - 2.0),
        (CriterionKind::Subspace, false) => ic.chi2 + k,
        (CriterionKind::Perfect, false) => ic.chi2,
    };
    Ok(value)
}

/// Normalized `exp(-IC/2)` weights, shifted by the minimum IC.
pub fn weights_from_values(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::param("no information criteria to weight"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::param(format!(
            "non-finite information criterion {bad}"
        )));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = values.iter().map(|v| (-(v - min) / 2.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub id: String,
    pub ic: CriterionValue,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub entries: Vec<WeightEntry>,
}

impl WeightTable {
    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.weight)
    }
}

pub fn model_weights(
    ics: impl IntoIterator<Item = (String, CriterionValue)>,
) -> Result<WeightTable> {
    let ics: Vec<_> = ics.into_iter().collect();
    let values: Vec<f64> = ics.iter().map(|(_, ic)| ic.value).collect();
    let weights = weights_from_values(&values)?;
    Ok(WeightTable {
        entries: ics
            .into_iter()
            .zip(weights)
            .map(|((id, ic), weight)| WeightEntry { id, ic, weight })
            .collect(),
    })
}

/// `ln(1/M)` for a flat prior over `M` candidate models.
pub fn flat_log_model_prior(n_models: usize) -> f64 {
    -(n_models.max(1) as f64).ln()
}
