//! Experiment configuration: a flat TOML file whose every key is optional.
//!
//! ```toml
//! intercept = 1.80        # true model f_T(t) = intercept + slope (1 - t/pivot)
//! slope = -0.53
//! pivot = 16.0
//! t_first = 1             # integer grid t_first..=t_last
//! t_last = 15
//! noise_mean = 0.0        # y = (1 + eta) f_T, eta ~ N(noise_mean, noise_variance)
//! noise_variance = 1.0
//! t_min_first = 1         # candidate subsets t >= t_min
//! t_min_last = 12
//! prior_mean = 0.0
//! prior_width = 10.0
//! models = ["f0", "f1"]   # fN = polynomial of degree N in (1 - t/pivot)
//! n_samples = 320         # sample size for `sweep`
//! n_list = [40, 80, 160, 320, 640, 1280, 2400, 4800, 9600]
//! seed_base = 20230417
//! replications = 1
//! out_dir = "results"
//! criterion = "both"      # perfect | subspace | both
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::criteria::CriterionKind;
use crate::error::{Error, Result};
use crate::fitting::{ModelSpec, PriorSpec};
use crate::gaussdata::{CoordinateGrid, SubsetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionSelection {
    Perfect,
    Subspace,
    Both,
}

impl CriterionSelection {
    pub fn kinds(&self) -> Vec<CriterionKind> {
        match self {
            CriterionSelection::Perfect => vec![CriterionKind::Perfect],
            CriterionSelection::Subspace => vec![CriterionKind::Subspace],
            CriterionSelection::Both => CriterionKind::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for CriterionSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(Self::Perfect),
            "subspace" => Ok(Self::Subspace),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!(
                "criterion: expected perfect, subspace or both, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub intercept: f64,
    pub slope: f64,
    pub pivot: f64,
    pub t_first: i64,
    pub t_last: i64,
    pub noise_mean: f64,
    pub noise_variance: f64,
    pub t_min_first: i64,
    pub t_min_last: i64,
    pub prior_mean: f64,
    pub prior_width: f64,
    pub models: Vec<String>,
    pub n_samples: usize,
    pub n_list: Vec<usize>,
    pub seed_base: u64,
    pub replications: usize,
    pub out_dir: PathBuf,
    pub criterion: CriterionSelection,
}

pub const DEFAULT_N_LIST: [usize; 9] = [40, 80, 160, 320, 640, 1280, 2400, 4800, 9600];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            intercept: 1.80,
            slope: -0.53,
            pivot: 16.0,
            t_first: 1,
            t_last: 15,
            noise_mean: 0.0,
            noise_variance: 1.0,
            t_min_first: 1,
            t_min_last: 12,
            prior_mean: 0.0,
            prior_width: 10.0,
            models: vec!["f0".into(), "f1".into()],
            n_samples: 320,
            n_list: DEFAULT_N_LIST.to_vec(),
            seed_base: 20230417,
            replications: 1,
            out_dir: PathBuf::from("results"),
            criterion: CriterionSelection::Both,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("field `{field}`: {why}")));
        for (field, v) in [
            ("intercept", self.intercept),
            ("slope", self.slope),
            ("pivot", self.pivot),
            ("noise_mean", self.noise_mean),
            ("prior_mean", self.prior_mean),
        ] {
            if !v.is_finite() {
                return bad(field, format!("must be finite, got {v}"));
            }
        }
        if self.pivot == 0.0 {
            return bad("pivot", "must be nonzero".into());
        }
        if self.t_last < self.t_first {
            return bad(
                "t_last",
                format!("grid {}..={} is empty", self.t_first, self.t_last),
            );
        }
        if !self.noise_variance.is_finite() || self.noise_variance <= 0.0 {
            return bad(
                "noise_variance",
                format!("must be positive, got {}", self.noise_variance),
            );
        }
        if self.t_min_last < self.t_min_first {
            return bad(
                "t_min_last",
                format!("range {}..={} is empty", self.t_min_first, self.t_min_last),
            );
        }
        if self.t_min_last > self.t_last {
            return bad(
                "t_min_last",
                format!(
                    "{} leaves no grid points (t_last = {})",
                    self.t_min_last, self.t_last
                ),
            );
        }
        if !self.prior_width.is_finite() || self.prior_width <= 0.0 {
            return bad(
                "prior_width",
                format!("must be positive, got {}", self.prior_width),
            );
        }
        if self.models.is_empty() {
            return bad("models", "must name at least one model".into());
        }
        for m in &self.models {
            if parse_model_name(m).is_none() {
                return bad(
                    "models",
                    format!("unknown model '{m}' (expected f0, f1, f2, ...)"),
                );
            }
        }
        if self.n_samples < 2 {
            return bad("n_samples", format!("must be >= 2, got {}", self.n_samples));
        }
        if self.n_list.is_empty() {
            return bad("n_list", "must not be empty".into());
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 2) {
            return bad("n_list", format!("sample sizes must be >= 2, got {n}"));
        }
        if self.replications == 0 {
            return bad("replications", "must be >= 1".into());
        }
        Ok(())
    }

    pub fn true_model(&self) -> impl Fn(f64) -> f64 + Send + Sync + Copy {
        let (a0, a1, pivot) = (self.intercept, self.slope, self.pivot);
        move |t| a0 + a1 * (1.0 - t / pivot)
    }

    pub fn grid(&self) -> Result<CoordinateGrid> {
        CoordinateGrid::integer_range(self.t_first, self.t_last)
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        self.models
            .iter()
            .map(|m| {
                let degree = parse_model_name(m)
                    .ok_or_else(|| Error::Config(format!("field `models`: unknown model '{m}'")))?;
                Ok(ModelSpec::polynomial(degree, self.pivot))
            })
            .collect()
    }

    pub fn priors(&self) -> Result<Vec<PriorSpec>> {
        self.model_specs()?
            .iter()
            .map(|m| PriorSpec::uniform(m.n_params(), self.prior_mean, self.prior_width))
            .collect()
    }

    pub fn subsets(&self) -> Result<Vec<SubsetSpec>> {
        let grid = self.grid()?;
        (self.t_min_first..=self.t_min_last)
            .map(|t| SubsetSpec::from_t_min(&grid, t))
            .collect()
    }

    /// Seed for position `n_index` of the N list in replication `replication`.
    pub fn seed_for(&self, replication: usize, n_index: usize) -> u64 {
        self.seed_base
            .wrapping_add((replication * self.n_list.len()) as u64)
            .wrapping_add(n_index as u64)
    }
}

/// `f1` -> 1. Also accepts `f1-only` as a spelling of `f1`.
pub fn parse_model_name(name: &str) -> Option<usize> {
    let name = name.strip_suffix("-only").unwrap_or(name);
    name.strip_prefix('f')?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.subsets().unwrap().len(), 12);
        assert_eq!(c.grid().unwrap().len(), 15);
        let f = c.true_model();
        assert!((f(16.0) - 1.80).abs() < 1e-15);
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn partial_file_overrides() {
        let c = ExperimentConfig::from_toml_str(
            "n_samples = 80\nmodels = [\"f1\"]\ncriterion = \"perfect\"\n",
        )
        .unwrap();
        assert_eq!(c.n_samples, 80);
        assert_eq!(c.model_specs().unwrap().len(), 1);
        assert_eq!(c.criterion.kinds(), vec![CriterionKind::Perfect]);
    }

    #[test]
    fn malformed_configs_name_the_problem() {
        let err = ExperimentConfig::from_toml_str("n_samples = \"many\"").unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("n_samples")),
            "{err}"
        );
        let err = ExperimentConfig::from_toml_str("unknown_key = 3").unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("unknown_key")),
            "{err}"
        );
        let err = ExperimentConfig::from_toml_str("prior_width = -1.0").unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("prior_width")),
            "{err}"
        );
        let err = ExperimentConfig::from_toml_str("\n\nn_list = [40, 1]").unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("n_list")),
            "{err}"
        );
        let err = ExperimentConfig::from_toml_str("models = [\"g7\"]").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ExperimentConfig::from_toml_str("t_min_last = 16").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ExperimentConfig::from_file(Path::new("/nonexistent/config.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = ExperimentConfig::from_toml_str("n_samples = 80\nslope = = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn model_names() {
        assert_eq!(parse_model_name("f0"), Some(0));
        assert_eq!(parse_model_name("f1-only"), Some(1));
        assert_eq!(parse_model_name("x1"), None);
        assert_eq!(parse_model_name("f"), None);
    }

    #[test]
    fn seeds_are_distinct_across_n_and_replications() {
        let c = ExperimentConfig::default();
        let mut seeds: Vec<u64> = (0..5)
            .flat_map(|r| (0..9).map(move |i| (r, i)))
            .map(|(r, i)| c.seed_for(r, i))
            .collect();
        assert_eq!(c.seed_for(0, 3), c.seed_base + 3);
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 45);
    }
}
