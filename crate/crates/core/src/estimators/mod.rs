//! The six end-to-end subgroup treatment-effect estimators: per-subgroup
//! Cox fits without shrinkage, the population estimate replicated across
//! subgroups, lasso/ridge-penalized global models, the horseshoe posterior,
//! and BIC model averaging over single-interaction candidate models.
//!
//! Every estimator returns one estimate per subgroup on the log scale;
//! degenerate subgroups come back flagged missing rather than failing the
//! whole set.

mod horseshoe;
mod modelavg;
mod naive;
mod penalized;

pub use horseshoe::{estimate_horseshoe, HorseshoeEstimatorConfig};
pub use modelavg::estimate_model_averaging;
pub use naive::{estimate_naive, estimate_population};
pub use penalized::{estimate_penalized, penalized_pipeline, CvConfig};

use crate::bayes::SamplerError;
use crate::cox::FitError;
use crate::marginal::MarginalError;
use crate::spline::SplineError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("dataset has no uncensored events")]
    NoEvents,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Marginal(#[from] MarginalError),
    #[error("sampler diagnostics failed the R-hat gate: max split R-hat {0:.4}")]
    RhatGate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    Population,
    Lasso,
    Ridge,
    Horseshoe,
    ModelAveraging,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Population => "population",
            EstimatorKind::Lasso => "lasso",
            EstimatorKind::Ridge => "ridge",
            EstimatorKind::Horseshoe => "horseshoe",
            EstimatorKind::ModelAveraging => "avg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "naive" => Some(EstimatorKind::Naive),
            "population" => Some(EstimatorKind::Population),
            "lasso" => Some(EstimatorKind::Lasso),
            "ridge" => Some(EstimatorKind::Ridge),
            "horseshoe" => Some(EstimatorKind::Horseshoe),
            "avg" | "model_averaging" => Some(EstimatorKind::ModelAveraging),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Wald,
    Credible,
    Mixture,
}

/// One subgroup's estimate on the log scale. `log_effect` is `None` when
/// the subgroup was degenerate for this estimator (reason in `note`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupEstimate {
    pub subgroup: usize,
    pub estimator: EstimatorKind,
    pub log_effect: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub interval_kind: Option<IntervalKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SubgroupEstimate {
    pub fn missing(subgroup: usize, estimator: EstimatorKind, note: String) -> Self {
        SubgroupEstimate {
            subgroup,
            estimator,
            log_effect: None,
            interval: None,
            interval_kind: None,
            note: Some(note),
        }
    }
}

/// Sampler health summary attached to Bayesian estimates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McmcSummary {
    pub max_rhat_effects: f64,
    pub divergences: usize,
    pub mean_acceptance: f64,
}

/// Fit provenance surfaced in reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EstimatorMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bic_weights: Option<Vec<f64>>,
    /// Integration horizon (largest uncensored event time unless overridden).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub n_missing: usize,
}

/// All subgroup estimates from one estimator run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateSet {
    pub estimator: EstimatorKind,
    pub estimates: Vec<SubgroupEstimate>,
    pub metadata: EstimatorMetadata,
}

impl EstimateSet {
    pub fn log_effects(&self) -> Vec<Option<f64>> {
        self.estimates.iter().map(|e| e.log_effect).collect()
    }
}

pub(crate) fn count_missing(estimates: &[SubgroupEstimate]) -> usize {
    estimates.iter().filter(|e| e.log_effect.is_none()).count()
}
