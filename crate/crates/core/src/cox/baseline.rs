//! Breslow baseline hazard and per-subject counterfactual survival curves.

use super::partial::CoxData;
use super::{CoxFit, FitError};
use crate::data::{SubgroupSchema, TrialDataset};
use crate::design::DesignMatrix;
use crate::stepfun::{StepCumHazard, StepSurvival};

/// Breslow estimator of the cumulative baseline hazard: the increment at an
/// event time is the event count over the risk-set sum of `exp(lp)`.
pub fn breslow_baseline(
    fit: &CoxFit,
    design: &DesignMatrix,
    dataset: &TrialDataset,
) -> Result<StepCumHazard, FitError> {
    let data = CoxData::new(design, dataset)?;
    let eta = data.linear_predictor(&fit.coefficients);
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(FitError::NonFiniteLinearPredictor);
    }
    let w: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let blocks = data.event_blocks(&w);
    let times = blocks.iter().map(|&(t, _, _)| t).collect();
    let increments = blocks.iter().map(|&(_, d, s0)| d / s0).collect();
    Ok(StepCumHazard::new(times, increments).expect("breslow increments are nonnegative"))
}

/// Linear predictor of a covariate row under a forced treatment arm,
/// assuming the canonical `[treatment, mains, interactions]` column layout.
pub fn forced_linear_predictor(
    coefficients: &[f64],
    schema: &SubgroupSchema,
    covariates: &[usize],
    forced_treatment: u8,
) -> f64 {
    let k_total = schema.n_subgroups();
    debug_assert_eq!(coefficients.len(), 1 + 2 * k_total);
    let a = f64::from(forced_treatment);
    let mut lp = coefficients[0] * a;
    let mut offset = 0;
    for (j, v) in schema.variables.iter().enumerate() {
        let k = offset + covariates[j];
        lp += coefficients[1 + k] + a * coefficients[1 + k_total + k];
        offset += v.levels.len();
    }
    lp
}

/// Counterfactual survival curve `exp(-Lambda0(t) exp(lp))` for a subject
/// forced to the given arm; the treatment column and the interaction block
/// are overwritten by `forced_treatment`.
pub fn predict_survival(
    fit: &CoxFit,
    baseline: &StepCumHazard,
    schema: &SubgroupSchema,
    covariates: &[usize],
    forced_treatment: u8,
) -> StepSurvival {
    let lp = forced_linear_predictor(&fit.coefficients, schema, covariates, forced_treatment);
    baseline.survival_with_scale(lp.exp())
}
