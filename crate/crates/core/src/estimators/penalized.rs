//! Lasso/ridge global-model estimators: cross-validated penalty weight,
//! Breslow baseline, counterfactual per-subject curves, standardization, and
//! step-sum AHRs. Point estimates only; the penalized fits carry no
//! intervals.

use super::{
    count_missing, EstimateSet, EstimatorError, EstimatorKind, EstimatorMetadata,
    SubgroupEstimate,
};
use crate::cox::{
    breslow_baseline, cox_cd_fit_warm, cv_lambda, forced_linear_predictor, lambda_grid, CoxFit,
    PenaltyKind,
};
use crate::data::{SubgroupSchema, TrialDataset};
use crate::design::{build_design, DesignMatrix};
use crate::marginal::{ahr_step, standardize_subgroup};
use crate::stepfun::StepSurvival;

#[derive(Debug, Clone, Copy)]
pub struct CvConfig {
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_folds: 10,
            seed: 0,
        }
    }
}

/// Standardized subgroup log AHRs of a fitted global Cox model.
pub(crate) fn standardized_step_ahrs(
    fit: &CoxFit,
    design: &DesignMatrix,
    dataset: &TrialDataset,
    schema: &SubgroupSchema,
    horizon: f64,
) -> Result<Vec<Result<f64, String>>, EstimatorError> {
    let baseline = breslow_baseline(fit, design, dataset)?;
    let curves: [Vec<StepSurvival>; 2] = [0u8, 1u8].map(|arm| {
        dataset
            .subjects
            .iter()
            .map(|s| {
                let lp = forced_linear_predictor(&fit.coefficients, schema, &s.covariates, arm);
                baseline.survival_with_scale(lp.exp())
            })
            .collect()
    });
    let mut out = Vec::with_capacity(schema.n_subgroups());
    for k in 0..schema.n_subgroups() {
        let members = dataset.subgroup_members(schema, k);
        if members.is_empty() {
            out.push(Err("empty subgroup".to_string()));
            continue;
        }
        let gather = |arm: usize| -> Vec<StepSurvival> {
            members.iter().map(|&i| curves[arm][i].clone()).collect()
        };
        let marginal_c = standardize_subgroup(&gather(0))?;
        let marginal_i = standardize_subgroup(&gather(1))?;
        match ahr_step(&marginal_c, &marginal_i, horizon) {
            Ok(ahr) => out.push(Ok(ahr.ln())),
            Err(e) => out.push(Err(e.to_string())),
        }
    }
    Ok(out)
}

fn assemble(
    estimator: EstimatorKind,
    ahrs: Vec<Result<f64, String>>,
    mut metadata: EstimatorMetadata,
) -> EstimateSet {
    let estimates: Vec<SubgroupEstimate> = ahrs
        .into_iter()
        .enumerate()
        .map(|(k, res)| match res {
            Ok(log_effect) => SubgroupEstimate {
                subgroup: k,
                estimator,
                log_effect: Some(log_effect),
                interval: None,
                interval_kind: None,
                note: None,
            },
            Err(note) => SubgroupEstimate::missing(k, estimator, note),
        })
        .collect();
    metadata.n_missing = count_missing(&estimates);
    EstimateSet {
        estimator,
        estimates,
        metadata,
    }
}

fn estimator_tag(kind: PenaltyKind) -> EstimatorKind {
    match kind {
        PenaltyKind::Lasso => EstimatorKind::Lasso,
        PenaltyKind::Ridge => EstimatorKind::Ridge,
        PenaltyKind::None => unreachable!("penalized estimators are lasso or ridge"),
    }
}

/// Global-model pipeline at a fixed penalty weight (no cross-validation).
pub fn penalized_pipeline(
    dataset: &TrialDataset,
    schema: &SubgroupSchema,
    kind: PenaltyKind,
    lambda: f64,
) -> Result<EstimateSet, EstimatorError> {
    let horizon = dataset.max_event_time().ok_or(EstimatorError::NoEvents)?;
    let design = build_design(dataset, schema);
    let init = vec![0.0; design.n_cols()];
    let fit = cox_cd_fit_warm(&design, dataset, kind, lambda, &init)?;
    let ahrs = standardized_step_ahrs(&fit, &design, dataset, schema, horizon)?;
    let metadata = EstimatorMetadata {
        lambda_star: Some(lambda),
        horizon: Some(horizon),
        ..EstimatorMetadata::default()
    };
    Ok(assemble(estimator_tag(kind), ahrs, metadata))
}

/// Cross-validated lasso or ridge estimator. The final fit descends the
/// regularization path with warm starts down to the selected weight.
pub fn estimate_penalized(
    dataset: &TrialDataset,
    schema: &SubgroupSchema,
    kind: PenaltyKind,
    cv: &CvConfig,
) -> Result<EstimateSet, EstimatorError> {
    let horizon = dataset.max_event_time().ok_or(EstimatorError::NoEvents)?;
    let design = build_design(dataset, schema);
    let selection = cv_lambda(&design, dataset, kind, cv.n_folds, cv.seed)?;
    let (grid, _) = lambda_grid(&design, dataset)?;
    let mut beta = vec![0.0; design.n_cols()];
    let mut fit = None;
    for &lambda in &grid {
        let f = cox_cd_fit_warm(&design, dataset, kind, lambda, &beta)?;
        beta = f.coefficients.clone();
        let done = lambda == selection.lambda_star;
        fit = Some(f);
        if done {
            break;
        }
    }
    let fit = fit.expect("lambda grid is never empty");
    let ahrs = standardized_step_ahrs(&fit, &design, dataset, schema, horizon)?;
    let metadata = EstimatorMetadata {
        lambda_star: Some(selection.lambda_star),
        cv_folds: Some(cv.n_folds),
        cv_rule: Some("min-deviance".to_string()),
        horizon: Some(horizon),
        ..EstimatorMetadata::default()
    };
    Ok(assemble(estimator_tag(kind), ahrs, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::cox_cd_fit;
    use crate::data::schema_from_counts;
    use crate::sim::{scenario_coeffs, simulate_trial, DEFAULT_SCENARIO_SEED};

    #[test]
    fn huge_lambda_collapses_to_the_zero_interaction_model() {
        let spec = scenario_coeffs(2, DEFAULT_SCENARIO_SEED).unwrap();
        let data = simulate_trial(&spec, 400, 120, 31).unwrap();
        let schema = crate::sim::table_s1_schema();
        let big = penalized_pipeline(&data, &schema, PenaltyKind::Lasso, 1e9).unwrap();

        // Reference: the same pipeline with the interaction block frozen at
        // zero (the profiled global model).
        let horizon = data.max_event_time().unwrap();
        let design = build_design(&data, &schema);
        let frozen = cox_cd_fit(&design, &data, PenaltyKind::Lasso, 1e300).unwrap();
        let reference =
            standardized_step_ahrs(&frozen, &design, &data, &schema, horizon).unwrap();
        for (est, reference) in big.estimates.iter().zip(reference) {
            let a = est.log_effect.unwrap();
            let b = reference.unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_lambda_matches_a_full_rank_reparameterization() {
        use crate::cox::cox_nr_fit;
        use crate::design::{ColumnRole, DesignMatrix};
        let schema = schema_from_counts(&[("x1", &["a", "b"]), ("x2", &["a", "b", "c"])]);
        let data = crate::testsupport::simulated_ph(
            300,
            &schema,
            -0.4,
            &[0.3, -0.3, 0.2, 0.0, -0.2],
            77,
        );
        let zero = penalized_pipeline(&data, &schema, PenaltyKind::Lasso, 0.0).unwrap();

        // Reduced design: treatment, drop-first mains, drop-first
        // interactions. Same model space, full rank.
        let n = data.len();
        let k_total = schema.n_subgroups();
        let mut roles = vec![ColumnRole::Treatment];
        let mut cols: Vec<Vec<u32>> = vec![(0..n)
            .filter(|&i| data.subjects[i].treatment == 1)
            .map(|i| i as u32)
            .collect()];
        let mut reduced_slots: Vec<usize> = Vec::new(); // subgroup k per reduced column
        for k in 0..k_total {
            let (j, l) = schema.subgroup_of(k);
            if l == 0 {
                continue;
            }
            let members: Vec<u32> = (0..n)
                .filter(|&i| data.subjects[i].covariates[j] == l)
                .map(|i| i as u32)
                .collect();
            roles.push(ColumnRole::Main(k));
            cols.push(members.clone());
            reduced_slots.push(k);
        }
        let n_mains = reduced_slots.len();
        for (idx, &k) in reduced_slots.clone().iter().enumerate() {
            let members: Vec<u32> = cols[1 + idx]
                .iter()
                .copied()
                .filter(|&i| data.subjects[i as usize].treatment == 1)
                .collect();
            roles.push(ColumnRole::Interaction(k));
            cols.push(members);
        }
        let design = DesignMatrix::from_columns(n, roles, cols);
        let fit = cox_nr_fit(&design, &data).unwrap();

        // Standardize the reduced model by hand.
        let horizon = data.max_event_time().unwrap();
        let baseline = crate::cox::breslow_baseline(&fit, &design, &data).unwrap();
        let lp_of = |cov: &[usize], arm: f64| {
            let mut lp = fit.coefficients[0] * arm;
            for (idx, &k) in reduced_slots.iter().enumerate() {
                let (j, l) = schema.subgroup_of(k);
                if cov[j] == l {
                    lp += fit.coefficients[1 + idx] + arm * fit.coefficients[1 + n_mains + idx];
                }
            }
            lp
        };
        for k in 0..k_total {
            let members = data.subgroup_members(&schema, k);
            let curves: Vec<Vec<crate::stepfun::StepSurvival>> = (0..2)
                .map(|arm| {
                    members
                        .iter()
                        .map(|&i| {
                            let lp = lp_of(&data.subjects[i].covariates, arm as f64);
                            baseline.survival_with_scale(lp.exp())
                        })
                        .collect()
                })
                .collect();
            let m_c = standardize_subgroup(&curves[0]).unwrap();
            let m_i = standardize_subgroup(&curves[1]).unwrap();
            let reference = ahr_step(&m_c, &m_i, horizon).unwrap().ln();
            let ours = zero.estimates[k].log_effect.unwrap();
            assert!(
                (ours - reference).abs() < 1e-4,
                "subgroup {k}: {ours} vs {reference}"
            );
        }
    }
}
