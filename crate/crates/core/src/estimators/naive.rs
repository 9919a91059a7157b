//! Subgroup-specific and population Cox estimators: treatment as the only
//! covariate, fit to one subgroup's subjects or to the whole trial.

use super::{
    count_missing, EstimateSet, EstimatorKind, EstimatorMetadata, IntervalKind, SubgroupEstimate,
};
use crate::cox::cox_nr_fit;
use crate::data::{SubgroupSchema, TrialDataset};
use crate::design::{ColumnRole, DesignMatrix};

const Z975: f64 = 1.959963984540054;

fn treatment_only_design(dataset: &TrialDataset) -> DesignMatrix {
    let members = dataset
        .subjects
        .iter()
        .enumerate()
        .filter_map(|(i, s)| (s.treatment == 1).then_some(i as u32))
        .collect();
    DesignMatrix::from_columns(dataset.len(), vec![ColumnRole::Treatment], vec![members])
}

fn arm_event_counts(dataset: &TrialDataset, indices: &[usize]) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for &i in indices {
        let s = &dataset.subjects[i];
        if s.event == 1 {
            counts[s.treatment as usize] += 1;
        }
    }
    counts
}

fn treatment_only_estimate(
    dataset: &TrialDataset,
    indices: &[usize],
    subgroup: usize,
    estimator: EstimatorKind,
) -> SubgroupEstimate {
    let counts = arm_event_counts(dataset, indices);
    if counts[0] == 0 || counts[1] == 0 {
        return SubgroupEstimate::missing(
            subgroup,
            estimator,
            format!(
                "no events in the {} arm",
                if counts[0] == 0 { "control" } else { "intervention" }
            ),
        );
    }
    let subjects: Vec<_> = indices.iter().map(|&i| dataset.subjects[i].clone()).collect();
    let subset = TrialDataset { subjects };
    let design = treatment_only_design(&subset);
    match cox_nr_fit(&design, &subset) {
        Ok(fit) => {
            let beta = fit.coefficients[0];
            let se = fit.covariance.as_ref().expect("NR fit carries covariance")[(0, 0)].sqrt();
            SubgroupEstimate {
                subgroup,
                estimator,
                log_effect: Some(beta),
                interval: Some((beta - Z975 * se, beta + Z975 * se)),
                interval_kind: Some(IntervalKind::Wald),
                note: None,
            }
        }
        Err(e) => SubgroupEstimate::missing(subgroup, estimator, e.to_string()),
    }
}

/// Standard subgroup estimator: one treatment-only Cox model per subgroup,
/// Wald 95% intervals. Subgroups without events in both arms are flagged
/// missing.
pub fn estimate_naive(dataset: &TrialDataset, schema: &SubgroupSchema) -> EstimateSet {
    let k_total = schema.n_subgroups();
    let estimates: Vec<SubgroupEstimate> = (0..k_total)
        .map(|k| {
            let members = dataset.subgroup_members(schema, k);
            if members.is_empty() {
                return SubgroupEstimate::missing(k, EstimatorKind::Naive, "empty subgroup".into());
            }
            treatment_only_estimate(dataset, &members, k, EstimatorKind::Naive)
        })
        .collect();
    let metadata = EstimatorMetadata {
        n_missing: count_missing(&estimates),
        ..EstimatorMetadata::default()
    };
    EstimateSet {
        estimator: EstimatorKind::Naive,
        estimates,
        metadata,
    }
}

/// Population estimator: the whole-trial treatment-only Cox fit, replicated
/// for every subgroup.
pub fn estimate_population(dataset: &TrialDataset, schema: &SubgroupSchema) -> EstimateSet {
    let all: Vec<usize> = (0..dataset.len()).collect();
    let template = treatment_only_estimate(dataset, &all, 0, EstimatorKind::Population);
    let estimates: Vec<SubgroupEstimate> = (0..schema.n_subgroups())
        .map(|k| {
            let mut e = template.clone();
            e.subgroup = k;
            e
        })
        .collect();
    let metadata = EstimatorMetadata {
        n_missing: count_missing(&estimates),
        ..EstimatorMetadata::default()
    };
    EstimateSet {
        estimator: EstimatorKind::Population,
        estimates,
        metadata,
    }
}
