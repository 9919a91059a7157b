//! Model averaging over single-interaction candidate Cox models: BIC
//! posterior weights, subgroup effects `beta0 + w_kp beta_p` with overlap
//! weights, and numeric quantiles of the normal-mixture distribution.

use super::{
    count_missing, EstimateSet, EstimatorError, EstimatorKind, EstimatorMetadata, IntervalKind,
    SubgroupEstimate,
};
use crate::cox::{cox_nr_fit, cox_partial_loglik};
use crate::data::{SubgroupSchema, TrialDataset};
use crate::design::{ColumnRole, DesignMatrix};
use statrs::distribution::{ContinuousCDF, Normal};

/// One converged candidate model: the treatment effect, its interaction
/// coefficient, and their covariance.
#[derive(Debug, Clone)]
struct Candidate {
    beta0: f64,
    beta_p: f64,
    var0: f64,
    varp: f64,
    cov: f64,
    bic: f64,
}

/// Reduced full-rank design for candidate `p`: treatment, drop-first-level
/// main effects, and the single interaction `s_p z`.
fn candidate_design(
    dataset: &TrialDataset,
    schema: &SubgroupSchema,
    p: usize,
) -> DesignMatrix {
    let n = dataset.len();
    let treated: Vec<u32> = (0..n)
        .filter(|&i| dataset.subjects[i].treatment == 1)
        .map(|i| i as u32)
        .collect();
    let mut roles = vec![ColumnRole::Treatment];
    let mut cols = vec![treated];
    for k in 0..schema.n_subgroups() {
        let (j, l) = schema.subgroup_of(k);
        if l == 0 {
            continue;
        }
        roles.push(ColumnRole::Main(k));
        cols.push(
            (0..n)
                .filter(|&i| dataset.subjects[i].covariates[j] == l)
                .map(|i| i as u32)
                .collect(),
        );
    }
    let (j, l) = schema.subgroup_of(p);
    roles.push(ColumnRole::Interaction(p));
    cols.push(
        (0..n)
            .filter(|&i| {
                dataset.subjects[i].covariates[j] == l && dataset.subjects[i].treatment == 1
            })
            .map(|i| i as u32)
            .collect(),
    );
    DesignMatrix::from_columns(n, roles, cols)
}

fn normal_mixture_quantile(
    weights: &[f64],
    means: &[f64],
    sds: &[f64],
    prob: f64,
) -> f64 {
    let norm = Normal::new(0.0, 1.0).unwrap();
    let cdf = |x: f64| -> f64 {
        weights
            .iter()
            .zip(means)
            .zip(sds)
            .map(|((w, m), s)| {
                if *w == 0.0 {
                    0.0
                } else if *s <= 1e-12 {
                    if x >= *m {
                        *w
                    } else {
                        0.0
                    }
                } else {
                    w * norm.cdf((x - m) / s)
                }
            })
            .sum()
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ((w, m), s) in weights.iter().zip(means).zip(sds) {
        if *w > 0.0 {
            lo = lo.min(m - 12.0 * s.max(1e-6));
            hi = hi.max(m + 12.0 * s.max(1e-6));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// BIC model averaging over the K single-interaction candidate models with
/// equal prior weights. Candidates that fail to converge are dropped with
/// zero weight and a note on the estimate set.
pub fn estimate_model_averaging(
    dataset: &TrialDataset,
    schema: &SubgroupSchema,
) -> Result<EstimateSet, EstimatorError> {
    let k_total = schema.n_subgroups();
    let n_events = dataset
        .subjects
        .iter()
        .filter(|s| s.event == 1)
        .count();
    if n_events == 0 {
        return Err(EstimatorError::NoEvents);
    }

    let mut candidates: Vec<Option<Candidate>> = Vec::with_capacity(k_total);
    let mut dropped = Vec::new();
    for p in 0..k_total {
        let design = candidate_design(dataset, schema, p);
        let d = design.n_cols();
        match cox_nr_fit(&design, dataset) {
            Ok(fit) => {
                let pll = cox_partial_loglik(&design, dataset, &fit.coefficients)?;
                let cov = fit.covariance.as_ref().expect("NR covariance");
                candidates.push(Some(Candidate {
                    beta0: fit.coefficients[0],
                    beta_p: fit.coefficients[d - 1],
                    var0: cov[(0, 0)],
                    varp: cov[(d - 1, d - 1)],
                    cov: cov[(0, d - 1)],
                    bic: -2.0 * pll.value + d as f64 * (n_events as f64).ln(),
                }));
            }
            Err(e) => {
                dropped.push(format!("candidate {p}: {e}"));
                candidates.push(None);
            }
        }
    }
    let min_bic = candidates
        .iter()
        .flatten()
        .map(|c| c.bic)
        .fold(f64::INFINITY, f64::min);
    if !min_bic.is_finite() {
        return Err(EstimatorError::Fit(crate::cox::FitError::NonConvergence(0)));
    }
    let raw: Vec<f64> = candidates
        .iter()
        .map(|c| {
            c.as_ref()
                .map_or(0.0, |c| (-(c.bic - min_bic) / 2.0).exp())
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    // Overlap weights |S_k ∩ S_p| / |S_p|.
    let memberships: Vec<Vec<usize>> = (0..k_total)
        .map(|k| dataset.subgroup_members(schema, k))
        .collect();
    let overlap = |k: usize, p: usize| -> f64 {
        if memberships[p].is_empty() {
            return 0.0;
        }
        let set_p = &memberships[p];
        let (j, l) = schema.subgroup_of(k);
        let inter = set_p
            .iter()
            .filter(|&&i| dataset.subjects[i].covariates[j] == l)
            .count();
        inter as f64 / set_p.len() as f64
    };

    let estimates: Vec<SubgroupEstimate> = (0..k_total)
        .map(|k| {
            if memberships[k].is_empty() {
                return SubgroupEstimate::missing(
                    k,
                    EstimatorKind::ModelAveraging,
                    "empty subgroup".into(),
                );
            }
            let mut means = Vec::with_capacity(k_total);
            let mut sds = Vec::with_capacity(k_total);
            let mut wts = Vec::with_capacity(k_total);
            for (p, cand) in candidates.iter().enumerate() {
                let Some(c) = cand else { continue };
                if weights[p] == 0.0 {
                    continue;
                }
                let w_kp = overlap(k, p);
                let mean = c.beta0 + w_kp * c.beta_p;
                let var = c.var0 + w_kp * w_kp * c.varp + 2.0 * w_kp * c.cov;
                means.push(mean);
                sds.push(var.max(0.0).sqrt());
                wts.push(weights[p]);
            }
            if wts.is_empty() {
                return SubgroupEstimate::missing(
                    k,
                    EstimatorKind::ModelAveraging,
                    "no converged candidate models".into(),
                );
            }
            let point = normal_mixture_quantile(&wts, &means, &sds, 0.5);
            let lower = normal_mixture_quantile(&wts, &means, &sds, 0.025);
            let upper = normal_mixture_quantile(&wts, &means, &sds, 0.975);
            SubgroupEstimate {
                subgroup: k,
                estimator: EstimatorKind::ModelAveraging,
                log_effect: Some(point),
                interval: Some((lower, upper)),
                interval_kind: Some(IntervalKind::Mixture),
                note: if dropped.is_empty() {
                    None
                } else {
                    Some(dropped.join("; "))
                },
            }
        })
        .collect();
    let metadata = EstimatorMetadata {
        bic_weights: Some(weights),
        n_missing: count_missing(&estimates),
        ..EstimatorMetadata::default()
    };
    Ok(EstimateSet {
        estimator: EstimatorKind::ModelAveraging,
        estimates,
        metadata,
    })
}
