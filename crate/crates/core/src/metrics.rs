//! Evaluation metrics across simulation runs: overall RMSE, per-subgroup
//! RMSE/bias/coverage, heterogeneity classification, and the probability of
//! identifying the inefficacious subgroup.
//!
//! All effects are on the log scale. Missing estimates (degenerate
//! subgroup-run pairs) are excluded pairwise, with counts surfaced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no non-missing estimates")]
    AllMissing,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Deviation beyond which a subgroup counts as heterogeneous.
pub fn heterogeneity_threshold() -> f64 {
    1.1f64.ln()
}

/// Root mean squared error pooled over all (run, subgroup) pairs.
pub fn rmse_overall(estimates: &[Vec<Option<f64>>], truths: &[f64]) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for run in estimates {
        if run.len() != truths.len() {
            return Err(EvalError::Dimension(format!(
                "run has {} estimates for {} truths",
                run.len(),
                truths.len()
            )));
        }
        for (est, truth) in run.iter().zip(truths) {
            if let Some(e) = est {
                sum += (e - truth) * (e - truth);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(EvalError::AllMissing);
    }
    Ok((sum / count as f64).sqrt())
}

/// RMSE over subgroups within a single run, for paired run-level
/// comparisons between estimators.
pub fn rmse_per_run(run: &[Option<f64>], truths: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (est, truth) in run.iter().zip(truths) {
        if let Some(e) = est {
            sum += (e - truth) * (e - truth);
            count += 1;
        }
    }
    (count > 0).then(|| (sum / count as f64).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupMetrics {
    pub subgroup: usize,
    pub rmse: f64,
    pub bias: f64,
    /// Fraction of runs whose interval covered the truth; absent when the
    /// estimator carries no intervals.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub n_used: usize,
    pub n_missing: usize,
}

/// Per-subgroup RMSE, bias, and interval coverage across runs.
pub fn subgroup_metrics(
    estimates: &[Vec<Option<f64>>],
    truths: &[f64],
    intervals: &[Vec<Option<(f64, f64)>>],
) -> Result<Vec<SubgroupMetrics>, EvalError> {
    let k_total = truths.len();
    let mut out = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let mut sum_sq = 0.0;
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut missing = 0usize;
        let mut covered = 0usize;
        let mut with_interval = 0usize;
        for (run, run_intervals) in estimates.iter().zip(intervals) {
            match run.get(k).copied().flatten() {
                Some(e) => {
                    let err = e - truths[k];
                    sum_sq += err * err;
                    sum += err;
                    n += 1;
                    if let Some((lo, hi)) = run_intervals.get(k).copied().flatten() {
                        with_interval += 1;
                        if lo <= truths[k] && truths[k] <= hi {
                            covered += 1;
                        }
                    }
                }
                None => missing += 1,
            }
        }
        if n == 0 {
            return Err(EvalError::AllMissing);
        }
        out.push(SubgroupMetrics {
            subgroup: k,
            rmse: (sum_sq / n as f64).sqrt(),
            bias: sum / n as f64,
            coverage: (with_interval > 0).then(|| covered as f64 / with_interval as f64),
            n_used: n,
            n_missing: missing,
        });
    }
    Ok(out)
}

/// Flags subgroups whose true log AHR deviates from the population log AHR
/// by strictly more than `log(1.1)`.
pub fn classify_heterogeneous(truths: &[f64], overall_truth: f64) -> Vec<bool> {
    truths
        .iter()
        .map(|t| (t - overall_truth).abs() > heterogeneity_threshold())
        .collect()
}

/// Identification probabilities for the subgroup in which the intervention
/// did not work, under both readings of "smallest estimate".
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentificationProbability {
    /// Fraction of runs whose weakest estimated effect (maximal log AHR)
    /// lands on the null subgroup.
    pub weakest_effect: f64,
    /// Fraction of runs whose literal smallest estimate (minimal log AHR)
    /// lands on the null subgroup.
    pub smallest_estimate: f64,
}

/// Per-run argmax/argmin identification of `null_subgroup`; ties and runs
/// where the null subgroup is missing count as failures.
pub fn identification_probability(
    per_run_estimates: &[Vec<Option<f64>>],
    null_subgroup: usize,
) -> IdentificationProbability {
    let mut hit_max = 0usize;
    let mut hit_min = 0usize;
    for run in per_run_estimates {
        let mut best_max: Option<(usize, f64)> = None;
        let mut best_min: Option<(usize, f64)> = None;
        let mut tie_max = false;
        let mut tie_min = false;
        for (k, est) in run.iter().enumerate() {
            let Some(e) = est else { continue };
            match best_max {
                Some((_, b)) if *e == b => tie_max = true,
                Some((_, b)) if *e > b => {
                    best_max = Some((k, *e));
                    tie_max = false;
                }
                None => best_max = Some((k, *e)),
                _ => {}
            }
            match best_min {
                Some((_, b)) if *e == b => tie_min = true,
                Some((_, b)) if *e < b => {
                    best_min = Some((k, *e));
                    tie_min = false;
                }
                None => best_min = Some((k, *e)),
                _ => {}
            }
        }
        if let Some((k, _)) = best_max {
            if !tie_max && k == null_subgroup {
                hit_max += 1;
            }
        }
        if let Some((k, _)) = best_min {
            if !tie_min && k == null_subgroup {
                hit_min += 1;
            }
        }
    }
    let n = per_run_estimates.len().max(1) as f64;
    IdentificationProbability {
        weakest_effect: hit_max as f64 / n,
        smallest_estimate: hit_min as f64 / n,
    }
}
