//! Horseshoe estimator: the Bayesian global model sampled with HMC, then
//! per-draw standardization on a uniform time grid and Riemann-sum AHRs,
//! summarized as posterior medians with 95% credible intervals.

use super::{
    count_missing, EstimateSet, EstimatorError, EstimatorKind, EstimatorMetadata, IntervalKind,
    McmcSummary, SubgroupEstimate,
};
use crate::bayes::{hmc_sample, HmcConfig, HorseshoeConfig, HorseshoeModel};
use crate::data::{SubgroupSchema, TrialDataset};
use crate::design::build_design;
use crate::marginal::{ahr_grid, summarize_ahr_draws};
use crate::spline::build_mspline_basis;

#[derive(Debug, Clone)]
pub struct HorseshoeEstimatorConfig {
    pub prior: HorseshoeConfig,
    pub mcmc: HmcConfig,
    /// Cells of the uniform AHR integration grid on `[0, L]`.
    pub grid_points: usize,
    /// Gate on the split R-hat of the treatment and main effects.
    pub rhat_gate: f64,
}

impl Default for HorseshoeEstimatorConfig {
    fn default() -> Self {
        HorseshoeEstimatorConfig {
            prior: HorseshoeConfig::default(),
            mcmc: HmcConfig::default(),
            grid_points: 1000,
            rhat_gate: 1.05,
        }
    }
}

/// Bayesian shrinkage estimator. Subjects are brought into a canonical
/// order first so results do not depend on dataset row order.
pub fn estimate_horseshoe(
    dataset: &TrialDataset,
    schema: &SubgroupSchema,
    config: &HorseshoeEstimatorConfig,
) -> Result<EstimateSet, EstimatorError> {
    let mut subjects = dataset.subjects.clone();
    subjects.sort_by(|a, b| {
        a.time
            .partial_cmp(&b.time)
            .unwrap()
            .then(b.event.cmp(&a.event))
            .then(a.treatment.cmp(&b.treatment))
            .then(a.covariates.cmp(&b.covariates))
    });
    let data = TrialDataset { subjects };
    let horizon = data.max_event_time().ok_or(EstimatorError::NoEvents)?;

    let design = build_design(&data, schema);
    let basis = build_mspline_basis(&data)?;
    let model = HorseshoeModel::new(&design, &data, basis, config.prior.clone(), true);
    let draws = hmc_sample(&model, &config.mcmc)?;

    // R-hat gate over the treatment effect and all main effects.
    let k_total = schema.n_subgroups();
    let max_rhat_effects = draws.split_rhat[..=k_total]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    if !max_rhat_effects.is_finite() || max_rhat_effects > config.rhat_gate {
        return Err(EstimatorError::RhatGate(max_rhat_effects));
    }

    let grid_points = config.grid_points;
    let dt = horizon / grid_points as f64;
    let basis = &model.basis;
    let m = model.n_basis();
    // Basis values at the grid's left endpoints, row-major grid x m.
    let mut i_grid = vec![0.0; grid_points * m];
    let mut m_grid = vec![0.0; grid_points * m];
    for g in 0..grid_points {
        let t = g as f64 * dt;
        i_grid[g * m..(g + 1) * m].copy_from_slice(&basis.i_values(t));
        m_grid[g * m..(g + 1) * m].copy_from_slice(&basis.m_values(t));
    }
    let memberships: Vec<Vec<usize>> = (0..k_total)
        .map(|k| data.subgroup_members(schema, k))
        .collect();
    let mut member_of: Vec<Vec<u16>> = vec![Vec::new(); data.len()];
    for (k, members) in memberships.iter().enumerate() {
        for &i in members {
            member_of[i].push(k as u16);
        }
    }
    let n_k: Vec<f64> = memberships.iter().map(|ms| ms.len() as f64).collect();

    // Per-draw AHRs, streamed to keep memory flat.
    let mut ahr_draws: Vec<Vec<f64>> = vec![Vec::with_capacity(draws.n_samples()); k_total];
    let mut cum_basis = vec![0.0; grid_points];
    let mut haz_basis = vec![0.0; grid_points];
    // surv/dens accumulators: [k][arm][grid]
    let mut surv = vec![vec![vec![0.0; grid_points]; 2]; k_total];
    let mut dens = vec![vec![vec![0.0; grid_points]; 2]; k_total];
    let mut sv = vec![0.0; grid_points];
    let mut dv = vec![0.0; grid_points];
    for sample in &draws.samples {
        let parts = model.components(sample);
        for g in 0..grid_points {
            let iw = &i_grid[g * m..(g + 1) * m];
            let mw = &m_grid[g * m..(g + 1) * m];
            cum_basis[g] = parts.spline_weights.iter().zip(iw).map(|(c, v)| c * v).sum();
            haz_basis[g] = parts.spline_weights.iter().zip(mw).map(|(c, v)| c * v).sum();
        }
        for row in surv.iter_mut().chain(dens.iter_mut()) {
            for arm in row.iter_mut() {
                arm.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for (i, subject) in data.subjects.iter().enumerate() {
            for arm in 0..2usize {
                let mut lp = parts.baseline_intercept + parts.treatment * arm as f64;
                let mut offset = 0;
                for (j, v) in schema.variables.iter().enumerate() {
                    let k = offset + subject.covariates[j];
                    lp += parts.mains[k] + arm as f64 * parts.interactions[k];
                    offset += v.levels.len();
                }
                let scale = lp.exp();
                for g in 0..grid_points {
                    let s = (-scale * cum_basis[g]).exp();
                    sv[g] = s;
                    dv[g] = scale * haz_basis[g] * s;
                }
                for &k in &member_of[i] {
                    let acc_s = &mut surv[k as usize][arm];
                    let acc_d = &mut dens[k as usize][arm];
                    for g in 0..grid_points {
                        acc_s[g] += sv[g];
                        acc_d[g] += dv[g];
                    }
                }
            }
        }
        for k in 0..k_total {
            if n_k[k] == 0.0 {
                continue;
            }
            let mut hzd = [vec![0.0; grid_points], vec![0.0; grid_points]];
            for arm in 0..2 {
                for g in 0..grid_points {
                    surv[k][arm][g] /= n_k[k];
                    dens[k][arm][g] /= n_k[k];
                    // Mixture hazard of the marginal curve.
                    hzd[arm][g] = dens[k][arm][g] / surv[k][arm][g].max(1e-300);
                }
            }
            if let Ok(ahr) = ahr_grid(
                &surv[k][0],
                &surv[k][1],
                &hzd[1],
                &hzd[0],
                horizon,
                grid_points,
            ) {
                ahr_draws[k].push(ahr);
            }
        }
    }

    let estimates: Vec<SubgroupEstimate> = (0..k_total)
        .map(|k| {
            if memberships[k].is_empty() {
                return SubgroupEstimate::missing(
                    k,
                    EstimatorKind::Horseshoe,
                    "empty subgroup".into(),
                );
            }
            match summarize_ahr_draws(&ahr_draws[k]) {
                Ok(summary) => SubgroupEstimate {
                    subgroup: k,
                    estimator: EstimatorKind::Horseshoe,
                    log_effect: Some(summary.point.ln()),
                    interval: Some((summary.lower.ln(), summary.upper.ln())),
                    interval_kind: Some(IntervalKind::Credible),
                    note: None,
                },
                Err(e) => SubgroupEstimate::missing(k, EstimatorKind::Horseshoe, e.to_string()),
            }
        })
        .collect();
    let metadata = EstimatorMetadata {
        mcmc: Some(McmcSummary {
            max_rhat_effects,
            divergences: draws.divergences,
            mean_acceptance: draws.mean_acceptance,
        }),
        horizon: Some(horizon),
        n_missing: count_missing(&estimates),
        ..EstimatorMetadata::default()
    };
    Ok(EstimateSet {
        estimator: EstimatorKind::Horseshoe,
        estimates,
        metadata,
    })
}
