//! Weibull accelerated-failure-time outcomes and the trial censoring
//! process: uniform recruitment, exponential dropout, and administrative
//! cutoff once the target event count is reached.

use super::{ScenarioSpec, SimError};
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::Exp1;

/// Deterministic part of `log T` for one subject.
pub fn aft_location(spec: &ScenarioSpec, covariates: &[usize], treatment: u8) -> f64 {
    let schema = super::table_s1_schema();
    let z = f64::from(treatment);
    let mut loc = spec.alpha0 + spec.beta0 * z;
    let mut offset = 0;
    let mut active = [false; 32];
    for (j, v) in schema.variables.iter().enumerate() {
        let k = offset + covariates[j];
        active[k] = true;
        loc += spec.main_coeffs[k] + z * spec.interaction_coeffs[k];
        offset += v.levels.len();
    }
    for &(k1, k2, coeff) in &spec.triple_coeffs {
        if active[k1] && active[k2] {
            loc += z * coeff;
        }
    }
    loc
}

/// Uncensored event times `T_i = exp(location + sigma log W)`, `W ~ Exp(1)`.
pub fn gen_outcomes(
    covariates: &[Vec<usize>],
    spec: &ScenarioSpec,
    treatment: &[u8],
    seed: u64,
) -> Vec<f64> {
    assert_eq!(covariates.len(), treatment.len());
    let mut rng = stream_rng(seed, "aft-outcomes", 0);
    covariates
        .iter()
        .zip(treatment)
        .map(|(cov, &z)| {
            let w: f64 = rng.sample(Exp1);
            (aft_location(spec, cov, z) + spec.sigma * w.ln()).exp()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct CensoringConfig {
    /// Uniform recruitment window in years.
    pub recruit_years: f64,
    /// Annual dropout probability of the exponential dropout process.
    pub annual_dropout: f64,
}

impl Default for CensoringConfig {
    fn default() -> Self {
        CensoringConfig {
            recruit_years: 3.0,
            annual_dropout: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensorCause {
    Event,
    Dropout,
    Administrative,
}

/// The analysis set after censoring: on-study times, event flags, censoring
/// causes, and the original indices of the retained subjects (those
/// recruited before the data cutoff).
#[derive(Debug, Clone)]
pub struct CensoredData {
    pub kept: Vec<usize>,
    pub time: Vec<f64>,
    pub event: Vec<u8>,
    pub cause: Vec<CensorCause>,
    /// Calendar time at which the target event count was reached.
    pub cutoff: f64,
}

/// Applies recruitment, dropout, and administrative censoring at the
/// calendar time of the `n_target_events`-th event. Exactly that many
/// events remain in the analysis set.
pub fn apply_censoring(
    event_times: &[f64],
    n_target_events: usize,
    config: &CensoringConfig,
    seed: u64,
) -> Result<CensoredData, SimError> {
    let n = event_times.len();
    if n == 0 {
        return Err(SimError::EmptySample);
    }
    let mut rng = stream_rng(seed, "censoring", 0);
    let dropout_rate = -(1.0 - config.annual_dropout).ln();
    let recruit: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(0.0..config.recruit_years))
        .collect();
    let dropout: Vec<f64> = (0..n)
        .map(|_| {
            if dropout_rate > 0.0 {
                let e: f64 = rng.sample(Exp1);
                e / dropout_rate
            } else {
                f64::INFINITY
            }
        })
        .collect();

    // Calendar event times among subjects whose event precedes dropout.
    let mut event_calendar: Vec<f64> = (0..n)
        .filter(|&i| event_times[i] <= dropout[i])
        .map(|i| recruit[i] + event_times[i])
        .collect();
    if event_calendar.len() < n_target_events {
        return Err(SimError::TooFewEvents {
            needed: n_target_events,
            available: event_calendar.len(),
        });
    }
    event_calendar.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cutoff = if n_target_events == 0 {
        f64::INFINITY
    } else {
        event_calendar[n_target_events - 1]
    };

    let mut kept = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();
    let mut cause = Vec::new();
    for i in 0..n {
        let admin_limit = cutoff - recruit[i];
        if admin_limit <= 0.0 {
            continue;
        }
        let censor_at = dropout[i].min(admin_limit);
        if event_times[i] <= censor_at {
            kept.push(i);
            time.push(event_times[i]);
            event.push(1);
            cause.push(CensorCause::Event);
        } else {
            kept.push(i);
            time.push(censor_at);
            event.push(0);
            cause.push(if dropout[i] < admin_limit {
                CensorCause::Dropout
            } else {
                CensorCause::Administrative
            });
        }
    }
    Ok(CensoredData {
        kept,
        time,
        event,
        cause,
        cutoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::km::kaplan_meier;
    use crate::sim::{gen_covariates, scenario_coeffs, DEFAULT_SCENARIO_SEED};
    use approx::assert_abs_diff_eq;

    #[test]
    fn null_covariate_control_median_matches_closed_form() {
        // Subjects at level a of every variable avoid both prognostic
        // factors, so log T = alpha0 + sigma log W in the control arm.
        let spec = scenario_coeffs(1, DEFAULT_SCENARIO_SEED).unwrap();
        let n = 200_000;
        let covariates = vec![vec![0usize; 10]; n];
        let treatment = vec![0u8; n];
        let mut times = gen_outcomes(&covariates, &spec, &treatment, 3);
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = times[n / 2];
        let expected = (2.0f64).exp() * (2.0f64.ln()).powf(0.85);
        assert_abs_diff_eq!(median, expected, epsilon = 0.05);
        assert_abs_diff_eq!(expected, 5.411, epsilon = 1e-3);
    }

    #[test]
    fn control_arm_median_of_full_mix() {
        let spec = scenario_coeffs(1, DEFAULT_SCENARIO_SEED).unwrap();
        let n = 100_000;
        let covariates = gen_covariates(n, 11);
        let treatment = vec![0u8; n];
        let mut times = gen_outcomes(&covariates, &spec, &treatment, 12);
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(times[n / 2], 4.93, epsilon = 0.1);
    }

    #[test]
    fn scenario_one_conditional_hazard_ratio_recovered_by_cox() {
        use crate::cox::cox_nr_fit;
        use crate::data::{Subject, TrialDataset};
        use crate::design::{ColumnRole, DesignMatrix};
        let spec = scenario_coeffs(1, DEFAULT_SCENARIO_SEED).unwrap();
        let n = 100_000;
        // Hold covariates fixed so conditional and marginal effects agree.
        let covariates = vec![vec![0usize; 10]; n];
        let treatment: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let times = gen_outcomes(&covariates, &spec, &treatment, 13);
        let schema = crate::sim::table_s1_schema();
        let subjects = times
            .iter()
            .zip(&treatment)
            .map(|(&t, &z)| Subject {
                time: t,
                event: 1,
                treatment: z,
                covariates: vec![0; 10],
            })
            .collect();
        let data = TrialDataset::new(subjects, &schema).unwrap();
        let members = treatment
            .iter()
            .enumerate()
            .filter_map(|(i, &z)| (z == 1).then_some(i as u32))
            .collect();
        let design =
            DesignMatrix::from_columns(n, vec![ColumnRole::Treatment], vec![members]);
        let fit = cox_nr_fit(&design, &data).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.66f64.ln(), epsilon = 0.02);
    }

    #[test]
    fn exactly_the_target_event_count_survives_censoring() {
        let spec = scenario_coeffs(2, DEFAULT_SCENARIO_SEED).unwrap();
        let n = 1000;
        let covariates = gen_covariates(n, 14);
        let treatment: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let times = gen_outcomes(&covariates, &spec, &treatment, 15);
        let censored =
            apply_censoring(&times, 247, &CensoringConfig::default(), 16).unwrap();
        let events: usize = censored.event.iter().map(|&e| e as usize).sum();
        assert_eq!(events, 247);
        assert!(censored.time.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn no_dropout_and_late_cutoff_observe_every_event() {
        let times = vec![0.5, 1.5, 2.5, 3.5, 4.5, 5.5];
        let config = CensoringConfig {
            recruit_years: 1.0,
            annual_dropout: 0.0,
        };
        let censored = apply_censoring(&times, times.len(), &config, 17).unwrap();
        assert_eq!(censored.kept.len(), times.len());
        assert!(censored.event.iter().all(|&e| e == 1));
        assert!(censored.cause.iter().all(|&c| c == CensorCause::Event));
    }

    #[test]
    fn dropout_hazard_matches_two_percent_annual_rate() {
        // Kaplan-Meier of the dropout process (dropout as the event,
        // everything else censored) evaluated at one year.
        let spec = scenario_coeffs(1, DEFAULT_SCENARIO_SEED).unwrap();
        let n = 100_000;
        let covariates = gen_covariates(n, 18);
        let treatment: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let times = gen_outcomes(&covariates, &spec, &treatment, 19);
        let censored =
            apply_censoring(&times, (0.247 * n as f64) as usize, &CensoringConfig::default(), 20)
                .unwrap();
        let dropout_flags: Vec<u8> = censored
            .cause
            .iter()
            .map(|&c| u8::from(c == CensorCause::Dropout))
            .collect();
        let km = kaplan_meier(&censored.time, &dropout_flags).unwrap();
        assert_abs_diff_eq!(1.0 - km.eval(1.0), 0.02, epsilon = 0.003);
    }

    #[test]
    fn too_few_events_is_an_error() {
        let times = vec![1.0, 2.0];
        let err =
            apply_censoring(&times, 5, &CensoringConfig::default(), 21).unwrap_err();
        assert!(matches!(err, SimError::TooFewEvents { needed: 5, .. }));
    }
}
