//! Kaplan-Meier product-limit estimation.

use crate::stepfun::StepSurvival;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KmError {
    #[error("empty input")]
    Empty,
    #[error("times must be positive and finite")]
    BadTimes,
    #[error("times and events must have equal length")]
    LengthMismatch,
}

/// Product-limit survival estimate with jumps at uncensored event times.
/// Subjects censored at an event time are treated as censored after the
/// events (they remain in that time's risk set).
pub fn kaplan_meier(times: &[f64], events: &[u8]) -> Result<StepSurvival, KmError> {
    if times.is_empty() {
        return Err(KmError::Empty);
    }
    if times.len() != events.len() {
        return Err(KmError::LengthMismatch);
    }
    if times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(KmError::BadTimes);
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());

    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut at_risk = times.len();
    let mut idx = 0;
    while idx < order.len() {
        let t = times[order[idx]];
        let mut d = 0usize;
        let mut removed = 0usize;
        while idx < order.len() && times[order[idx]] == t {
            d += usize::from(events[order[idx]] == 1);
            removed += 1;
            idx += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            jump_times.push(t);
            values.push(surv);
        }
        at_risk -= removed;
    }
    Ok(StepSurvival::new(jump_times, values).expect("product-limit curve is monotone"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;

    #[test]
    fn two_deaths_no_censoring() {
        let s = kaplan_meier(&[1.0, 2.0], &[1, 1]).unwrap();
        assert_abs_diff_eq!(s.eval(1.0), 0.5);
        assert_abs_diff_eq!(s.eval(2.0), 0.0);
    }

    #[test]
    fn censored_middle_subject() {
        let s = kaplan_meier(&[1.0, 2.0, 3.0], &[1, 0, 1]).unwrap();
        assert_abs_diff_eq!(s.eval(1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.eval(3.0), 0.0);
        assert_eq!(s.jump_times().len(), 2);
    }

    #[test]
    fn all_censored_is_flat_one() {
        let s = kaplan_meier(&[1.0, 2.0, 3.0], &[0, 0, 0]).unwrap();
        assert_eq!(s.jump_times().len(), 0);
        assert_eq!(s.eval(2.5), 1.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(kaplan_meier(&[], &[]).unwrap_err(), KmError::Empty);
    }

    #[test]
    fn censoring_tied_with_event_stays_at_risk() {
        // Event and censoring both at t = 1: risk set of 2 at that time.
        let s = kaplan_meier(&[1.0, 1.0], &[1, 0]).unwrap();
        assert_abs_diff_eq!(s.eval(1.0), 0.5);
    }

    #[test]
    fn no_censoring_matches_empirical_survival() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.gen_range(1..30);
            let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..10.0f64)).collect();
            let events = vec![1u8; n];
            let s = kaplan_meier(&times, &events).unwrap();
            for _ in 0..10 {
                let t = rng.gen_range(0.0..12.0);
                let empirical =
                    times.iter().filter(|&&x| x > t).count() as f64 / n as f64;
                assert_abs_diff_eq!(s.eval(t), empirical, epsilon = 1e-12);
            }
        }
    }
}
