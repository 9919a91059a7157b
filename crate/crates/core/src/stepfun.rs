//! Right-continuous step functions: survival curves, cumulative hazards, and
//! the Stieltjes-style sum used by the average hazard ratio.

use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("jump times must be strictly increasing and positive")]
    BadJumpTimes,
    #[error("survival values must be non-increasing within [0, 1]")]
    BadValues,
    #[error("cumulative-hazard increments must be nonnegative")]
    NegativeIncrement,
    #[error("integration horizon must be positive (got {0})")]
    NonPositiveHorizon(f64),
}

/// Right-continuous, non-increasing survival step function. The curve equals
/// 1 before the first jump and holds its last value beyond the final jump.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSurvival {
    jump_times: Arc<Vec<f64>>,
    values: Vec<f64>,
}

impl StepSurvival {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self, StepError> {
        Self::with_shared(Arc::new(jump_times), values)
    }

    /// Builds a curve sharing an existing jump-time vector (predicted curves
    /// from one baseline all jump at the same event times).
    pub fn with_shared(jump_times: Arc<Vec<f64>>, values: Vec<f64>) -> Result<Self, StepError> {
        if jump_times.len() != values.len() {
            return Err(StepError::BadJumpTimes);
        }
        if jump_times.first().map_or(false, |&t| t <= 0.0)
            || jump_times.windows(2).any(|w| w[0] >= w[1])
            || jump_times.iter().any(|t| !t.is_finite())
        {
            return Err(StepError::BadJumpTimes);
        }
        let mut prev = 1.0;
        for &v in &values {
            if !(0.0..=1.0).contains(&v) || v > prev + 1e-12 {
                return Err(StepError::BadValues);
            }
            prev = v;
        }
        Ok(StepSurvival { jump_times, values })
    }

    /// The constant-one curve (no jumps).
    pub fn constant_one() -> Self {
        StepSurvival {
            jump_times: Arc::new(Vec::new()),
            values: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn shared_jump_times(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.jump_times)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Right-continuous evaluation; 1 before the first jump.
    pub fn eval(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&jt| jt <= t) {
            0 => 1.0,
            idx => self.values[idx - 1],
        }
    }

    /// Value just before `t` (left limit).
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&jt| jt < t) {
            0 => 1.0,
            idx => self.values[idx - 1],
        }
    }

    /// True if the curve jumps somewhere in `(0, horizon]`.
    pub fn has_jump_before(&self, horizon: f64) -> bool {
        self.jump_times.first().map_or(false, |&t| t <= horizon)
    }
}

/// Pointwise average of survival curves, evaluated on the union of jump
/// times. Curves sharing one jump-time vector take a fast path.
pub fn average_survival(curves: &[StepSurvival]) -> Result<StepSurvival, StepError> {
    assert!(!curves.is_empty(), "cannot average zero curves");
    let first = &curves[0];
    let shared = curves
        .iter()
        .all(|c| Arc::ptr_eq(&c.jump_times, &first.jump_times));
    let n = curves.len() as f64;
    if shared {
        let m = first.jump_times.len();
        let mut values = vec![0.0; m];
        for c in curves {
            for (acc, v) in values.iter_mut().zip(&c.values) {
                *acc += v;
            }
        }
        for v in &mut values {
            *v /= n;
        }
        return StepSurvival::with_shared(first.shared_jump_times(), values);
    }
    let mut union: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.jump_times.iter().copied())
        .collect();
    union.sort_by(|a, b| a.partial_cmp(b).unwrap());
    union.dedup();
    let values = union
        .iter()
        .map(|&t| curves.iter().map(|c| c.eval(t)).sum::<f64>() / n)
        .collect();
    StepSurvival::new(union, values)
}

/// Signed Stieltjes sum `sum_{u <= L} integrand(u) * d integrator(u)` over the
/// integrator's jump times, with the integrand taken at its right-continuous
/// value at each jump. The integrator is non-increasing, so the result is
/// nonpositive whenever the integrand is nonnegative.
pub fn step_integral(
    integrand: &StepSurvival,
    integrator: &StepSurvival,
    horizon: f64,
) -> Result<f64, StepError> {
    if horizon <= 0.0 {
        return Err(StepError::NonPositiveHorizon(horizon));
    }
    let mut sum = 0.0;
    let mut prev = 1.0;
    for (idx, &u) in integrator.jump_times.iter().enumerate() {
        if u > horizon {
            break;
        }
        let jump = integrator.values[idx] - prev;
        sum += integrand.eval(u) * jump;
        prev = integrator.values[idx];
    }
    Ok(sum)
}

/// Breslow-style cumulative hazard: nonnegative increments at event times.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCumHazard {
    pub jump_times: Arc<Vec<f64>>,
    pub increments: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepCumHazard {
    pub fn new(jump_times: Vec<f64>, increments: Vec<f64>) -> Result<Self, StepError> {
        if jump_times.len() != increments.len()
            || jump_times.first().map_or(false, |&t| t <= 0.0)
            || jump_times.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(StepError::BadJumpTimes);
        }
        if increments.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(StepError::NegativeIncrement);
        }
        let mut acc = 0.0;
        let cumulative = increments
            .iter()
            .map(|&d| {
                acc += d;
                acc
            })
            .collect();
        Ok(StepCumHazard {
            jump_times: Arc::new(jump_times),
            increments,
            cumulative,
        })
    }

    /// Cumulative hazard at `t` (0 before the first jump).
    pub fn eval(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&jt| jt <= t) {
            0 => 0.0,
            idx => self.cumulative[idx - 1],
        }
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Survival curve `exp(-Lambda(t) * hazard_scale)` on this baseline's
    /// jump times.
    pub fn survival_with_scale(&self, hazard_scale: f64) -> StepSurvival {
        let values = self
            .cumulative
            .iter()
            .map(|&c| (-c * hazard_scale).exp())
            .collect();
        StepSurvival {
            jump_times: Arc::clone(&self.jump_times),
            values,
        }
    }
}
