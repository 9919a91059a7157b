//! Standardization of per-subject counterfactual curves to subgroup-level
//! marginal survival curves, and average hazard ratio (AHR) computation.
//!
//! The AHR is the ratio of the two cross integrals `int S_C d(S_I)` and
//! `int S_I d(S_C)` up to a horizon `L`; with power 1 it equals the odds of
//! concordance between the two arms' event times.

use crate::stepfun::{average_survival, step_integral, StepError, StepSurvival};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MarginalError {
    #[error("subgroup has no members")]
    EmptySubgroup,
    #[error("no event mass before the horizon in the {0} arm")]
    ZeroMass(&'static str),
    #[error("curve grids are misaligned: {0}")]
    MisalignedGrids(String),
    #[error("need at least {min} draws (got {got})")]
    TooFewDraws { min: usize, got: usize },
    #[error("non-finite draw at index {0}")]
    NonFiniteDraw(usize),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Pointwise average of the subgroup members' predicted curves, on the
/// union of their jump times.
pub fn standardize_subgroup(
    per_subject_curves: &[StepSurvival],
) -> Result<StepSurvival, MarginalError> {
    if per_subject_curves.is_empty() {
        return Err(MarginalError::EmptySubgroup);
    }
    Ok(average_survival(per_subject_curves)?)
}

fn powered(curve: &StepSurvival, gamma: f64) -> StepSurvival {
    if gamma == 1.0 {
        return curve.clone();
    }
    StepSurvival::with_shared(
        curve.shared_jump_times(),
        curve.values().iter().map(|v| v.powf(gamma)).collect(),
    )
    .expect("powering preserves monotonicity")
}

fn ahr_step_gamma(
    control: &StepSurvival,
    intervention: &StepSurvival,
    horizon: f64,
    gamma: f64,
) -> Result<f64, MarginalError> {
    let c = powered(control, gamma);
    let i = powered(intervention, gamma);
    let numerator = -step_integral(&c, &i, horizon)?;
    let denominator = -step_integral(&i, &c, horizon)?;
    if numerator <= 0.0 {
        return Err(MarginalError::ZeroMass("intervention"));
    }
    if denominator <= 0.0 {
        return Err(MarginalError::ZeroMass("control"));
    }
    Ok(numerator / denominator)
}

/// AHR from step-function survival curves: sums over the curves' jump times
/// up to `horizon`, with power fixed at 1.
pub fn ahr_step(
    control: &StepSurvival,
    intervention: &StepSurvival,
    horizon: f64,
) -> Result<f64, MarginalError> {
    ahr_step_gamma(control, intervention, horizon, 1.0)
}

/// AHR from grid-valued survival and hazard curves via left-endpoint Riemann
/// sums on a uniform grid over `[0, L]` with `grid_points` cells. All slices
/// hold values at the left endpoints `g * L / grid_points`.
pub fn ahr_grid(
    surv_control: &[f64],
    surv_intervention: &[f64],
    hazard_intervention: &[f64],
    hazard_control: &[f64],
    horizon: f64,
    grid_points: usize,
) -> Result<f64, MarginalError> {
    if horizon <= 0.0 {
        return Err(MarginalError::Step(StepError::NonPositiveHorizon(horizon)));
    }
    for (name, s) in [
        ("surv_control", surv_control),
        ("surv_intervention", surv_intervention),
        ("hazard_intervention", hazard_intervention),
        ("hazard_control", hazard_control),
    ] {
        if s.len() != grid_points {
            return Err(MarginalError::MisalignedGrids(format!(
                "{name} has {} values for {grid_points} cells",
                s.len()
            )));
        }
    }
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for g in 0..grid_points {
        let joint = surv_control[g] * surv_intervention[g];
        numerator += joint * hazard_intervention[g];
        denominator += joint * hazard_control[g];
    }
    if numerator <= 0.0 {
        return Err(MarginalError::ZeroMass("intervention"));
    }
    if denominator <= 0.0 {
        return Err(MarginalError::ZeroMass("control"));
    }
    Ok(numerator / denominator)
}

/// Linear-interpolation (type 7) empirical quantile of unsorted data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior summary of per-draw AHR values: median point estimate with the
/// equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AhrSummary {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn summarize_ahr_draws(draws: &[f64]) -> Result<AhrSummary, MarginalError> {
    const MIN_DRAWS: usize = 100;
    if draws.len() < MIN_DRAWS {
        return Err(MarginalError::TooFewDraws {
            min: MIN_DRAWS,
            got: draws.len(),
        });
    }
    if let Some(bad) = draws.iter().position(|d| !d.is_finite()) {
        return Err(MarginalError::NonFiniteDraw(bad));
    }
    Ok(AhrSummary {
        point: quantile(draws, 0.5),
        lower: quantile(draws, 0.025),
        upper: quantile(draws, 0.975),
    })
}

/// One subgroup's AHR with the settings it was computed under.
#[derive(Debug, Clone)]
pub struct AhrEstimate {
    pub subgroup: usize,
    /// Power of the survival curves in the cross integrals; fixed at 1.
    pub gamma: f64,
    pub horizon: f64,
    pub point: f64,
    pub interval: Option<(f64, f64)>,
}

impl AhrEstimate {
    pub fn log_point(&self) -> f64 {
        self.point.ln()
    }

    pub fn log_interval(&self) -> Option<(f64, f64)> {
        self.interval.map(|(l, u)| (l.ln(), u.ln()))
    }
}
