//! Cross-validation of the penalty weight over a fixed regularization path.
//!
//! Fold deviances use the Verweij-van Houwelingen difference: the full-data
//! partial log-likelihood minus the leave-fold-out partial log-likelihood,
//! both evaluated at the fold-trained coefficients.

use super::coord::cd_fit_data;
use super::partial::CoxData;
use super::{FitError, PenaltyKind};
use crate::data::TrialDataset;
use crate::design::{ColumnRole, DesignMatrix};
use crate::rng::stream_rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;

const GRID_SIZE: usize = 100;
const GRID_RATIO: f64 = 1e-3;
/// Freezes the penalized block at zero while profiling out the rest.
const FREEZE_LAMBDA: f64 = 1e300;

#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda_star: f64,
    /// `(lambda, cv deviance)` pairs in grid order (descending lambda).
    pub path: Vec<(f64, f64)>,
}

/// The 100-point log-spaced path from `lambda_max` down to
/// `lambda_max * 1e-3`, plus the profiled-null coefficients used to anchor
/// it. `lambda_max` is the largest absolute penalized-coordinate score after
/// fitting the unpenalized columns with the penalized block held at zero.
pub fn lambda_grid(
    design: &DesignMatrix,
    dataset: &TrialDataset,
) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    let data = CoxData::new(design, dataset)?;
    let penalized: Vec<bool> = design
        .roles
        .iter()
        .map(|r| matches!(r, ColumnRole::Interaction(_)))
        .collect();
    let init = vec![0.0; design.n_cols()];
    let mut trace = Vec::new();
    let profile = cd_fit_data(
        &data,
        penalized.clone(),
        PenaltyKind::Lasso,
        FREEZE_LAMBDA,
        &init,
        &mut trace,
    )?;
    let grad = data.pll_grad(&profile.coefficients)?;
    let lambda_max = penalized
        .iter()
        .enumerate()
        .filter(|(_, &p)| p)
        .map(|(c, _)| grad.gradient[c].abs())
        .fold(0.0f64, f64::max)
        .max(1e-10);
    let grid = (0..GRID_SIZE)
        .map(|t| lambda_max * GRID_RATIO.powf(t as f64 / (GRID_SIZE - 1) as f64))
        .collect();
    Ok((grid, profile.coefficients))
}

/// Seeded fold assignment stratified by the event indicator. Subjects are
/// taken in canonical order so the assignment does not depend on input
/// row order.
pub fn cv_fold_assignment(
    dataset: &TrialDataset,
    n_folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, FitError> {
    if n_folds < 2 {
        return Err(FitError::TooFewFolds(n_folds));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = &dataset.subjects[a];
        let sb = &dataset.subjects[b];
        sa.time
            .partial_cmp(&sb.time)
            .unwrap()
            .then(sb.event.cmp(&sa.event))
            .then(sa.treatment.cmp(&sb.treatment))
            .then(sa.covariates.cmp(&sb.covariates))
    });
    let mut events: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| dataset.subjects[i].event == 1)
        .collect();
    let mut censored: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| dataset.subjects[i].event == 0)
        .collect();
    let mut rng = stream_rng(seed, "cv-folds", 0);
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); n_folds];
    for (pos, &i) in events.iter().chain(censored.iter()).enumerate() {
        folds[pos % n_folds].push(i);
    }
    for (f, fold) in folds.iter().enumerate() {
        if !fold.iter().any(|&i| dataset.subjects[i].event == 1) {
            return Err(FitError::FoldWithoutEvents(f));
        }
    }
    Ok(folds)
}

/// Selects the deviance-minimizing penalty weight on the 100-point path.
/// Identical seed and data give an identical selection, bit for bit.
pub fn cv_lambda(
    design: &DesignMatrix,
    dataset: &TrialDataset,
    kind: PenaltyKind,
    n_folds: usize,
    seed: u64,
) -> Result<CvResult, FitError> {
    let (grid, _) = lambda_grid(design, dataset)?;
    let folds = cv_fold_assignment(dataset, n_folds, seed)?;
    let full = CoxData::new(design, dataset)?;
    let penalized: Vec<bool> = design
        .roles
        .iter()
        .map(|r| matches!(r, ColumnRole::Interaction(_)))
        .collect();

    let fold_devs: Vec<Result<Vec<f64>, FitError>> = folds
        .par_iter()
        .map(|fold| {
            let keep: Vec<usize> = {
                let mut in_fold = vec![false; dataset.len()];
                for &i in fold {
                    in_fold[i] = true;
                }
                (0..dataset.len()).filter(|&i| !in_fold[i]).collect()
            };
            let (train, _, _) = CoxData::subset(design, dataset, &keep)?;
            let mut beta = vec![0.0; design.n_cols()];
            let mut trace = Vec::new();
            let mut devs = Vec::with_capacity(grid.len());
            for &lambda in &grid {
                let fit = cd_fit_data(&train, penalized.clone(), kind, lambda, &beta, &mut trace)?;
                beta = fit.coefficients;
                let dev = -2.0 * (full.pll(&beta)? - train.pll(&beta)?);
                devs.push(dev);
            }
            Ok(devs)
        })
        .collect();

    let mut total = vec![0.0; grid.len()];
    for devs in fold_devs {
        let devs = devs?;
        for (acc, d) in total.iter_mut().zip(devs) {
            *acc += d;
        }
    }
    let mut best = 0;
    for t in 1..grid.len() {
        if total[t] < total[best] {
            best = t;
        }
    }
    Ok(CvResult {
        lambda_star: grid[best],
        path: grid.into_iter().zip(total).collect(),
    })
}
