//! Unpenalized Newton-Raphson maximum partial-likelihood fitting for small,
//! full-rank designs (treatment-only and single-interaction candidate
//! models), with Wald covariances from the inverse observed information.

use super::partial::CoxData;
use super::{Convergence, CoxFit, FitError, Penalty, PenaltyKind};
use crate::data::TrialDataset;
use crate::design::DesignMatrix;
use nalgebra::{DMatrix, DVector};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-9;
const DIVERGENCE_BOUND: f64 = 20.0;

pub fn cox_nr_fit(design: &DesignMatrix, dataset: &TrialDataset) -> Result<CoxFit, FitError> {
    let data = CoxData::new(design, dataset)?;
    nr_fit_data(&data)
}

pub(super) fn nr_fit_data(data: &CoxData) -> Result<CoxFit, FitError> {
    let m = data.n_cols();
    let mut beta = vec![0.0; m];
    let (mut value, mut grad, mut info) = data.pll_grad_hess(&beta)?;
    for iter in 0..MAX_ITER {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < GRAD_TOL {
            let covariance = invert_information(&info)?;
            return Ok(CoxFit {
                coefficients: beta,
                penalty: Penalty {
                    kind: PenaltyKind::None,
                    lambda: 0.0,
                    penalized_mask: vec![false; m],
                },
                convergence: Convergence {
                    iterations: iter,
                    final_gradient_norm: gnorm,
                },
                covariance: Some(covariance),
            });
        }
        let g = DVector::from_column_slice(&grad);
        let step = info
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&g))
            .or_else(|| info.clone().lu().solve(&g))
            .ok_or(FitError::SingularInformation)?;

        // Halve the step until the partial log-likelihood improves. The
        // slack scales with |pll| so evaluation noise near the optimum
        // cannot reject the full Newton step.
        let slack = 1e-9 * (1.0 + value.abs());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            match data.pll(&trial) {
                Ok(v) if v >= value - slack => {
                    beta = trial;
                    accepted = true;
                    break;
                }
                _ => scale *= 0.5,
            }
        }
        if !accepted {
            return Err(FitError::NonConvergence(iter));
        }
        if beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
            return Err(FitError::MonotoneLikelihood(DIVERGENCE_BOUND));
        }
        let next = data.pll_grad_hess(&beta)?;
        value = next.0;
        grad = next.1;
        info = next.2;
    }
    Err(FitError::NonConvergence(MAX_ITER))
}

fn invert_information(info: &DMatrix<f64>) -> Result<DMatrix<f64>, FitError> {
    info.clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .or_else(|| info.clone().try_inverse())
        .ok_or(FitError::SingularInformation)
}
