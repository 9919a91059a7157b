//! Frequentist Cox machinery: Breslow-tie partial likelihood, unpenalized
//! Newton-Raphson, penalized cyclic coordinate descent, cross-validation of
//! the penalty weight, and Breslow baseline prediction.

mod baseline;
mod coord;
mod cv;
mod newton;
mod partial;

pub use baseline::{breslow_baseline, forced_linear_predictor, predict_survival};
pub use coord::{cox_cd_fit, cox_cd_fit_traced, cox_cd_fit_warm, soft_threshold};
pub use cv::{cv_fold_assignment, cv_lambda, lambda_grid, CvResult};
pub use newton::cox_nr_fit;
pub use partial::{cox_partial_loglik, CoxData, PartialLoglik};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("dataset has no subjects")]
    EmptyData,
    #[error("dataset has no events")]
    NoEvents,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite linear predictor")]
    NonFiniteLinearPredictor,
    #[error("did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("monotone likelihood: coefficient diverged beyond |{0}|")]
    MonotoneLikelihood(f64),
    #[error("singular information matrix")]
    SingularInformation,
    #[error("penalty weight must be nonnegative (got {0})")]
    BadLambda(f64),
    #[error("cross-validation needs at least 2 folds (got {0})")]
    TooFewFolds(usize),
    #[error("fold {0} contains no events")]
    FoldWithoutEvents(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    None,
    Lasso,
    Ridge,
}

#[derive(Debug, Clone)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub lambda: f64,
    /// True exactly on the penalized (interaction) columns.
    pub penalized_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
pub struct Convergence {
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

/// A fitted Cox model aligned to the design's column order.
#[derive(Debug, Clone)]
pub struct CoxFit {
    pub coefficients: Vec<f64>,
    pub penalty: Penalty,
    pub convergence: Convergence,
    /// Wald covariance of the coefficients; only for Newton-Raphson fits.
    pub covariance: Option<nalgebra::DMatrix<f64>>,
}
