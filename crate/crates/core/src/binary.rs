//! Binary-outcome extension: a global logistic model with the same
//! treatment/main/interaction structure, standardization to marginal event
//! probabilities per subgroup and arm, and the executable equivalence check
//! between standardized and observed per-cell proportions for unpenalized
//! fits.

use crate::cox::PenaltyKind;
use crate::data::{
    parse_covariates, resolve_header, DataError, SubgroupSchema,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const EPS_RIDGE: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-10;
const COORD_TOL: f64 = 1e-9;
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Error)]
pub enum BinaryError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("both outcome classes must be present")]
    OneClassOnly,
    #[error("separation detected: a coefficient diverged beyond |{0}|")]
    Separation(f64),
    #[error("did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("penalty weight must be nonnegative (got {0})")]
    BadLambda(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySubject {
    pub outcome: u8,
    pub treatment: u8,
    pub covariates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryDataset {
    pub subjects: Vec<BinarySubject>,
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }
}

/// Parses a binary-outcome CSV: `outcome,treatment` plus one column per
/// schema variable.
pub fn parse_binary_dataset(
    csv_text: &str,
    schema: &SubgroupSchema,
) -> Result<BinaryDataset, BinaryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let header = reader.headers().map_err(DataError::from)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(DataError::EmptyFile.into());
    }
    let map = resolve_header(&header, &["outcome", "treatment"], schema)?;
    let mut subjects = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(DataError::from)?;
        if record.len() != map.width {
            return Err(DataError::RaggedRow {
                row,
                got: record.len(),
                expected: map.width,
            }
            .into());
        }
        let parse_flag = |idx: usize, column: &str| -> Result<u8, DataError> {
            let raw = crate::data::require_field(&record, idx, row, column)?;
            match raw {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(DataError::NotBinary {
                    row,
                    column: column.to_string(),
                    value: other.to_string(),
                }),
            }
        };
        subjects.push(BinarySubject {
            outcome: parse_flag(map.fixed[0], "outcome")?,
            treatment: parse_flag(map.fixed[1], "treatment")?,
            covariates: parse_covariates(&record, &map, schema, row)?,
        });
    }
    Ok(BinaryDataset { subjects })
}

/// Column layout: `[intercept, treatment, K mains, K interactions]`.
fn dense_design(dataset: &BinaryDataset, schema: &SubgroupSchema) -> DMatrix<f64> {
    let n = dataset.len();
    let k_total = schema.n_subgroups();
    let d = 2 + 2 * k_total;
    let mut x = DMatrix::zeros(n, d);
    for (i, s) in dataset.subjects.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = f64::from(s.treatment);
        let mut offset = 0;
        for (j, v) in schema.variables.iter().enumerate() {
            let k = offset + s.covariates[j];
            x[(i, 2 + k)] = 1.0;
            if s.treatment == 1 {
                x[(i, 2 + k_total + k)] = 1.0;
            }
            offset += v.levels.len();
        }
    }
    x
}

/// Fitted global logistic model.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// `[intercept, treatment, mains.., interactions..]`.
    pub coefficients: Vec<f64>,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub iterations: usize,
}

fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log likelihood and gradient of the (unpenalized) logistic model.
pub fn logistic_loglik_grad(
    dataset: &BinaryDataset,
    schema: &SubgroupSchema,
    coefficients: &[f64],
) -> (f64, Vec<f64>) {
    let x = dense_design(dataset, schema);
    let beta = DVector::from_column_slice(coefficients);
    let lp = &x * &beta;
    let mut value = 0.0;
    let mut grad = DVector::zeros(x.ncols());
    for (i, s) in dataset.subjects.iter().enumerate() {
        let eta: f64 = lp[i];
        let y = f64::from(s.outcome);
        // log p(y) = y eta - log(1 + exp(eta))
        value += y * eta - if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        let resid = y - expit(eta);
        for c in 0..x.ncols() {
            grad[c] += x[(i, c)] * resid;
        }
    }
    (value, grad.iter().cloned().collect())
}

/// Maximum-likelihood (or penalized) logistic fit. Only interaction columns
/// carry the lasso/ridge penalty; a tiny ridge pins the overparameterized
/// remainder.
pub fn fit_global_logistic(
    dataset: &BinaryDataset,
    schema: &SubgroupSchema,
    penalty: PenaltyKind,
    lambda: f64,
) -> Result<LogisticFit, BinaryError> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(BinaryError::BadLambda(lambda));
    }
    let events: usize = dataset.subjects.iter().map(|s| s.outcome as usize).sum();
    if events == 0 || events == dataset.len() {
        return Err(BinaryError::OneClassOnly);
    }
    match penalty {
        PenaltyKind::None => newton_fit(dataset, schema),
        _ => cd_fit(dataset, schema, penalty, lambda),
    }
}

fn newton_fit(dataset: &BinaryDataset, schema: &SubgroupSchema) -> Result<LogisticFit, BinaryError> {
    let x = dense_design(dataset, schema);
    let y: DVector<f64> = DVector::from_iterator(
        dataset.len(),
        dataset.subjects.iter().map(|s| f64::from(s.outcome)),
    );
    let d = x.ncols();
    let mut beta = DVector::zeros(d);
    for iter in 0..200 {
        let lp = &x * &beta;
        let p: DVector<f64> = lp.map(expit);
        let resid = &y - &p;
        let grad = x.transpose() * &resid - EPS_RIDGE * &beta;
        if grad.norm() < GRAD_TOL {
            return Ok(LogisticFit {
                coefficients: beta.iter().cloned().collect(),
                penalty: PenaltyKind::None,
                lambda: 0.0,
                iterations: iter,
            });
        }
        let w: DVector<f64> = p.map(|pi| (pi * (1.0 - pi)).max(1e-12));
        let mut xtwx = DMatrix::zeros(d, d);
        for i in 0..x.nrows() {
            let wi = w[i];
            for a in 0..d {
                let xa = x[(i, a)];
                if xa == 0.0 {
                    continue;
                }
                for b in 0..d {
                    xtwx[(a, b)] += wi * xa * x[(i, b)];
                }
            }
        }
        for a in 0..d {
            xtwx[(a, a)] += EPS_RIDGE;
        }
        let step = xtwx
            .cholesky()
            .map(|ch| ch.solve(&grad))
            .ok_or(BinaryError::NonConvergence(iter))?;
        beta += step;
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            return Err(BinaryError::Separation(SEPARATION_BOUND));
        }
    }
    Err(BinaryError::NonConvergence(200))
}

fn cd_fit(
    dataset: &BinaryDataset,
    schema: &SubgroupSchema,
    penalty: PenaltyKind,
    lambda: f64,
) -> Result<LogisticFit, BinaryError> {
    let x = dense_design(dataset, schema);
    let n = x.nrows();
    let d = x.ncols();
    let k_total = schema.n_subgroups();
    let penalized = |c: usize| c >= 2 + k_total;
    let y: Vec<f64> = dataset
        .subjects
        .iter()
        .map(|s| f64::from(s.outcome))
        .collect();
    let mut beta = vec![0.0; d];
    let mut lp = vec![0.0; n];
    for sweep in 0..100_000 {
        let mut max_delta = 0.0f64;
        for c in 0..d {
            let mut g = 0.0;
            let mut h = 0.0;
            for i in 0..n {
                let xic = x[(i, c)];
                if xic == 0.0 {
                    continue;
                }
                let p = expit(lp[i]);
                g += xic * (y[i] - p);
                h += xic * xic * (p * (1.0 - p)).max(1e-12);
            }
            let b = beta[c];
            let u = if penalized(c) {
                match penalty {
                    PenaltyKind::Lasso => {
                        crate::cox::soft_threshold(h * b + g, lambda) / (h + EPS_RIDGE)
                    }
                    PenaltyKind::Ridge => (h * b + g) / (h + 2.0 * lambda + EPS_RIDGE),
                    PenaltyKind::None => (h * b + g) / (h + EPS_RIDGE),
                }
            } else {
                (h * b + g) / (h + EPS_RIDGE)
            };
            let delta = (u - b).clamp(-2.0, 2.0);
            if delta != 0.0 {
                beta[c] = b + delta;
                for i in 0..n {
                    let xic = x[(i, c)];
                    if xic != 0.0 {
                        lp[i] += delta * xic;
                    }
                }
                max_delta = max_delta.max(delta.abs());
            }
            if beta[c].abs() > SEPARATION_BOUND {
                return Err(BinaryError::Separation(SEPARATION_BOUND));
            }
        }
        if max_delta < COORD_TOL {
            return Ok(LogisticFit {
                coefficients: beta,
                penalty,
                lambda,
                iterations: sweep + 1,
            });
        }
    }
    Err(BinaryError::NonConvergence(100_000))
}

/// Linear predictor with the treatment and interaction block forced to `arm`.
pub fn forced_logistic_lp(
    coefficients: &[f64],
    schema: &SubgroupSchema,
    covariates: &[usize],
    arm: u8,
) -> f64 {
    let k_total = schema.n_subgroups();
    let a = f64::from(arm);
    let mut lp = coefficients[0] + coefficients[1] * a;
    let mut offset = 0;
    for (j, v) in schema.variables.iter().enumerate() {
        let k = offset + covariates[j];
        lp += coefficients[2 + k] + a * coefficients[2 + k_total + k];
        offset += v.levels.len();
    }
    lp
}

/// Marginal event probabilities per subgroup and arm with derived effect
/// measures. Odds and risk ratios are undefined (left out) when a marginal
/// probability hits 0 or 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinarySubgroupEffect {
    pub subgroup: usize,
    pub p_control: f64,
    pub p_intervention: f64,
    pub risk_difference: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odds_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk_ratio: Option<f64>,
}

pub fn standardize_binary(
    fit: &LogisticFit,
    dataset: &BinaryDataset,
    schema: &SubgroupSchema,
) -> Vec<BinarySubgroupEffect> {
    let k_total = schema.n_subgroups();
    (0..k_total)
        .map(|k| {
            let (j, l) = schema.subgroup_of(k);
            let members: Vec<&BinarySubject> = dataset
                .subjects
                .iter()
                .filter(|s| s.covariates[j] == l)
                .collect();
            let mean_for = |arm: u8| {
                members
                    .iter()
                    .map(|s| expit(forced_logistic_lp(&fit.coefficients, schema, &s.covariates, arm)))
                    .sum::<f64>()
                    / members.len().max(1) as f64
            };
            let p0 = mean_for(0);
            let p1 = mean_for(1);
            let interior = |p: f64| p > 0.0 && p < 1.0;
            BinarySubgroupEffect {
                subgroup: k,
                p_control: p0,
                p_intervention: p1,
                risk_difference: p1 - p0,
                odds_ratio: (interior(p0) && interior(p1))
                    .then(|| (p1 / (1.0 - p1)) / (p0 / (1.0 - p0))),
                risk_ratio: (p0 > 0.0).then(|| p1 / p0),
            }
        })
        .collect()
}

/// Per-cell comparison of standardized and observed event proportions over
/// the subgroup-by-arm cells `{i : z_i = a, s_ik = 1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceCell {
    pub subgroup: usize,
    pub arm: u8,
    pub predicted_mean: f64,
    pub observed_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub cells: Vec<EquivalenceCell>,
    pub max_discrepancy: f64,
}

/// For an unpenalized converged fit, the mean predicted probability over
/// each subgroup-by-arm cell equals the observed event proportion (to
/// solver tolerance); the returned maximum discrepancy makes that checkable.
pub fn check_equivalence(
    fit: &LogisticFit,
    dataset: &BinaryDataset,
    schema: &SubgroupSchema,
) -> EquivalenceReport {
    let mut cells = Vec::new();
    let mut max_disc = 0.0f64;
    for k in 0..schema.n_subgroups() {
        let (j, l) = schema.subgroup_of(k);
        for arm in 0..2u8 {
            let members: Vec<&BinarySubject> = dataset
                .subjects
                .iter()
                .filter(|s| s.covariates[j] == l && s.treatment == arm)
                .collect();
            if members.is_empty() {
                continue;
            }
            let predicted = members
                .iter()
                .map(|s| expit(forced_logistic_lp(&fit.coefficients, schema, &s.covariates, arm)))
                .sum::<f64>()
                / members.len() as f64;
            let observed = members.iter().map(|s| f64::from(s.outcome)).sum::<f64>()
                / members.len() as f64;
            max_disc = max_disc.max((predicted - observed).abs());
            cells.push(EquivalenceCell {
                subgroup: k,
                arm,
                predicted_mean: predicted,
                observed_mean: observed,
            });
        }
    }
    EquivalenceReport {
        cells,
        max_discrepancy: max_disc,
    }
}
