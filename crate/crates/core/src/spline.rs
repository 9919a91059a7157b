//! M-spline basis for the baseline hazard and its integrated (I-spline)
//! counterpart for the cumulative hazard.
//!
//! M-splines are B-splines rescaled to integrate to one over the support, so
//! a simplex-weighted mixture is a density on the knot span. Integrals are
//! evaluated exactly with two-point Gauss-Legendre per knot segment (the
//! basis is piecewise cubic).

use crate::data::TrialDataset;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    #[error("need at least 5 distinct uncensored event times (got {0})")]
    TooFewEventTimes(usize),
    #[error("spline degree must be at least 1")]
    BadDegree,
}

#[derive(Debug, Clone)]
pub struct MsplineBasis {
    pub degree: usize,
    pub interior_knots: Vec<f64>,
    pub boundary: (f64, f64),
    /// Extended knot vector: boundary knots repeated `degree + 1` times.
    knots: Vec<f64>,
    n_basis: usize,
    /// Cumulative integral of each basis function up to each distinct-knot
    /// segment start.
    segment_starts: Vec<f64>,
    segment_cum: Vec<Vec<f64>>,
}

/// Type-7 (linear interpolation) quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

impl MsplineBasis {
    pub fn new(
        degree: usize,
        interior_knots: Vec<f64>,
        boundary: (f64, f64),
    ) -> Result<Self, SplineError> {
        if degree == 0 {
            return Err(SplineError::BadDegree);
        }
        let order = degree + 1;
        let mut knots = vec![boundary.0; order];
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat(boundary.1).take(order));
        let n_basis = knots.len() - order;
        let mut basis = MsplineBasis {
            degree,
            interior_knots,
            boundary,
            knots,
            n_basis,
            segment_starts: Vec::new(),
            segment_cum: Vec::new(),
        };
        basis.precompute_integrals();
        Ok(basis)
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    fn order(&self) -> usize {
        self.degree + 1
    }

    /// B-spline `N_{i,k}` by Cox-de Boor recursion (partition of unity).
    fn bspline(&self, i: usize, k: usize, x: f64) -> f64 {
        let t = &self.knots;
        if k == 1 {
            // Close the last nonempty interval at the upper boundary.
            let closing = x == self.boundary.1 && t[i] < t[i + 1] && t[i + 1] == self.boundary.1;
            return if (t[i] <= x && x < t[i + 1]) || closing {
                1.0
            } else {
                0.0
            };
        }
        let mut value = 0.0;
        let d1 = t[i + k - 1] - t[i];
        if d1 > 0.0 {
            value += (x - t[i]) / d1 * self.bspline(i, k - 1, x);
        }
        let d2 = t[i + k] - t[i + 1];
        if d2 > 0.0 {
            value += (t[i + k] - x) / d2 * self.bspline(i + 1, k - 1, x);
        }
        value
    }

    /// One M-spline basis value: `k N_{m,k}(x) / (t_{m+k} - t_m)`.
    pub fn m_value(&self, m: usize, x: f64) -> f64 {
        if x < self.boundary.0 || x > self.boundary.1 {
            return 0.0;
        }
        let k = self.order();
        let span = self.knots[m + k] - self.knots[m];
        if span <= 0.0 {
            return 0.0;
        }
        k as f64 * self.bspline(m, k, x) / span
    }

    /// All M basis values at `x`.
    pub fn m_values(&self, x: f64) -> Vec<f64> {
        (0..self.n_basis).map(|m| self.m_value(m, x)).collect()
    }

    fn gauss2(&self, m: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let offset = half / 3.0f64.sqrt();
        half * (self.m_value(m, mid - offset) + self.m_value(m, mid + offset))
    }

    fn precompute_integrals(&mut self) {
        let mut starts: Vec<f64> = Vec::new();
        starts.push(self.boundary.0);
        for &k in &self.interior_knots {
            if *starts.last().unwrap() < k {
                starts.push(k);
            }
        }
        starts.push(self.boundary.1);
        let mut cum = vec![vec![0.0; starts.len()]; self.n_basis];
        for m in 0..self.n_basis {
            let mut acc = 0.0;
            for s in 1..starts.len() {
                acc += self.gauss2(m, starts[s - 1], starts[s]);
                cum[m][s] = acc;
            }
        }
        self.segment_starts = starts;
        self.segment_cum = cum;
    }

    /// Integrated basis value `I_m(x) = int_lo^x M_m`; 0 below the lower
    /// boundary and 1 above the upper.
    pub fn i_value(&self, m: usize, x: f64) -> f64 {
        if x <= self.boundary.0 {
            return 0.0;
        }
        if x >= self.boundary.1 {
            return 1.0;
        }
        let seg = self.segment_starts.partition_point(|&s| s <= x) - 1;
        let base = self.segment_cum[m][seg];
        (base + self.gauss2(m, self.segment_starts[seg], x)).min(1.0)
    }

    /// All I basis values at `x`.
    pub fn i_values(&self, x: f64) -> Vec<f64> {
        (0..self.n_basis).map(|m| self.i_value(m, x)).collect()
    }
}

/// Cubic M-spline basis with interior knots at the quartiles of the observed
/// uncensored event times and boundary knots at the min/max event time
/// widened by the smallest gap between distinct event times. A lower
/// boundary pushed to zero or below is clipped to half the smallest event
/// time. Duplicate quartiles collapse (reducing the basis size).
pub fn build_mspline_basis(dataset: &TrialDataset) -> Result<MsplineBasis, SplineError> {
    build_mspline_basis_from_times(
        &dataset
            .subjects
            .iter()
            .filter(|s| s.event == 1)
            .map(|s| s.time)
            .collect::<Vec<_>>(),
    )
}

pub fn build_mspline_basis_from_times(event_times: &[f64]) -> Result<MsplineBasis, SplineError> {
    let mut times = event_times.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = times.clone();
    distinct.dedup();
    if distinct.len() < 5 {
        return Err(SplineError::TooFewEventTimes(distinct.len()));
    }
    let gap = distinct
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let min_t = distinct[0];
    let max_t = *distinct.last().unwrap();
    let mut lo = min_t - gap;
    if lo <= 0.0 {
        lo = 0.5 * min_t;
    }
    let hi = max_t + gap;
    let mut interior: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&p| quantile_sorted(&times, p))
        .collect();
    interior.dedup();
    MsplineBasis::new(3, interior, (lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn knots_for_one_to_five() {
        let b = build_mspline_basis_from_times(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(b.interior_knots, vec![2.0, 3.0, 4.0]);
        // min - gap = 0 would be nonpositive; clipped to half the smallest
        // event time.
        assert_eq!(b.boundary, (0.5, 6.0));
        assert_eq!(b.n_basis(), 7);
    }

    #[test]
    fn basis_nonnegative_on_grid() {
        let b = build_mspline_basis_from_times(&[0.7, 1.4, 2.2, 3.9, 5.5, 6.1, 8.0]).unwrap();
        for g in 0..50 {
            let x = 0.1 + g as f64 * (9.0 - 0.1) / 49.0;
            for v in b.m_values(x) {
                assert!(v >= 0.0, "M({x}) = {v}");
            }
        }
    }

    #[test]
    fn integrated_basis_reaches_one_at_upper_boundary() {
        let b = build_mspline_basis_from_times(&[0.7, 1.4, 2.2, 3.9, 5.5, 6.1, 8.0]).unwrap();
        for m in 0..b.n_basis() {
            assert_abs_diff_eq!(b.i_value(m, b.boundary.1), 1.0, epsilon = 1e-10);
            assert_eq!(b.i_value(m, 100.0), 1.0);
            assert_eq!(b.i_value(m, 0.0), 0.0);
        }
    }

    #[test]
    fn integral_matches_fine_simpson_quadrature() {
        let b = build_mspline_basis_from_times(&[1.0, 1.7, 2.9, 4.1, 5.3]).unwrap();
        let (lo, hi) = b.boundary;
        for m in 0..b.n_basis() {
            for frac in [0.2, 0.45, 0.8, 0.99] {
                let x = lo + frac * (hi - lo);
                let n = 20_000;
                let h = (x - lo) / n as f64;
                let mut acc = b.m_value(m, lo) + b.m_value(m, x);
                for j in 1..n {
                    let xi = lo + j as f64 * h;
                    acc += b.m_value(m, xi) * if j % 2 == 1 { 4.0 } else { 2.0 };
                }
                let simpson = acc * h / 3.0;
                assert_abs_diff_eq!(b.i_value(m, x), simpson, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn i_spline_is_nondecreasing() {
        let b = build_mspline_basis_from_times(&[0.9, 1.8, 2.7, 3.6, 4.5, 7.2]).unwrap();
        for m in 0..b.n_basis() {
            let mut prev = 0.0;
            for g in 0..200 {
                let x = g as f64 * 8.0 / 199.0;
                let v = b.i_value(m, x);
                assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn tied_quartiles_collapse() {
        let times = vec![1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0, 4.0, 5.0];
        let b = build_mspline_basis_from_times(&times).unwrap();
        assert!(b.interior_knots.len() < 3);
        assert_eq!(b.n_basis(), b.interior_knots.len() + 4);
        for m in 0..b.n_basis() {
            assert_abs_diff_eq!(b.i_value(m, b.boundary.1), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn too_few_distinct_times_is_an_error() {
        let err = build_mspline_basis_from_times(&[1.0, 1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(err, SplineError::TooFewEventTimes(4));
    }
}
