//! Breslow tie-corrected partial log-likelihood and its derivatives, over a
//! time-sorted view of the data.
//!
//! Subjects are sorted by a canonical key (time, event, treatment,
//! covariates) so that all downstream fits are invariant to the order in
//! which subjects arrive, bit for bit.

use super::FitError;
use crate::data::TrialDataset;
use crate::design::DesignMatrix;

/// Sorted, column-indexed view of a dataset/design pair. All Cox fitting
/// routines run on this structure; it is immutable once built.
pub struct CoxData {
    pub n: usize,
    pub n_events: usize,
    /// Sorted position -> original subject index.
    pub order: Vec<usize>,
    times: Vec<f64>,
    is_event: Vec<bool>,
    /// Half-open ranges of tied times, ascending.
    blocks: Vec<(u32, u32)>,
    /// Per column: 0/1 indicator by sorted position.
    col_mask: Vec<Vec<u8>>,
    /// Per column: sorted positions where the indicator is 1.
    pub col_members: Vec<Vec<u32>>,
    /// Per sorted position: columns with a 1 entry.
    rows: Vec<Vec<u16>>,
}

impl CoxData {
    pub fn new(design: &DesignMatrix, dataset: &TrialDataset) -> Result<Self, FitError> {
        if dataset.is_empty() {
            return Err(FitError::EmptyData);
        }
        if design.n_rows != dataset.len() {
            return Err(FitError::Dimension(format!(
                "design has {} rows, dataset has {}",
                design.n_rows,
                dataset.len()
            )));
        }
        let n = dataset.len();
        let mut order: Vec<usize> = (0..n).collect();
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

        let times: Vec<f64> = order.iter().map(|&i| dataset.subjects[i].time).collect();
        let is_event: Vec<bool> = order
            .iter()
            .map(|&i| dataset.subjects[i].event == 1)
            .collect();
        let n_events = is_event.iter().filter(|&&e| e).count();
        if n_events == 0 {
            return Err(FitError::NoEvents);
        }

        let mut blocks = Vec::new();
        let mut start = 0u32;
        for pos in 1..n {
            if times[pos] != times[pos - 1] {
                blocks.push((start, pos as u32));
                start = pos as u32;
            }
        }
        blocks.push((start, n as u32));

        // Invert the original-index order so columns can be translated.
        let mut pos_of = vec![0u32; n];
        for (pos, &orig) in order.iter().enumerate() {
            pos_of[orig] = pos as u32;
        }
        let m = design.n_cols();
        let mut col_mask = vec![vec![0u8; n]; m];
        let mut col_members = vec![Vec::new(); m];
        let mut rows = vec![Vec::new(); n];
        for (c, members) in design.cols.iter().enumerate() {
            let out = &mut col_members[c];
            for &orig in members {
                let pos = pos_of[orig as usize];
                col_mask[c][pos as usize] = 1;
                out.push(pos);
                rows[pos as usize].push(c as u16);
            }
            out.sort_unstable();
        }

        Ok(CoxData {
            n,
            n_events,
            order,
            times,
            is_event,
            blocks,
            col_mask,
            col_members,
            rows,
        })
    }

    /// Canonical-order rebuild over a subset of original subject indices.
    pub fn subset(
        design: &DesignMatrix,
        dataset: &TrialDataset,
        keep: &[usize],
    ) -> Result<(Self, TrialDataset, DesignMatrix), FitError> {
        let subjects = keep
            .iter()
            .map(|&i| dataset.subjects[i].clone())
            .collect::<Vec<_>>();
        let sub_dataset = TrialDataset { subjects };
        let mut new_index = vec![usize::MAX; dataset.len()];
        for (new, &old) in keep.iter().enumerate() {
            new_index[old] = new;
        }
        let cols = design
            .cols
            .iter()
            .map(|members| {
                members
                    .iter()
                    .filter_map(|&i| {
                        let ni = new_index[i as usize];
                        (ni != usize::MAX).then_some(ni as u32)
                    })
                    .collect()
            })
            .collect();
        let sub_design = DesignMatrix::from_columns(keep.len(), design.roles.clone(), cols);
        let data = CoxData::new(&sub_design, &sub_dataset)?;
        Ok((data, sub_dataset, sub_design))
    }

    pub fn n_cols(&self) -> usize {
        self.col_mask.len()
    }

    pub fn is_event(&self, pos: usize) -> bool {
        self.is_event[pos]
    }

    pub fn time(&self, pos: usize) -> f64 {
        self.times[pos]
    }

    /// Linear predictor by sorted position.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n];
        for (pos, cols) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &c in cols {
                acc += beta[c as usize];
            }
            eta[pos] = acc;
        }
        eta
    }

    fn check_finite(eta: &[f64]) -> Result<(), FitError> {
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFiniteLinearPredictor);
        }
        Ok(())
    }

    /// Partial log-likelihood at sorted linear predictors.
    pub fn pll_at_eta(&self, eta: &[f64]) -> Result<f64, FitError> {
        Self::check_finite(eta)?;
        let mut s0 = 0.0;
        let mut ll = 0.0;
        for &(start, end) in self.blocks.iter().rev() {
            let mut d = 0usize;
            for pos in start as usize..end as usize {
                s0 += eta[pos].exp();
                if self.is_event[pos] {
                    d += 1;
                    ll += eta[pos];
                }
            }
            if d > 0 {
                ll -= d as f64 * s0.ln();
            }
        }
        Ok(ll)
    }

    pub fn pll(&self, beta: &[f64]) -> Result<f64, FitError> {
        self.pll_at_eta(&self.linear_predictor(beta))
    }

    /// Value, gradient, and diagonal observed information of the partial
    /// log-likelihood. The information entries are nonnegative.
    pub fn pll_grad(&self, beta: &[f64]) -> Result<PartialLoglik, FitError> {
        let eta = self.linear_predictor(beta);
        Self::check_finite(&eta)?;
        let m = self.n_cols();
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; m];
        let mut value = 0.0;
        let mut gradient = vec![0.0; m];
        let mut info_diag = vec![0.0; m];
        for &(start, end) in self.blocks.iter().rev() {
            let mut d = 0.0;
            for pos in start as usize..end as usize {
                let w = eta[pos].exp();
                s0 += w;
                for &c in &self.rows[pos] {
                    s1[c as usize] += w;
                }
                if self.is_event[pos] {
                    d += 1.0;
                    value += eta[pos];
                    for &c in &self.rows[pos] {
                        gradient[c as usize] += 1.0;
                    }
                }
            }
            if d > 0.0 {
                value -= d * s0.ln();
                for c in 0..m {
                    let r = s1[c] / s0;
                    gradient[c] -= d * r;
                    // x is 0/1 so the second moment equals the first.
                    info_diag[c] += d * (r - r * r);
                }
            }
        }
        Ok(PartialLoglik {
            value,
            gradient,
            info_diag,
        })
    }

    /// Single-coordinate gradient and curvature of the partial
    /// log-likelihood given current risk weights `w = exp(eta)`.
    pub(super) fn coord_stats(&self, w: &[f64], col: usize) -> (f64, f64) {
        let mask = &self.col_mask[col];
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut g = 0.0;
        let mut h = 0.0;
        for &(start, end) in self.blocks.iter().rev() {
            let mut d = 0.0;
            let mut dx = 0.0;
            for pos in start as usize..end as usize {
                let wi = w[pos];
                s0 += wi;
                if mask[pos] == 1 {
                    s1 += wi;
                    if self.is_event[pos] {
                        dx += 1.0;
                    }
                }
                if self.is_event[pos] {
                    d += 1.0;
                }
            }
            if d > 0.0 {
                let r = s1 / s0;
                g += dx - d * r;
                h += d * (r - r * r);
            }
        }
        (g, h)
    }

    /// Full gradient/Hessian of the partial log-likelihood, for the dense
    /// Newton solver. Returns (value, gradient, observed information).
    pub(super) fn pll_grad_hess(
        &self,
        beta: &[f64],
    ) -> Result<(f64, Vec<f64>, nalgebra::DMatrix<f64>), FitError> {
        let eta = self.linear_predictor(beta);
        Self::check_finite(&eta)?;
        let m = self.n_cols();
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; m];
        let mut s2 = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut value = 0.0;
        let mut gradient = vec![0.0; m];
        let mut info = nalgebra::DMatrix::<f64>::zeros(m, m);
        for &(start, end) in self.blocks.iter().rev() {
            let mut d = 0.0;
            for pos in start as usize..end as usize {
                let w = eta[pos].exp();
                s0 += w;
                let cols = &self.rows[pos];
                for &a in cols {
                    s1[a as usize] += w;
                    for &b in cols {
                        s2[(a as usize, b as usize)] += w;
                    }
                }
                if self.is_event[pos] {
                    d += 1.0;
                    value += eta[pos];
                    for &c in cols {
                        gradient[c as usize] += 1.0;
                    }
                }
            }
            if d > 0.0 {
                value -= d * s0.ln();
                for a in 0..m {
                    let ra = s1[a] / s0;
                    gradient[a] -= d * ra;
                    for b in 0..m {
                        info[(a, b)] += d * (s2[(a, b)] / s0 - ra * s1[b] / s0);
                    }
                }
            }
        }
        Ok((value, gradient, info))
    }

    /// Unique event times (ascending) with event counts and the risk-set
    /// weight sums `S0` at each, for the Breslow baseline.
    pub(super) fn event_blocks(&self, w: &[f64]) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let mut s0 = 0.0;
        for &(start, end) in self.blocks.iter().rev() {
            let mut d = 0.0;
            for pos in start as usize..end as usize {
                s0 += w[pos];
                if self.is_event[pos] {
                    d += 1.0;
                }
            }
            if d > 0.0 {
                out.push((self.times[start as usize], d, s0));
            }
        }
        out.reverse();
        out
    }
}

/// Value and derivatives of the Breslow partial log-likelihood.
#[derive(Debug, Clone)]
pub struct PartialLoglik {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Diagonal of the observed information (nonnegative).
    pub info_diag: Vec<f64>,
}

/// Breslow tie-corrected partial log-likelihood of the Cox model with value,
/// gradient, and diagonal observed information.
pub fn cox_partial_loglik(
    design: &DesignMatrix,
    dataset: &TrialDataset,
    coefficients: &[f64],
) -> Result<PartialLoglik, FitError> {
    if coefficients.len() != design.n_cols() {
        return Err(FitError::Dimension(format!(
            "{} coefficients for {} columns",
            coefficients.len(),
            design.n_cols()
        )));
    }
    CoxData::new(design, dataset)?.pll_grad(coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{schema_from_counts, Subject, TrialDataset};
    use crate::design::build_design;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;

    fn sub(t: f64, e: u8, z: u8, c: Vec<usize>) -> Subject {
        Subject {
            time: t,
            event: e,
            treatment: z,
            covariates: c,
        }
    }

    #[test]
    fn uniform_risk_sets_value() {
        let schema = schema_from_counts(&[("x", &["a", "b"])]);
        let data = TrialDataset::new(
            vec![sub(1.0, 1, 0, vec![0]), sub(2.0, 1, 1, vec![1])],
            &schema,
        )
        .unwrap();
        let design = build_design(&data, &schema);
        let pl = cox_partial_loglik(&design, &data, &vec![0.0; 5]).unwrap();
        assert_abs_diff_eq!(pl.value, -(2.0f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn single_event_subject_is_zero_at_any_coefficients() {
        let schema = schema_from_counts(&[("x", &["a", "b"])]);
        let data = TrialDataset::new(vec![sub(3.0, 1, 1, vec![0])], &schema).unwrap();
        let design = build_design(&data, &schema);
        for beta in [vec![0.0; 5], vec![1.0, -2.0, 0.5, 3.0, -1.0]] {
            let pl = cox_partial_loglik(&design, &data, &beta).unwrap();
            assert_abs_diff_eq!(pl.value, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let schema = schema_from_counts(&[("x", &["a", "b"]), ("y", &["a", "b", "c"])]);
        let mut rng = StdRng::seed_from_u64(11);
        let subjects: Vec<Subject> = (0..60)
            .map(|_| {
                sub(
                    rng.gen_range(0.1..8.0),
                    rng.gen_range(0..2) as u8,
                    rng.gen_range(0..2) as u8,
                    vec![rng.gen_range(0..2), rng.gen_range(0..3)],
                )
            })
            .collect();
        let data = TrialDataset::new(subjects, &schema).unwrap();
        let design = build_design(&data, &schema);
        let m = design.n_cols();
        for _ in 0..5 {
            let beta: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let pl = cox_partial_loglik(&design, &data, &beta).unwrap();
            let h = 1e-5;
            for c in 0..m {
                let mut bp = beta.clone();
                let mut bm = beta.clone();
                bp[c] += h;
                bm[c] -= h;
                let fd = (cox_partial_loglik(&design, &data, &bp).unwrap().value
                    - cox_partial_loglik(&design, &data, &bm).unwrap().value)
                    / (2.0 * h);
                let scale = fd.abs().max(1e-3);
                assert!(
                    (pl.gradient[c] - fd).abs() / scale < 1e-6,
                    "col {c}: analytic {} vs fd {fd}",
                    pl.gradient[c]
                );
            }
        }
    }

    #[test]
    fn info_diag_matches_second_differences() {
        let schema = schema_from_counts(&[("x", &["a", "b"])]);
        let mut rng = StdRng::seed_from_u64(3);
        let subjects: Vec<Subject> = (0..40)
            .map(|_| {
                sub(
                    rng.gen_range(0.1..5.0),
                    rng.gen_range(0..2) as u8,
                    rng.gen_range(0..2) as u8,
                    vec![rng.gen_range(0..2)],
                )
            })
            .collect();
        let data = TrialDataset::new(subjects, &schema).unwrap();
        let design = build_design(&data, &schema);
        let beta = vec![0.3, -0.2, 0.1, 0.4, -0.5];
        let pl = cox_partial_loglik(&design, &data, &beta).unwrap();
        let h = 1e-4;
        for c in 0..design.n_cols() {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[c] += h;
            bm[c] -= h;
            let f0 = pl.value;
            let fp = cox_partial_loglik(&design, &data, &bp).unwrap().value;
            let fm = cox_partial_loglik(&design, &data, &bm).unwrap().value;
            let second = (fp - 2.0 * f0 + fm) / (h * h);
            assert_abs_diff_eq!(-second, pl.info_diag[c], epsilon = 1e-4);
        }
    }

    #[test]
    fn sorted_view_is_order_invariant() {
        let schema = schema_from_counts(&[("x", &["a", "b"])]);
        let mut rng = StdRng::seed_from_u64(5);
        let mut subjects: Vec<Subject> = (0..30)
            .map(|_| {
                sub(
                    rng.gen_range(0.1..5.0),
                    rng.gen_range(0..2) as u8,
                    rng.gen_range(0..2) as u8,
                    vec![rng.gen_range(0..2)],
                )
            })
            .collect();
        let d1 = TrialDataset::new(subjects.clone(), &schema).unwrap();
        let design1 = build_design(&d1, &schema);
        let beta = vec![0.2, 0.1, -0.1, 0.3, 0.0];
        let p1 = cox_partial_loglik(&design1, &d1, &beta).unwrap();
        subjects.shuffle(&mut rng);
        let d2 = TrialDataset::new(subjects, &schema).unwrap();
        let design2 = build_design(&d2, &schema);
        let p2 = cox_partial_loglik(&design2, &d2, &beta).unwrap();
        assert_eq!(p1.value, p2.value);
        assert_eq!(p1.gradient, p2.gradient);
    }
}
