//! The overparameterized design matrix shared by all global-model estimators.
//!
//! Columns are `[treatment] ++ [K main-effect indicators] ++ [K interaction
//! indicators]` with variables in schema order and levels in declared order.
//! Every column is a 0/1 indicator, so the matrix is stored column-wise as
//! sorted lists of the rows where the column equals one.

use crate::data::{SubgroupSchema, TrialDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Treatment,
    Main(usize),
    Interaction(usize),
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub roles: Vec<ColumnRole>,
    /// Per column: ascending row indices where the indicator equals 1.
    pub cols: Vec<Vec<u32>>,
}

impl DesignMatrix {
    pub fn n_cols(&self) -> usize {
        self.roles.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        if self.cols[col].binary_search(&(row as u32)).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    /// Dense row, for small-dimension solvers.
    pub fn dense_row(&self, row: usize) -> Vec<f64> {
        (0..self.n_cols()).map(|c| self.value(row, c)).collect()
    }

    /// `X beta` accumulated column-wise over the sparse pattern.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.n_cols());
        let mut lp = vec![0.0; self.n_rows];
        for (c, members) in self.cols.iter().enumerate() {
            let b = beta[c];
            if b == 0.0 {
                continue;
            }
            for &i in members {
                lp[i as usize] += b;
            }
        }
        lp
    }

    /// Builds a design from explicit indicator columns.
    pub fn from_columns(n_rows: usize, roles: Vec<ColumnRole>, cols: Vec<Vec<u32>>) -> Self {
        assert_eq!(roles.len(), cols.len());
        debug_assert!(cols
            .iter()
            .all(|c| c.windows(2).all(|w| w[0] < w[1]) && c.iter().all(|&i| (i as usize) < n_rows)));
        DesignMatrix { n_rows, roles, cols }
    }

    /// Indices of penalized (interaction) columns.
    pub fn interaction_columns(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(c, r)| matches!(r, ColumnRole::Interaction(_)).then_some(c))
            .collect()
    }
}

/// Builds the `1 + 2K` column design for a validated dataset.
pub fn build_design(dataset: &TrialDataset, schema: &SubgroupSchema) -> DesignMatrix {
    let n = dataset.len();
    let k_total = schema.n_subgroups();
    let treated: Vec<u32> = (0..n)
        .filter(|&i| dataset.subjects[i].treatment == 1)
        .map(|i| i as u32)
        .collect();

    let mut roles = Vec::with_capacity(1 + 2 * k_total);
    let mut cols = Vec::with_capacity(1 + 2 * k_total);
    roles.push(ColumnRole::Treatment);
    cols.push(treated.clone());

    let mut mains: Vec<Vec<u32>> = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let (j, l) = schema.subgroup_of(k);
        mains.push(
            (0..n)
                .filter(|&i| dataset.subjects[i].covariates[j] == l)
                .map(|i| i as u32)
                .collect(),
        );
    }
    for (k, members) in mains.iter().enumerate() {
        roles.push(ColumnRole::Main(k));
        cols.push(members.clone());
    }
    for (k, members) in mains.iter().enumerate() {
        roles.push(ColumnRole::Interaction(k));
        cols.push(
            members
                .iter()
                .copied()
                .filter(|i| dataset.subjects[*i as usize].treatment == 1)
                .collect(),
        );
    }
    DesignMatrix::from_columns(n, roles, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{schema_from_counts, Subject, TrialDataset};
    use rand::prelude::*;

    fn subject(t: f64, e: u8, z: u8, cov: Vec<usize>) -> Subject {
        Subject {
            time: t,
            event: e,
            treatment: z,
            covariates: cov,
        }
    }

    #[test]
    fn one_binary_variable_gives_five_columns() {
        let schema = schema_from_counts(&[("x1", &["a", "b"])]);
        let data = TrialDataset::new(
            vec![subject(1.0, 1, 0, vec![1]), subject(2.0, 1, 1, vec![0])],
            &schema,
        )
        .unwrap();
        let d = build_design(&data, &schema);
        assert_eq!(d.n_cols(), 5);
        // control subject at level b: (0, 0,1, 0,0)
        assert_eq!(d.dense_row(0), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.dense_row(1), vec![1.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn intervention_row_two_binary_variables() {
        let schema = schema_from_counts(&[("x1", &["a", "b"]), ("x2", &["a", "b"])]);
        let data = TrialDataset::new(vec![subject(1.0, 1, 1, vec![0, 1])], &schema).unwrap();
        let d = build_design(&data, &schema);
        assert_eq!(
            d.dense_row(0),
            vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn table_s1_shape() {
        // Ten variables: six 2-level, three 3-level, one 4-level -> K = 25.
        let schema = crate::sim::table_s1_schema();
        assert_eq!(schema.n_subgroups(), 25);
        let mut rng = StdRng::seed_from_u64(1);
        let subjects: Vec<Subject> = (0..40)
            .map(|i| {
                let cov = schema
                    .variables
                    .iter()
                    .map(|v| rng.gen_range(0..v.levels.len()))
                    .collect();
                subject(0.5 + i as f64, (i % 2) as u8, (i % 2) as u8, cov)
            })
            .collect();
        let data = TrialDataset::new(subjects, &schema).unwrap();
        let d = build_design(&data, &schema);
        assert_eq!(d.n_cols(), 51);
    }

    #[test]
    fn main_block_row_sums_and_interaction_masking() {
        let schema = schema_from_counts(&[("a", &["x", "y"]), ("b", &["x", "y", "z"])]);
        let p = schema.n_variables();
        let k_total = schema.n_subgroups();
        let mut rng = StdRng::seed_from_u64(9);
        let subjects: Vec<Subject> = (0..200)
            .map(|_| {
                subject(
                    rng.gen_range(0.1..5.0),
                    rng.gen_range(0..2) as u8,
                    rng.gen_range(0..2) as u8,
                    schema
                        .variables
                        .iter()
                        .map(|v| rng.gen_range(0..v.levels.len()))
                        .collect(),
                )
            })
            .collect();
        let data = TrialDataset::new(subjects, &schema).unwrap();
        let d = build_design(&data, &schema);
        for i in 0..data.len() {
            let row = d.dense_row(i);
            let main_sum: f64 = row[1..1 + k_total].iter().sum();
            assert_eq!(main_sum, p as f64);
            for k in 0..k_total {
                assert_eq!(row[1 + k_total + k], row[1 + k] * row[0]);
            }
        }
    }
}
