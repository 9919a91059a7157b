//! Shared test fixtures: small simulated proportional-hazards datasets.
#![cfg(test)]

use crate::data::{Subject, SubgroupSchema, TrialDataset};
use rand::prelude::*;
use rand_distr::Exp;

/// Exponential proportional-hazards data with per-level treatment
/// interactions, administratively censored at t = 4.
pub(crate) fn simulated_ph(
    n: usize,
    schema: &SubgroupSchema,
    beta_treat: f64,
    interactions: &[f64],
    seed: u64,
) -> TrialDataset {
    let mut rng = StdRng::seed_from_u64(seed);
    let k_total = schema.n_subgroups();
    assert_eq!(interactions.len(), k_total);
    let subjects = (0..n)
        .map(|i| {
            let z = (i % 2) as u8;
            let covariates: Vec<usize> = schema
                .variables
                .iter()
                .map(|v| rng.gen_range(0..v.levels.len()))
                .collect();
            let mut lp = beta_treat * z as f64;
            let mut k0 = 0;
            for (j, v) in schema.variables.iter().enumerate() {
                lp += interactions[k0 + covariates[j]] * z as f64;
                k0 += v.levels.len();
            }
            let t: f64 = rng.sample(Exp::new(lp.exp()).unwrap());
            let event = u8::from(t < 4.0);
            Subject {
                time: t.min(4.0).max(1e-6),
                event,
                treatment: z,
                covariates,
            }
        })
        .collect();
    TrialDataset::new(subjects, schema).unwrap()
}
