//! Correlated categorical covariates: a latent ten-dimensional normal cut at
//! standard-normal quantiles to hit the target level proportions.

use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Target level proportions per variable (Table of subgrouping variables).
pub fn level_proportions() -> Vec<Vec<f64>> {
    vec![
        vec![0.5, 0.5],
        vec![0.4, 0.6],
        vec![0.2, 0.8],
        vec![0.3, 0.3, 0.4],
        vec![0.15, 0.15, 0.3, 0.4],
        vec![0.4, 0.6],
        vec![0.4, 0.6],
        vec![0.2, 0.3, 0.5],
        vec![0.2, 0.8],
        vec![0.2, 0.3, 0.5],
    ]
}

/// Latent draws: unit-variance normals with correlation 0.25 within
/// variables 6-8, 0.5 between variables 9 and 10, zero elsewhere.
pub fn gen_latents(n: usize, seed: u64) -> Vec<[f64; 10]> {
    // Cholesky factors of the two correlated blocks.
    // 3x3 block with off-diagonal 0.25:
    let l11 = 1.0f64;
    let l21 = 0.25;
    let l22 = (1.0f64 - 0.0625).sqrt();
    let l31 = 0.25;
    let l32 = (0.25 - l21 * l31) / l22;
    let l33 = (1.0f64 - l31 * l31 - l32 * l32).sqrt();
    // 2x2 block with correlation 0.5:
    let m21 = 0.5;
    let m22 = (1.0f64 - 0.25).sqrt();

    let mut rng = stream_rng(seed, "latent-covariates", 0);
    (0..n)
        .map(|_| {
            let raw: [f64; 10] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let mut x = raw;
            x[5] = l11 * raw[5];
            x[6] = l21 * raw[5] + l22 * raw[6];
            x[7] = l31 * raw[5] + l32 * raw[6] + l33 * raw[7];
            x[8] = raw[8];
            x[9] = m21 * raw[8] + m22 * raw[9];
            x
        })
        .collect()
}

/// Categorizes the latent normals by standard-normal quantile cuts so that
/// the level proportions match the targets. Levels come back as indices
/// into the schema's declared levels (a, b, c, d).
pub fn gen_covariates(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let latents = gen_latents(n, seed);
    let norm = Normal::new(0.0, 1.0).unwrap();
    let cuts: Vec<Vec<f64>> = level_proportions()
        .iter()
        .map(|props| {
            let mut acc = 0.0;
            props[..props.len() - 1]
                .iter()
                .map(|p| {
                    acc += p;
                    norm.inverse_cdf(acc)
                })
                .collect()
        })
        .collect();
    latents
        .iter()
        .map(|x| {
            (0..10)
                .map(|j| cuts[j].iter().filter(|&&c| x[j] >= c).count())
                .collect()
        })
        .collect()
}
