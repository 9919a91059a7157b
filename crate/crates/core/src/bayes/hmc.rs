//! Plain Hamiltonian Monte Carlo with jittered leapfrog trajectories,
//! dual-averaging step-size adaptation, and a diagonal mass matrix rescaled
//! from parameter variances at the warmup midpoint.

use super::diag::split_rhat;
use super::model::HorseshoeModel;
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    BadConfig(String),
    #[error("chain {chain} is effectively divergent (mean acceptance {acceptance:.3})")]
    AllDivergent { chain: usize, acceptance: f64 },
}

/// Log density with analytic gradient over an unconstrained vector.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Writes the gradient into `grad` and returns the log density.
    /// Non-finite states return `-inf`.
    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for HorseshoeModel {
    fn dim(&self) -> usize {
        HorseshoeModel::dim(self)
    }
    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        HorseshoeModel::logp_grad(self, theta, grad)
    }
}

#[derive(Debug, Clone)]
pub struct HmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub leapfrog: usize,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            target_accept: 0.8,
            leapfrog: 32,
            seed: 0,
        }
    }
}

/// Retained posterior draws (warmup excluded) with sampler diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub dim: usize,
    /// Chain-major: row `chain * draws_per_chain + d`.
    pub samples: Vec<Vec<f64>>,
    pub divergences: usize,
    pub mean_acceptance: f64,
    pub split_rhat: Vec<f64>,
}

impl PosteriorDraws {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn parameter(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|row| row[j]).collect()
    }

    pub fn max_rhat(&self) -> f64 {
        self.split_rhat.iter().cloned().fold(1.0, f64::max)
    }
}

struct DualAveraging {
    mu: f64,
    target: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            target,
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            h_bar: 0.0,
            t: 0.0,
        }
    }

    fn update(&mut self, accept_prob: f64) {
        self.t += 1.0;
        let frac = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_prob);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn averaged(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    divergences: usize,
    accept_sum: f64,
    accept_n: usize,
}

struct Hamiltonian<'a, T: LogDensity> {
    target: &'a T,
    /// Diagonal inverse mass (position-scale variances).
    inv_mass: Vec<f64>,
}

impl<T: LogDensity> Hamiltonian<'_, T> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.inv_mass)
            .map(|(pj, vj)| pj * pj * vj)
            .sum::<f64>()
    }

    /// Leapfrog trajectory of `steps` steps; returns the end state.
    fn integrate(
        &self,
        q0: &[f64],
        p0: &[f64],
        grad0: &[f64],
        eps: f64,
        steps: usize,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let d = q0.len();
        let mut q = q0.to_vec();
        let mut p = p0.to_vec();
        let mut grad = grad0.to_vec();
        let mut logp = f64::NEG_INFINITY;
        for step in 0..steps {
            for j in 0..d {
                p[j] += 0.5 * eps * grad[j];
            }
            for j in 0..d {
                q[j] += eps * self.inv_mass[j] * p[j];
            }
            logp = self.target.logp_grad(&q, &mut grad);
            if !logp.is_finite() {
                return (q, p, grad, f64::NEG_INFINITY);
            }
            for j in 0..d {
                p[j] += 0.5 * eps * grad[j];
            }
            let _ = step;
        }
        (q, p, grad, logp)
    }
}

fn find_initial_step<T: LogDensity>(
    ham: &Hamiltonian<T>,
    q: &[f64],
    logp: f64,
    grad: &[f64],
    rng: &mut impl Rng,
) -> f64 {
    let d = q.len();
    let p: Vec<f64> = (0..d)
        .map(|j| rng.sample::<f64, _>(StandardNormal) / ham.inv_mass[j].sqrt())
        .collect();
    let h0 = -logp + ham.kinetic(&p);
    let mut eps = 1.0;
    let ratio_at = |eps: f64| {
        let (_, p1, _, logp1) = ham.integrate(q, &p, grad, eps, 1);
        if !logp1.is_finite() {
            return f64::NEG_INFINITY;
        }
        -(-logp1 + ham.kinetic(&p1)) + h0
    };
    let mut log_ratio = ratio_at(eps);
    let dir: f64 = if log_ratio > (0.5f64).ln() { 1.0 } else { -1.0 };
    for _ in 0..60 {
        eps *= 2.0f64.powf(dir);
        log_ratio = ratio_at(eps);
        let crossed = if dir > 0.0 {
            log_ratio <= (0.5f64).ln()
        } else {
            log_ratio > (0.5f64).ln()
        };
        if crossed || !(1e-10..=1e3).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-10, 1e3)
}

fn run_chain<T: LogDensity>(target: &T, config: &HmcConfig, chain: usize) -> ChainOutput {
    let d = target.dim();
    let mut rng = stream_rng(config.seed, "hmc-chain", chain as u64);
    let mut q: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5)
        .collect();
    let mut grad = vec![0.0; d];
    let mut logp = target.logp_grad(&q, &mut grad);
    if !logp.is_finite() {
        q.iter_mut().for_each(|v| *v = 0.0);
        logp = target.logp_grad(&q, &mut grad);
    }
    let mut ham = Hamiltonian {
        target,
        inv_mass: vec![1.0; d],
    };

    let eps0 = find_initial_step(&ham, &q, logp, &grad, &mut rng);
    let mut adapt = DualAveraging::new(eps0, config.target_accept);
    let mut eps = adapt.current();

    let half = config.warmup / 2;
    let window_start = config.warmup / 4;
    let mut window: Vec<Vec<f64>> = Vec::new();

    let mut draws = Vec::with_capacity(config.draws);
    let mut divergences = 0usize;
    let mut accept_sum = 0.0;
    let mut accept_n = 0usize;

    let total = config.warmup + config.draws;
    for iter in 0..total {
        let warming = iter < config.warmup;
        let p: Vec<f64> = (0..d)
            .map(|j| rng.sample::<f64, _>(StandardNormal) / ham.inv_mass[j].sqrt())
            .collect();
        let h0 = -logp + ham.kinetic(&p);
        let lo = ((config.leapfrog as f64 * 0.8).floor() as usize).max(1);
        let hi = ((config.leapfrog as f64 * 1.2).ceil() as usize).max(lo);
        let steps = rng.gen_range(lo..=hi);
        let (q1, p1, grad1, logp1) = ham.integrate(&q, &p, &grad, eps, steps);
        let h1 = -logp1 + ham.kinetic(&p1);
        let delta = h0 - h1;
        let divergent = !delta.is_finite() || -delta > 1000.0;
        let accept_prob = if divergent { 0.0 } else { delta.exp().min(1.0) };
        if !divergent && rng.gen::<f64>() < accept_prob {
            q = q1;
            grad = grad1;
            logp = logp1;
        }
        if warming {
            adapt.update(accept_prob);
            eps = adapt.current();
            if iter >= window_start && iter < half {
                window.push(q.clone());
            }
            if iter + 1 == half && window.len() >= 10 {
                // Rescale the mass matrix from warmup variances, lightly
                // regularized toward unit scale, then restart step-size
                // adaptation around the current step.
                let n = window.len() as f64;
                for j in 0..d {
                    let mean = window.iter().map(|w| w[j]).sum::<f64>() / n;
                    let var =
                        window.iter().map(|w| (w[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    ham.inv_mass[j] = (n / (n + 5.0)) * var + (5.0 / (n + 5.0)) * 1e-3;
                }
                let eps_now = adapt.averaged().max(1e-10);
                adapt = DualAveraging::new(eps_now, config.target_accept);
                eps = adapt.current();
            }
        } else {
            if iter == config.warmup {
                eps = adapt.averaged().max(1e-10);
            }
            if divergent {
                divergences += 1;
            }
            accept_sum += accept_prob;
            accept_n += 1;
            draws.push(q.clone());
        }
    }
    ChainOutput {
        draws,
        divergences,
        accept_sum,
        accept_n,
    }
}

/// Runs `config.chains` independent chains (seeded from the master seed by
/// chain index) and pools the retained draws. Identical config, data, and
/// seed produce bitwise-identical draws.
pub fn hmc_sample<T: LogDensity>(
    target: &T,
    config: &HmcConfig,
) -> Result<PosteriorDraws, SamplerError> {
    if config.chains == 0 || config.draws == 0 {
        return Err(SamplerError::BadConfig(
            "chains and draws must be positive".into(),
        ));
    }
    if config.chains < 2 {
        return Err(SamplerError::BadConfig(
            "need at least 2 chains for split R-hat".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.target_accept) {
        return Err(SamplerError::BadConfig(format!(
            "target_accept {} outside (0, 1)",
            config.target_accept
        )));
    }
    if config.leapfrog == 0 {
        return Err(SamplerError::BadConfig("leapfrog must be positive".into()));
    }
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|chain| run_chain(target, config, chain))
        .collect();

    for (chain, out) in outputs.iter().enumerate() {
        let acc = out.accept_sum / out.accept_n.max(1) as f64;
        if acc < 0.1 {
            return Err(SamplerError::AllDivergent {
                chain,
                acceptance: acc,
            });
        }
    }
    let dim = target.dim();
    let per_chain: Vec<&[Vec<f64>]> = outputs.iter().map(|o| o.draws.as_slice()).collect();
    let rhat = (0..dim)
        .map(|j| split_rhat(&per_chain, j))
        .collect::<Vec<_>>();
    let mut samples = Vec::with_capacity(config.chains * config.draws);
    for out in &outputs {
        samples.extend(out.draws.iter().cloned());
    }
    let divergences = outputs.iter().map(|o| o.divergences).sum();
    let accept_sum: f64 = outputs.iter().map(|o| o.accept_sum).sum();
    let accept_n: usize = outputs.iter().map(|o| o.accept_n).sum();
    Ok(PosteriorDraws {
        n_chains: config.chains,
        draws_per_chain: config.draws,
        dim,
        samples,
        divergences,
        mean_acceptance: accept_sum / accept_n as f64,
        split_rhat: rhat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::diag::ess;

    struct StdNormal {
        dim: usize,
    }

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.dim
        }
        fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
            let mut logp = 0.0;
            for j in 0..self.dim {
                logp -= 0.5 * theta[j] * theta[j];
                grad[j] = -theta[j];
            }
            logp
        }
    }

    /// Banana-shaped Rosenbrock density.
    struct Rosenbrock;

    impl LogDensity for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
            let (x, y) = (theta[0], theta[1]);
            let logp = -(1.0 - x).powi(2) / 20.0 - 5.0 * (y - x * x).powi(2);
            grad[0] = (1.0 - x) / 10.0 + 20.0 * x * (y - x * x);
            grad[1] = -10.0 * (y - x * x);
            logp
        }
    }

    #[test]
    fn recovers_ten_dimensional_standard_normal() {
        let target = StdNormal { dim: 10 };
        let config = HmcConfig {
            chains: 4,
            warmup: 500,
            draws: 500,
            seed: 99,
            ..HmcConfig::default()
        };
        let out = hmc_sample(&target, &config).unwrap();
        assert_eq!(out.n_samples(), 2000);
        let chains: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|c| out.samples[c * 500..(c + 1) * 500].to_vec())
            .collect();
        let chain_refs: Vec<&[Vec<f64>]> = chains.iter().map(|c| c.as_slice()).collect();
        for j in 0..10 {
            let xs = out.parameter(j);
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let ess_j = ess(&chain_refs, j).max(10.0);
            let bound = 4.0 / ess_j.sqrt();
            assert!(mean.abs() < bound, "param {j}: mean {mean} bound {bound}");
            assert!((sd - 1.0).abs() < 0.1, "param {j}: sd {sd}");
        }
    }

    #[test]
    fn rosenbrock_banana_mixes_across_chains() {
        let config = HmcConfig {
            chains: 4,
            warmup: 1500,
            draws: 1500,
            leapfrog: 64,
            target_accept: 0.9,
            seed: 3,
            ..HmcConfig::default()
        };
        let out = hmc_sample(&Rosenbrock, &config).unwrap();
        assert!(
            out.max_rhat() < 1.05,
            "split R-hat {:?}",
            out.split_rhat
        );
    }

    #[test]
    fn identical_seed_gives_bitwise_identical_draws() {
        let target = StdNormal { dim: 3 };
        let config = HmcConfig {
            chains: 2,
            warmup: 100,
            draws: 50,
            seed: 12345,
            ..HmcConfig::default()
        };
        let a = hmc_sample(&target, &config).unwrap();
        let b = hmc_sample(&target, &config).unwrap();
        for (ra, rb) in a.samples.iter().zip(&b.samples) {
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let target = StdNormal { dim: 2 };
        let bad = HmcConfig {
            chains: 1,
            ..HmcConfig::default()
        };
        assert!(matches!(
            hmc_sample(&target, &bad),
            Err(SamplerError::BadConfig(_))
        ));
    }
}
