//! Convergence diagnostics: split R-hat and a Geyer-style effective sample
//! size estimate.

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn split_sequences(chains: &[&[Vec<f64>]], param: usize) -> Vec<Vec<f64>> {
    let mut seqs = Vec::new();
    for chain in chains {
        let xs: Vec<f64> = chain.iter().map(|row| row[param]).collect();
        let half = xs.len() / 2;
        if half < 2 {
            seqs.push(xs);
            continue;
        }
        seqs.push(xs[..half].to_vec());
        seqs.push(xs[half..half * 2].to_vec());
    }
    seqs
}

/// Split R-hat over chains of draws (each chain halved before the
/// between/within variance comparison). 1.0 means indistinguishable halves.
pub fn split_rhat(chains: &[&[Vec<f64>]], param: usize) -> f64 {
    let seqs = split_sequences(chains, param);
    let n = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
    if n < 2 || seqs.len() < 2 {
        return f64::NAN;
    }
    let seqs: Vec<&[f64]> = seqs.iter().map(|s| &s[..n]).collect();
    let m = seqs.len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let grand = mean(&means);
    let b = n as f64 / (m - 1.0)
        * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = seqs.iter().map(|s| sample_var(s)).sum::<f64>() / m;
    if w <= 0.0 {
        return 1.0;
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

/// Effective sample size across chains via the initial-positive-sequence
/// autocorrelation sum.
pub fn ess(chains: &[&[Vec<f64>]], param: usize) -> f64 {
    let seqs = split_sequences(chains, param);
    let n = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
    if n < 4 {
        return f64::NAN;
    }
    let m = seqs.len();
    let means: Vec<f64> = seqs.iter().map(|s| mean(&s[..n])).collect();
    let vars: Vec<f64> = seqs.iter().map(|s| sample_var(&s[..n])).collect();
    let w = vars.iter().sum::<f64>() / m as f64;
    let grand = mean(&means);
    let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if var_plus <= 0.0 {
        return f64::NAN;
    }
    // Combined autocorrelations, averaged over sequences.
    let autocov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for (s, seq) in seqs.iter().enumerate() {
            let xs = &seq[..n];
            let mu = means[s];
            let mut c = 0.0;
            for t in 0..n - lag {
                c += (xs[t] - mu) * (xs[t + lag] - mu);
            }
            acc += c / n as f64;
        }
        acc / m as f64
    };
    let mut rho_sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let rho_a = 1.0 - (w - autocov(lag)) / var_plus;
        let rho_b = 1.0 - (w - autocov(lag + 1)) / var_plus;
        if rho_a + rho_b < 0.0 {
            break;
        }
        rho_sum += rho_a + rho_b;
        lag += 2;
    }
    let total = (m * n) as f64;
    (total / (1.0 + 2.0 * rho_sum)).min(total)
}
