//! Convergence diagnostics and posterior summaries.
//!
//! R-hat is the split potential scale reduction factor: each chain is halved,
//! and between- and within-half variances are compared. Effective sample
//! size follows the Geyer initial-monotone-sequence truncation of the
//! combined autocorrelation estimate.

use serde::{Deserialize, Serialize};

use super::{mean_sd, PosteriorSamples, RegressError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Central 68% interval (16th and 84th percentiles).
    pub q16: f64,
    pub q84: f64,
    /// Central 95% interval.
    pub q2_5: f64,
    pub q97_5: f64,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub spec_name: String,
    pub chains: usize,
    pub iterations: usize,
    pub params: Vec<ParamSummary>,
    /// One entry per parameter whose R-hat exceeds 1.05.
    pub warnings: Vec<String>,
}

/// Summarize post-warmup draws pooled across chains.
pub fn summarize(posterior: &PosteriorSamples) -> Result<PosteriorSummary, RegressError> {
    if posterior.chains < 2 {
        return Err(RegressError::Config("need at least 2 chains to summarize".into()));
    }
    if posterior.iterations == 0 {
        return Err(RegressError::Config("no post-warmup draws".into()));
    }
    let mut params = Vec::with_capacity(posterior.n_params());
    let mut warnings = Vec::new();
    for p in 0..posterior.n_params() {
        let chains: Vec<Vec<f64>> =
            (0..posterior.chains).map(|c| posterior.series(c, p)).collect();
        let pooled = posterior.pooled(p);
        let (mean, sd) = mean_sd(&pooled);
        let mut sorted = pooled;
        sorted.sort_by(|a, b| a.total_cmp(b));
        let rhat = split_rhat(&chains);
        let ess_value = ess(&chains);
        let name = posterior.param_names[p].clone();
        if rhat > 1.05 {
            let warning = format!("R-hat {rhat:.3} > 1.05 for {name}");
            log::warn!("{warning}");
            warnings.push(warning);
        }
        params.push(ParamSummary {
            name,
            mean,
            sd,
            q16: quantile(&sorted, 0.16),
            q84: quantile(&sorted, 0.84),
            q2_5: quantile(&sorted, 0.025),
            q97_5: quantile(&sorted, 0.975),
            rhat,
            ess: ess_value,
        });
    }
    Ok(PosteriorSummary {
        spec_name: posterior.spec_name.clone(),
        chains: posterior.chains,
        iterations: posterior.iterations,
        params,
        warnings,
    })
}

/// Empirical quantile with linear interpolation on a sorted slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Split potential scale reduction factor across chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split_chains(chains);
    let n = halves.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 2 || halves.len() < 2 {
        return f64::NAN;
    }
    let m = halves.len() as f64;
    let nf = n as f64;
    let mut means = Vec::with_capacity(halves.len());
    let mut vars = Vec::with_capacity(halves.len());
    for half in &halves {
        let (mean, sd) = mean_sd(&half[..n]);
        means.push(mean);
        vars.push(sd * sd);
    }
    let w: f64 = vars.iter().sum::<f64>() / m;
    let (_, mean_sd_of_means) = mean_sd(&means);
    let b = nf * mean_sd_of_means * mean_sd_of_means;
    if w <= 0.0 {
        // A constant parameter is perfectly converged.
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    (var_plus / w).sqrt()
}

fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut halves = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        let n = chain.len();
        let half = n / 2;
        // Odd lengths drop the middle draw.
        halves.push(chain[..half].to_vec());
        halves.push(chain[n - half..].to_vec());
    }
    halves
}

/// Effective sample size of the pooled draws.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let halves = split_chains(chains);
    let n = halves.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 || halves.len() < 2 {
        return f64::NAN;
    }
    let m = halves.len() as f64;
    let nf = n as f64;

    let mut means = Vec::with_capacity(halves.len());
    let mut vars = Vec::with_capacity(halves.len());
    for half in &halves {
        let (mean, sd) = mean_sd(&half[..n]);
        means.push(mean);
        vars.push(sd * sd);
    }
    let w: f64 = vars.iter().sum::<f64>() / m;
    let (_, sd_of_means) = mean_sd(&means);
    let b_over_n = sd_of_means * sd_of_means;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if var_plus <= 0.0 {
        return m * nf;
    }

    // Mean autocovariance across half-chains at each lag.
    let acov = |lag: usize| -> f64 {
        let mut total = 0.0;
        for (half, mean) in halves.iter().zip(&means) {
            let mut acc = 0.0;
            for t in 0..n - lag {
                acc += (half[t] - mean) * (half[t + lag] - mean);
            }
            total += acc / nf;
        }
        total / m
    };

    // Geyer initial monotone positive sequence.
    let mut rho_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 1;
    while lag + 1 < n {
        let rho_odd = 1.0 - (w - acov(lag)) / var_plus;
        let rho_even = 1.0 - (w - acov(lag + 1)) / var_plus;
        let pair = rho_odd + rho_even;
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        prev_pair = pair;
        rho_sum += pair;
        lag += 2;
    }
    let tau = 1.0 + 2.0 * rho_sum;
    (m * nf / tau).min(m * nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_draws_summarize_cleanly() {
        let chains = vec![vec![3.0; 50], vec![3.0; 50]];
        let rhat = split_rhat(&chains);
        assert_eq!(rhat, 1.0);
        let (mean, sd) = mean_sd(&chains[0]);
        assert_eq!(mean, 3.0);
        assert_eq!(sd, 0.0);
    }

    #[test]
    fn standard_normal_sample_summary() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(100);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (mean, sd) = mean_sd(&draws);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.02, "sd {sd}");
        let mut sorted = draws;
        sorted.sort_by(|a, b| a.total_cmp(b));
        assert!((quantile(&sorted, 0.975) - 1.96).abs() < 0.05);
        assert!((quantile(&sorted, 0.025) + 1.96).abs() < 0.05);
    }

    #[test]
    fn offset_chains_trigger_rhat_warning() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..500).map(|_| 10.0 + rng.gen::<f64>()).collect();
        let rhat = split_rhat(&[a, b]);
        assert!(rhat > 1.05, "rhat {rhat}");
    }

    #[test]
    fn summarize_warns_on_offset_chains() {
        // Two chains stuck at different levels: R-hat far above 1.05.
        let mut csv = String::from("chain,iteration,parameter,value\n");
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        for chain in 0..2 {
            for iter in 0..200 {
                let value = chain as f64 * 8.0 + rng.gen::<f64>();
                csv.push_str(&format!("{chain},{iter},theta,{value}\n"));
            }
        }
        let posterior = crate::regress::read_posterior_csv(
            std::io::Cursor::new(csv),
            "warn-test",
            0,
            1,
        )
        .unwrap();
        let summary = super::summarize(&posterior).unwrap();
        assert_eq!(summary.warnings.len(), 1);
        assert!(summary.warnings[0].contains("theta"));
        assert!(summary.params[0].rhat > 1.05);
    }

    #[test]
    fn summarize_rejects_single_chains_and_empty_draws() {
        let csv = "chain,iteration,parameter,value\n0,0,theta,1.0\n";
        let posterior =
            crate::regress::read_posterior_csv(std::io::Cursor::new(csv), "x", 0, 1).unwrap();
        assert!(matches!(
            super::summarize(&posterior),
            Err(crate::regress::RegressError::Config(_))
        ));
    }

    #[test]
    fn iid_chains_have_near_total_ess() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let total = 4.0 * 1000.0;
        let e = ess(&chains);
        assert!(e > 0.5 * total, "ess {e}");
        assert!(e <= total + 1e-9);
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.02, "rhat {r}");
    }

    #[test]
    fn correlated_chains_have_reduced_ess() {
        // AR(1) with strong autocorrelation.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(10);
        let phi = 0.9;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..1000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = phi * x + e;
                        x
                    })
                    .collect()
            })
            .collect();
        let e = ess(&chains);
        // Theoretical tau = (1+phi)/(1-phi) = 19, so ESS should be far below
        // the 4000 total draws.
        assert!(e < 1000.0, "ess {e}");
        assert!(e > 20.0, "ess {e}");
    }
}
