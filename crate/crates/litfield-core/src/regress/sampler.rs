//! Metropolis-within-Gibbs sampler for the hierarchical model.
//!
//! Location parameters (`gamma`, every `beta`, every `mu`, the hyper mean)
//! have Normal full conditionals and are Gibbs-updated exactly; scale
//! parameters (`sigma`, `sigma_l`, the hyper sd) are updated by univariate
//! slice sampling on the log scale. Chains run in parallel with seeds
//! derived from the master seed, so a fit is bit-reproducible.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ParamSummary, RegressError, RegressionDataset, ResolvedModel};
use crate::seeding;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcSettings {
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings { chains: 4, warmup: 1000, iterations: 2000, seed: 0 }
    }
}

/// Post-warmup draws, `[chain][iteration][parameter]`, plus the settings that
/// produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub spec_name: String,
    pub param_names: Vec<String>,
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    draws: Vec<f64>,
}

impl PosteriorSamples {
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn draw(&self, chain: usize, iteration: usize) -> &[f64] {
        let p = self.n_params();
        let at = (chain * self.iterations + iteration) * p;
        &self.draws[at..at + p]
    }

    /// One parameter's series within one chain.
    pub fn series(&self, chain: usize, param: usize) -> Vec<f64> {
        (0..self.iterations).map(|i| self.draw(chain, i)[param]).collect()
    }

    /// One parameter's draws pooled across chains, chain-major order.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.chains * self.iterations);
        for c in 0..self.chains {
            for i in 0..self.iterations {
                out.push(self.draw(c, i)[param]);
            }
        }
        out
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// Posterior mean of every parameter.
    pub fn mean_params(&self) -> Vec<f64> {
        let p = self.n_params();
        let mut means = vec![0.0; p];
        let total = (self.chains * self.iterations) as f64;
        for c in 0..self.chains {
            for i in 0..self.iterations {
                let draw = self.draw(c, i);
                for (m, v) in means.iter_mut().zip(draw) {
                    *m += v;
                }
            }
        }
        for m in &mut means {
            *m /= total;
        }
        means
    }
}

/// Fit the model on the dataset's training rows.
pub fn fit(
    model: &ResolvedModel,
    dataset: &RegressionDataset,
    settings: &McmcSettings,
) -> Result<PosteriorSamples, RegressError> {
    if settings.chains < 2 {
        return Err(RegressError::Config("at least 2 chains required".into()));
    }
    if settings.iterations == 0 {
        return Err(RegressError::Config("iterations must be > 0".into()));
    }
    if dataset.train_idx.is_empty() {
        return Err(RegressError::Config("no training rows".into()));
    }

    let design = Design::new(model, dataset);
    let fit_label = format!("fit/{}", model.spec.name);

    let chain_results: Vec<Result<Vec<f64>, RegressError>> = (0..settings.chains)
        .into_par_iter()
        .map(|chain| {
            let rng = seeding::chain_rng(settings.seed, &fit_label, chain);
            run_chain(model, &design, settings, rng)
        })
        .collect();

    let mut draws = Vec::with_capacity(
        settings.chains * settings.iterations * model.n_params(),
    );
    for result in chain_results {
        draws.extend(result?);
    }
    Ok(PosteriorSamples {
        spec_name: model.spec.name.clone(),
        param_names: model.param_names.clone(),
        chains: settings.chains,
        iterations: settings.iterations,
        warmup: settings.warmup,
        seed: settings.seed,
        draws,
    })
}

/// Training design packed for the sampler: row-major x, y, field index, and
/// per-field row lists.
struct Design {
    x: Vec<f64>,
    y: Vec<f64>,
    field: Vec<usize>,
    rows_by_field: Vec<Vec<usize>>,
    n: usize,
    l: usize,
}

impl Design {
    fn new(model: &ResolvedModel, dataset: &RegressionDataset) -> Self {
        let n = dataset.train_idx.len();
        let l = model.columns.len();
        let mut x = Vec::with_capacity(n * l);
        let mut y = Vec::with_capacity(n);
        let mut field = Vec::with_capacity(n);
        let mut rows_by_field = vec![Vec::new(); dataset.field_names.len()];
        for (local, &row) in dataset.train_idx.iter().enumerate() {
            for &c in &model.columns {
                x.push(dataset.value(row, c));
            }
            y.push(dataset.y[row]);
            let f = dataset.field_index[row];
            field.push(f);
            rows_by_field[f].push(local);
        }
        Design { x, y, field, rows_by_field, n, l }
    }

    #[inline]
    fn xv(&self, row: usize, predictor: usize) -> f64 {
        self.x[row * self.l + predictor]
    }
}

fn run_chain(
    model: &ResolvedModel,
    design: &Design,
    settings: &McmcSettings,
    mut rng: ChaCha12Rng,
) -> Result<Vec<f64>, RegressError> {
    let priors = &model.spec.priors;
    let n_fields = model.n_fields();
    let p = model.n_params();

    // Deterministic start near the data scale, jittered per chain so the
    // chains are overdispersed and R-hat is informative.
    let (y_mean, y_sd) = super::mean_sd(&design.y);
    let mut params = vec![0.0; p];
    params[model.gamma_index()] = y_mean + 0.3 * sample_normal(&mut rng);
    for l in 0..model.spec.predictors.len() {
        if model.is_hierarchical(l) {
            for f in 0..n_fields {
                params[model.beta_index(l, f)] = 0.2 * sample_normal(&mut rng);
            }
            params[model.mu_index(l).expect("hierarchical")] = 0.2 * sample_normal(&mut rng);
            params[model.sigma_l_index(l).expect("hierarchical")] =
                0.5 * priors.sigma_l_scale * (0.2 * sample_normal(&mut rng)).exp();
        } else {
            params[model.beta_index(l, 0)] = 0.2 * sample_normal(&mut rng);
        }
    }
    if let Some(i) = model.sigma_index() {
        params[i] = y_sd.max(0.1) * (0.2 * sample_normal(&mut rng)).exp();
    }
    if let Some((m, s)) = model.hyper_indices() {
        params[m] = 0.2 * sample_normal(&mut rng);
        params[s] = (0.2 * sample_normal(&mut rng)).exp();
    }

    let total = settings.warmup + settings.iterations;
    let mut kept = Vec::with_capacity(settings.iterations * p);
    let mut residuals = vec![0.0; design.n];

    for sweep in 0..total {
        gibbs_sweep(model, design, &mut params, &mut residuals, &mut rng)?;
        if !params.iter().all(|v| v.is_finite()) {
            return Err(RegressError::Numerical {
                message: format!("non-finite parameter at sweep {sweep}"),
                dump: model.dump_params(&params),
            });
        }
        if sweep >= settings.warmup {
            kept.extend_from_slice(&params);
        }
    }
    Ok(kept)
}

fn sample_normal(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gibbs_sweep(
    model: &ResolvedModel,
    design: &Design,
    params: &mut [f64],
    residuals: &mut [f64],
    rng: &mut ChaCha12Rng,
) -> Result<(), RegressError> {
    let priors = &model.spec.priors;
    let n_fields = model.n_fields();
    let n = design.n;

    // Fresh residuals once per sweep; incremental updates within it.
    for i in 0..n {
        let mut mu = params[model.gamma_index()];
        for l in 0..design.l {
            mu += params[model.beta_index(l, design.field[i])] * design.xv(i, l);
        }
        residuals[i] = design.y[i] - mu;
    }

    let sigma = model.sigma_value(params);
    let sigma_sq = sigma * sigma;

    // gamma.
    {
        let old = params[model.gamma_index()];
        let mut sum = 0.0;
        for r in residuals.iter() {
            sum += r + old;
        }
        let precision = n as f64 / sigma_sq
            + 1.0 / (priors.intercept_scale * priors.intercept_scale);
        let mean = (sum / sigma_sq) / precision;
        let new = mean + sample_normal(rng) / precision.sqrt();
        params[model.gamma_index()] = new;
        for r in residuals.iter_mut() {
            *r -= new - old;
        }
    }

    // beta blocks.
    for l in 0..model.spec.predictors.len() {
        if model.is_hierarchical(l) {
            let mu_l = params[model.mu_index(l).expect("hierarchical")];
            let sig_l = params[model.sigma_l_index(l).expect("hierarchical")];
            let prior_precision = 1.0 / (sig_l * sig_l);
            for f in 0..n_fields {
                let idx = model.beta_index(l, f);
                let old = params[idx];
                let mut xx = 0.0;
                let mut xr = 0.0;
                for &i in &design.rows_by_field[f] {
                    let x = design.xv(i, l);
                    xx += x * x;
                    xr += x * (residuals[i] + old * x);
                }
                let precision = xx / sigma_sq + prior_precision;
                let mean = (xr / sigma_sq + mu_l * prior_precision) / precision;
                let new = mean + sample_normal(rng) / precision.sqrt();
                params[idx] = new;
                for &i in &design.rows_by_field[f] {
                    residuals[i] -= (new - old) * design.xv(i, l);
                }
            }
        } else {
            let idx = model.beta_index(l, 0);
            let old = params[idx];
            let mut xx = 0.0;
            let mut xr = 0.0;
            for (i, r) in residuals.iter().enumerate().take(n) {
                let x = design.xv(i, l);
                xx += x * x;
                xr += x * (r + old * x);
            }
            let precision = xx / sigma_sq + 1.0 / (priors.mu_l_scale * priors.mu_l_scale);
            let mean = (xr / sigma_sq) / precision;
            let new = mean + sample_normal(rng) / precision.sqrt();
            params[idx] = new;
            for (i, r) in residuals.iter_mut().enumerate().take(n) {
                *r -= (new - old) * design.xv(i, l);
            }
        }
    }

    // mu_l.
    for l in 0..model.spec.predictors.len() {
        let Some(mu_idx) = model.mu_index(l) else { continue };
        let sig_l = params[model.sigma_l_index(l).expect("hierarchical")];
        let (prior_mean, prior_sd) = match (model.spec.predictors[l].hyperprior_on_mu, model.hyper_indices()) {
            (true, Some((m, s))) => (params[m], params[s]),
            _ => (0.0, priors.mu_l_scale),
        };
        let mut beta_sum = 0.0;
        for f in 0..n_fields {
            beta_sum += params[model.beta_index(l, f)];
        }
        let precision = n_fields as f64 / (sig_l * sig_l) + 1.0 / (prior_sd * prior_sd);
        let mean = (beta_sum / (sig_l * sig_l) + prior_mean / (prior_sd * prior_sd)) / precision;
        params[mu_idx] = mean + sample_normal(rng) / precision.sqrt();
    }

    // sigma_l by slice sampling on the log scale.
    for l in 0..model.spec.predictors.len() {
        let Some(sig_idx) = model.sigma_l_index(l) else { continue };
        let mu_l = params[model.mu_index(l).expect("hierarchical")];
        let mut ss = 0.0;
        for f in 0..n_fields {
            let d = params[model.beta_index(l, f)] - mu_l;
            ss += d * d;
        }
        let scale = priors.sigma_l_scale;
        let count = n_fields as f64;
        let target = |theta: f64| {
            let var = (2.0 * theta).exp();
            -count * theta - ss / (2.0 * var) - var / (2.0 * scale * scale) + theta
        };
        let theta = slice_sample(&target, params[sig_idx].ln(), 1.0, rng);
        params[sig_idx] = theta.exp();
    }

    // sigma.
    if let Some(sigma_idx) = model.sigma_index() {
        let mut ssr = 0.0;
        for r in residuals.iter() {
            ssr += r * r;
        }
        let scale = priors.sigma_scale;
        let count = n as f64;
        let target = |theta: f64| {
            let var = (2.0 * theta).exp();
            -count * theta - ssr / (2.0 * var) - var / (2.0 * scale * scale) + theta
        };
        let theta = slice_sample(&target, params[sigma_idx].ln(), 0.5, rng);
        params[sigma_idx] = theta.exp();
    }

    // Shared hyper layer over the flagged predictors' mu_l.
    if let Some((m_idx, s_idx)) = model.hyper_indices() {
        let flagged: Vec<usize> = model
            .spec
            .predictors
            .iter()
            .enumerate()
            .filter(|(_, p)| p.pooling == super::Pooling::Hierarchical && p.hyperprior_on_mu)
            .map(|(l, _)| l)
            .collect();
        let h = flagged.len() as f64;
        let s = params[s_idx];
        let mut mu_sum = 0.0;
        for &l in &flagged {
            mu_sum += params[model.mu_index(l).expect("hierarchical")];
        }
        // m | mu, s with prior Normal(0, 1).
        let precision = h / (s * s) + 1.0;
        let mean = (mu_sum / (s * s)) / precision;
        params[m_idx] = mean + sample_normal(rng) / precision.sqrt();

        // s | mu, m with prior half-Normal(1).
        let m = params[m_idx];
        let mut ss = 0.0;
        for &l in &flagged {
            let d = params[model.mu_index(l).expect("hierarchical")] - m;
            ss += d * d;
        }
        let target = |theta: f64| {
            let var = (2.0 * theta).exp();
            -h * theta - ss / (2.0 * var) - var / 2.0 + theta
        };
        let theta = slice_sample(&target, params[s_idx].ln(), 1.0, rng);
        params[s_idx] = theta.exp();
    }

    Ok(())
}

/// Univariate slice sampler with stepping out and shrinkage.
fn slice_sample(
    log_target: &impl Fn(f64) -> f64,
    x0: f64,
    width: f64,
    rng: &mut ChaCha12Rng,
) -> f64 {
    const MAX_STEPS: usize = 32;
    const MAX_SHRINK: usize = 1000;
    let f0 = log_target(x0);
    let exp_draw: f64 = rand_distr::Exp1.sample(rng);
    let log_y = f0 - exp_draw;

    let u: f64 = rng.gen();
    let mut lower = x0 - width * u;
    let mut upper = lower + width;
    let mut steps_lower = MAX_STEPS;
    let mut steps_upper = MAX_STEPS;
    while steps_lower > 0 && log_target(lower) > log_y {
        lower -= width;
        steps_lower -= 1;
    }
    while steps_upper > 0 && log_target(upper) > log_y {
        upper += width;
        steps_upper -= 1;
    }

    for _ in 0..MAX_SHRINK {
        let candidate = lower + rng.gen::<f64>() * (upper - lower);
        if log_target(candidate) >= log_y {
            return candidate;
        }
        if candidate < x0 {
            lower = candidate;
        } else {
            upper = candidate;
        }
    }
    x0
}

/// Export draws as CSV: `chain,iteration,parameter,value`.
pub fn write_posterior_csv<W: std::io::Write>(
    posterior: &PosteriorSamples,
    mut w: W,
) -> Result<(), RegressError> {
    writeln!(w, "chain,iteration,parameter,value")?;
    let fmt = crate::embed::io::format_f64;
    for c in 0..posterior.chains {
        for i in 0..posterior.iterations {
            let draw = posterior.draw(c, i);
            for (name, value) in posterior.param_names.iter().zip(draw) {
                writeln!(w, "{c},{i},{name},{}", fmt(*value))?;
            }
        }
    }
    Ok(())
}

/// Read draws back from the CSV export. Chains and iterations are inferred;
/// parameter order follows first appearance.
pub fn read_posterior_csv<R: std::io::BufRead>(
    r: R,
    spec_name: &str,
    warmup: usize,
    seed: u64,
) -> Result<PosteriorSamples, RegressError> {
    let mut param_names: Vec<String> = Vec::new();
    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut max_chain = 0usize;
    let mut max_iter = 0usize;
    for line in r.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() || line.starts_with("chain,") {
            continue;
        }
        let mut parts = line.splitn(4, ',');
        let (Some(c), Some(i), Some(name), Some(v)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(RegressError::Config(format!("bad posterior row: {line}")));
        };
        let chain: usize = c
            .parse()
            .map_err(|e| RegressError::Config(format!("bad chain {c:?}: {e}")))?;
        let iteration: usize = i
            .parse()
            .map_err(|e| RegressError::Config(format!("bad iteration {i:?}: {e}")))?;
        let value: f64 = v
            .parse()
            .map_err(|e| RegressError::Config(format!("bad value {v:?}: {e}")))?;
        let param = match param_names.iter().position(|n| n == name) {
            Some(p) => p,
            None => {
                param_names.push(name.to_string());
                param_names.len() - 1
            }
        };
        max_chain = max_chain.max(chain);
        max_iter = max_iter.max(iteration);
        rows.push((chain, iteration, param, value));
    }
    let chains = max_chain + 1;
    let iterations = max_iter + 1;
    let p = param_names.len();
    if rows.len() != chains * iterations * p {
        return Err(RegressError::Config(format!(
            "posterior csv has {} values, expected {}",
            rows.len(),
            chains * iterations * p
        )));
    }
    let mut draws = vec![f64::NAN; chains * iterations * p];
    for (chain, iteration, param, value) in rows {
        draws[(chain * iterations + iteration) * p + param] = value;
    }
    Ok(PosteriorSamples {
        spec_name: spec_name.to_string(),
        param_names,
        chains,
        iterations,
        warmup,
        seed,
        draws,
    })
}

/// Summaries keyed by parameter name, serializable as the summary JSON.
pub fn summary_map(
    posterior: &PosteriorSamples,
) -> Result<std::collections::BTreeMap<String, ParamSummary>, RegressError> {
    let summary = super::summarize(posterior)?;
    Ok(summary
        .params
        .into_iter()
        .map(|p| (p.name.clone(), p))
        .collect())
}
