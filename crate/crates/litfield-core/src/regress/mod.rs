//! Hierarchical Bayesian linear regression of citation rates.
//!
//! The response is standardized log citations-per-year; predictors are
//! standardized within each field so coefficients are comparable effect
//! sizes. The model is
//!
//! ```text
//! y_i      ~ Normal(gamma + sum_l beta[l, field(i)] * x[i, l], sigma)
//! beta[l,f] ~ Normal(mu[l], sigma_l[l])        (hierarchical predictor)
//! beta[l]   ~ Normal(0, mu_l_scale)            (pooled predictor)
//! mu[l]     ~ Normal(0, mu_l_scale)            (or Normal(m, s) under the
//!                                               shared hyperprior layer)
//! gamma     ~ Normal(0, intercept_scale)
//! sigma, sigma_l ~ half-Normal(scale)
//! m ~ Normal(0, 1), s ~ half-Normal(1)
//! ```
//!
//! Fitting is Metropolis-within-Gibbs: Normal conditionals for `gamma`,
//! `beta`, `mu`, and `m`; slice updates on the log scale for the standard
//! deviations. The contract is the diagnostics (split R-hat, effective
//! sample size), not the particular sampler.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricRecord;

mod diagnostics;
mod sampler;
mod variants;

pub use diagnostics::{ess, split_rhat, summarize, ParamSummary, PosteriorSummary};
pub use sampler::{
    fit, read_posterior_csv, summary_map, write_posterior_csv, McmcSettings, PosteriorSamples,
};
pub use variants::{benchmark_specs, enumerate_variants, GroupAxis, GroupOption};

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("field {field} column {column} has zero variance in training rows")]
    DegenerateColumn { field: String, column: String },
    #[error("field {field} has only {rows} training rows, need at least 2")]
    TooFewRows { field: String, rows: usize },
    #[error("unknown field {0}")]
    FieldError(String),
    #[error("unknown predictor column {0}")]
    UnknownColumn(String),
    #[error("numerical error: {message}; parameters: {dump}")]
    Numerical { message: String, dump: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Prior scales. The defaults are weakly informative on standardized data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub intercept_scale: f64,
    pub mu_l_scale: f64,
    pub sigma_l_scale: f64,
    pub sigma_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            intercept_scale: 1.0,
            mu_l_scale: 1.0,
            sigma_l_scale: 1.0,
            sigma_scale: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), RegressError> {
        for (name, v) in [
            ("intercept_scale", self.intercept_scale),
            ("mu_l_scale", self.mu_l_scale),
            ("sigma_l_scale", self.sigma_l_scale),
            ("sigma_scale", self.sigma_scale),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(RegressError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// How a predictor's coefficient varies across fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One coefficient per field, drawn from a shared normal.
    Hierarchical,
    /// A single coefficient shared by every field.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub column: String,
    pub pooling: Pooling,
    /// Draw this predictor's `mu_l` from the shared hyperprior layer.
    #[serde(default)]
    pub hyperprior_on_mu: bool,
}

/// A model variant: which predictor columns enter and how they pool.
/// The intercept is always present; dropped predictors are simply absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub predictors: Vec<PredictorSpec>,
    #[serde(default)]
    pub priors: PriorConfig,
    /// Hold sigma fixed instead of sampling it (validation harness only).
    #[serde(default)]
    pub fixed_sigma: Option<f64>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ModelSpec {
            name: name.into(),
            predictors: Vec::new(),
            priors: PriorConfig::default(),
            fixed_sigma: None,
        }
    }

    pub fn with_hierarchical(mut self, column: impl Into<String>) -> Self {
        self.predictors.push(PredictorSpec {
            column: column.into(),
            pooling: Pooling::Hierarchical,
            hyperprior_on_mu: false,
        });
        self
    }

    pub fn with_pooled(mut self, column: impl Into<String>) -> Self {
        self.predictors.push(PredictorSpec {
            column: column.into(),
            pooling: Pooling::Pooled,
            hyperprior_on_mu: false,
        });
        self
    }

    /// Structural identity: predictor columns with their pooling flags,
    /// independent of the display name.
    pub fn signature(&self) -> String {
        let mut parts: Vec<String> = self
            .predictors
            .iter()
            .map(|p| {
                format!(
                    "{}:{}{}",
                    p.column,
                    match p.pooling {
                        Pooling::Hierarchical => "h",
                        Pooling::Pooled => "p",
                    },
                    if p.hyperprior_on_mu { "+hyper" } else { "" }
                )
            })
            .collect();
        parts.sort();
        parts.join(",")
    }
}

/// Per-field standardization parameters for one column: (mean, sd).
pub type ColumnParams = (f64, f64);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldStandardization {
    pub field: String,
    pub predictors: Vec<ColumnParams>,
    pub response: ColumnParams,
}

/// Design rows with per-field standardization applied, plus the train/test
/// partition the parameters were estimated on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub predictor_names: Vec<String>,
    pub field_names: Vec<String>,
    pub ids: Vec<String>,
    /// Row-major `n x L` standardized predictors.
    x: Vec<f64>,
    /// Standardized responses.
    pub y: Vec<f64>,
    pub field_index: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub standardization: Vec<FieldStandardization>,
}

impl RegressionDataset {
    /// Assemble a dataset from already-standardized values. Used by the
    /// synthetic generators and calibration harnesses, where the data are
    /// drawn from the model on the standardized scale directly; the stored
    /// standardization is the identity.
    #[allow(clippy::too_many_arguments)]
    pub fn from_standardized(
        predictor_names: Vec<String>,
        field_names: Vec<String>,
        ids: Vec<String>,
        x: Vec<f64>,
        y: Vec<f64>,
        field_index: Vec<usize>,
        train_idx: Vec<usize>,
        test_idx: Vec<usize>,
    ) -> Result<Self, RegressError> {
        let n = ids.len();
        if x.len() != n * predictor_names.len() || y.len() != n || field_index.len() != n {
            return Err(RegressError::Config("inconsistent dataset dimensions".into()));
        }
        if field_index.iter().any(|&f| f >= field_names.len()) {
            return Err(RegressError::Config("field index out of range".into()));
        }
        let standardization = field_names
            .iter()
            .map(|f| FieldStandardization {
                field: f.clone(),
                predictors: vec![(0.0, 1.0); predictor_names.len()],
                response: (0.0, 1.0),
            })
            .collect();
        Ok(RegressionDataset {
            predictor_names,
            field_names,
            ids,
            x,
            y,
            field_index,
            train_idx,
            test_idx,
            standardization,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictor_names.len()
    }

    pub fn value(&self, row: usize, column: usize) -> f64 {
        self.x[row * self.predictor_names.len() + column]
    }

    pub fn column_index(&self, name: &str) -> Result<usize, RegressError> {
        self.predictor_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| RegressError::UnknownColumn(name.to_string()))
    }

    pub fn field_of(&self, row: usize) -> &str {
        &self.field_names[self.field_index[row]]
    }

    /// Undo the response standardization for one field.
    pub fn destandardize_response(&self, field_index: usize, z: f64) -> f64 {
        let (mean, sd) = self.standardization[field_index].response;
        z * sd + mean
    }

    /// Undo predictor standardization for one field and column.
    pub fn destandardize_predictor(&self, field_index: usize, column: usize, z: f64) -> f64 {
        let (mean, sd) = self.standardization[field_index].predictors[column];
        z * sd + mean
    }
}

/// Predictor columns derived from a metric table, in a fixed order:
/// `rho_<embedder>` (sorted), `alpha_<embedder>` (sorted), `n_ref`, `age`.
pub fn predictor_columns(rows: &[MetricRecord]) -> Vec<String> {
    let embedders = crate::metrics::table_embedders(rows);
    let mut names = Vec::new();
    for e in &embedders {
        names.push(format!("rho_{e}"));
    }
    for e in &embedders {
        names.push(format!("alpha_{e}"));
    }
    names.push("n_ref".to_string());
    names.push("age".to_string());
    names
}

fn raw_value(row: &MetricRecord, column: &str) -> f64 {
    if let Some(e) = column.strip_prefix("rho_") {
        row.rho[e]
    } else if let Some(e) = column.strip_prefix("alpha_") {
        row.alpha[e]
    } else if column == "n_ref" {
        row.n_ref as f64
    } else {
        row.age_years
    }
}

/// Standardize predictors and response to mean 0, sd 1 within each field.
///
/// Means and sample standard deviations are computed on the training rows
/// only and applied to every row, so no information flows from the held-out
/// partition into the transform.
pub fn standardize_by_field(
    table: &[MetricRecord],
    train_ids: &BTreeSet<String>,
) -> Result<RegressionDataset, RegressError> {
    if table.is_empty() {
        return Err(RegressError::Config("metric table is empty".into()));
    }
    let predictor_names = predictor_columns(table);
    let mut field_names: Vec<String> = table.iter().map(|r| r.field_label.clone()).collect();
    field_names.sort();
    field_names.dedup();

    let field_of = |label: &str| -> usize {
        field_names.binary_search_by(|f| f.as_str().cmp(label)).expect("label from table")
    };

    // Training statistics per field.
    let mut standardization = Vec::with_capacity(field_names.len());
    for field in &field_names {
        let rows: Vec<&MetricRecord> = table
            .iter()
            .filter(|r| &r.field_label == field && train_ids.contains(&r.id))
            .collect();
        if rows.len() < 2 {
            return Err(RegressError::TooFewRows { field: field.clone(), rows: rows.len() });
        }
        let mut predictors = Vec::with_capacity(predictor_names.len());
        for column in &predictor_names {
            let values: Vec<f64> = rows.iter().map(|r| raw_value(r, column)).collect();
            let (mean, sd) = mean_sd(&values);
            if sd < 1e-12 {
                return Err(RegressError::DegenerateColumn {
                    field: field.clone(),
                    column: column.clone(),
                });
            }
            predictors.push((mean, sd));
        }
        let responses: Vec<f64> = rows.iter().map(|r| r.log_cpy).collect();
        let (mean, sd) = mean_sd(&responses);
        if sd < 1e-12 {
            return Err(RegressError::DegenerateColumn {
                field: field.clone(),
                column: "log_cpy".into(),
            });
        }
        standardization.push(FieldStandardization {
            field: field.clone(),
            predictors,
            response: (mean, sd),
        });
    }

    let n = table.len();
    let l = predictor_names.len();
    let mut x = Vec::with_capacity(n * l);
    let mut y = Vec::with_capacity(n);
    let mut field_index = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (i, row) in table.iter().enumerate() {
        let f = field_of(&row.field_label);
        let params = &standardization[f];
        for (c, column) in predictor_names.iter().enumerate() {
            let (mean, sd) = params.predictors[c];
            x.push((raw_value(row, column) - mean) / sd);
        }
        let (mean, sd) = params.response;
        y.push((row.log_cpy - mean) / sd);
        field_index.push(f);
        ids.push(row.id.clone());
        if train_ids.contains(&row.id) {
            train_idx.push(i);
        } else {
            test_idx.push(i);
        }
    }

    Ok(RegressionDataset {
        predictor_names,
        field_names,
        ids,
        x,
        y,
        field_index,
        train_idx,
        test_idx,
        standardization,
    })
}

/// Sample mean and sample standard deviation (n − 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for v in values {
        let d = v - mean;
        ss += d * d;
    }
    (mean, (ss / (n - 1.0)).sqrt())
}

/// A model spec resolved against a dataset: column bindings and the flat
/// parameter layout used by the sampler and the posterior files.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub spec: ModelSpec,
    /// Dataset column index per spec predictor.
    pub columns: Vec<usize>,
    pub field_names: Vec<String>,
    pub param_names: Vec<String>,
    gamma: usize,
    beta: Vec<BetaBlock>,
    mu: Vec<Option<usize>>,
    sigma_l: Vec<Option<usize>>,
    sigma: Option<usize>,
    hyper: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
enum BetaBlock {
    Hierarchical { start: usize },
    Pooled { index: usize },
}

impl ResolvedModel {
    pub fn new(spec: &ModelSpec, dataset: &RegressionDataset) -> Result<Self, RegressError> {
        spec.priors.validate()?;
        if let Some(sigma) = spec.fixed_sigma {
            if !sigma.is_finite() || sigma <= 0.0 {
                return Err(RegressError::Config(format!("fixed_sigma must be > 0, got {sigma}")));
            }
        }
        let mut columns = Vec::with_capacity(spec.predictors.len());
        for p in &spec.predictors {
            columns.push(dataset.column_index(&p.column)?);
        }
        let n_fields = dataset.field_names.len();

        let mut names = vec!["gamma".to_string()];
        let mut beta = Vec::with_capacity(spec.predictors.len());
        for p in &spec.predictors {
            match p.pooling {
                Pooling::Hierarchical => {
                    beta.push(BetaBlock::Hierarchical { start: names.len() });
                    for f in &dataset.field_names {
                        names.push(format!("beta[{}][{}]", p.column, f));
                    }
                }
                Pooling::Pooled => {
                    beta.push(BetaBlock::Pooled { index: names.len() });
                    names.push(format!("beta[{}]", p.column));
                }
            }
        }
        let mut mu = Vec::with_capacity(spec.predictors.len());
        for p in &spec.predictors {
            if p.pooling == Pooling::Hierarchical {
                mu.push(Some(names.len()));
                names.push(format!("mu[{}]", p.column));
            } else {
                mu.push(None);
            }
        }
        let mut sigma_l = Vec::with_capacity(spec.predictors.len());
        for p in &spec.predictors {
            if p.pooling == Pooling::Hierarchical {
                sigma_l.push(Some(names.len()));
                names.push(format!("sigma_l[{}]", p.column));
            } else {
                sigma_l.push(None);
            }
        }
        let sigma = if spec.fixed_sigma.is_none() {
            let idx = names.len();
            names.push("sigma".to_string());
            Some(idx)
        } else {
            None
        };
        let any_hyper = spec
            .predictors
            .iter()
            .any(|p| p.pooling == Pooling::Hierarchical && p.hyperprior_on_mu);
        let hyper = if any_hyper {
            let m = names.len();
            names.push("mu_mean".to_string());
            let s = names.len();
            names.push("mu_sd".to_string());
            Some((m, s))
        } else {
            None
        };

        let _ = n_fields;
        Ok(ResolvedModel {
            spec: spec.clone(),
            columns,
            field_names: dataset.field_names.clone(),
            param_names: names,
            gamma: 0,
            beta,
            mu,
            sigma_l,
            sigma,
            hyper,
        })
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn n_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn gamma_index(&self) -> usize {
        self.gamma
    }

    pub fn sigma_index(&self) -> Option<usize> {
        self.sigma
    }

    pub fn mu_index(&self, predictor: usize) -> Option<usize> {
        self.mu[predictor]
    }

    pub fn sigma_l_index(&self, predictor: usize) -> Option<usize> {
        self.sigma_l[predictor]
    }

    pub fn hyper_indices(&self) -> Option<(usize, usize)> {
        self.hyper
    }

    /// Index of `beta[predictor]` for field `f` (hierarchical) or the shared
    /// coefficient (pooled, `f` ignored).
    pub fn beta_index(&self, predictor: usize, field: usize) -> usize {
        match self.beta[predictor] {
            BetaBlock::Hierarchical { start } => start + field,
            BetaBlock::Pooled { index } => index,
        }
    }

    pub fn is_hierarchical(&self, predictor: usize) -> bool {
        matches!(self.beta[predictor], BetaBlock::Hierarchical { .. })
    }

    pub fn sigma_value(&self, params: &[f64]) -> f64 {
        match self.sigma {
            Some(i) => params[i],
            None => self.spec.fixed_sigma.expect("fixed when not sampled"),
        }
    }

    /// The model's predictor values for one dataset row, in predictor order.
    pub fn row_values(&self, dataset: &RegressionDataset, row: usize) -> Vec<f64> {
        self.columns.iter().map(|&c| dataset.value(row, c)).collect()
    }

    /// Linear predictor for standardized inputs `x` (spec predictor order)
    /// in the named field.
    pub fn predict_mu(&self, params: &[f64], x: &[f64], field: &str) -> Result<f64, RegressError> {
        let f = self
            .field_names
            .iter()
            .position(|name| name == field)
            .ok_or_else(|| RegressError::FieldError(field.to_string()))?;
        Ok(self.predict_mu_idx(params, x, f))
    }

    pub fn predict_mu_idx(&self, params: &[f64], x: &[f64], field: usize) -> f64 {
        let mut mu = params[self.gamma];
        for (l, value) in x.iter().enumerate() {
            mu += params[self.beta_index(l, field)] * value;
        }
        mu
    }

    /// Normal log-likelihood of the rows in `rows` given the parameters.
    pub fn log_likelihood(
        &self,
        params: &[f64],
        dataset: &RegressionDataset,
        rows: &[usize],
    ) -> f64 {
        let sigma = self.sigma_value(params);
        let mut total = 0.0;
        for &i in rows {
            let x = self.row_values(dataset, i);
            let mu = self.predict_mu_idx(params, &x, dataset.field_index[i]);
            total += normal_logpdf(dataset.y[i], mu, sigma);
        }
        total
    }

    /// Log prior density of the parameters.
    pub fn log_prior(&self, params: &[f64]) -> f64 {
        let priors = &self.spec.priors;
        let mut total = normal_logpdf(params[self.gamma], 0.0, priors.intercept_scale);
        let n_fields = self.field_names.len();
        for (l, p) in self.spec.predictors.iter().enumerate() {
            match p.pooling {
                Pooling::Hierarchical => {
                    let mu = params[self.mu[l].expect("hierarchical has mu")];
                    let sigma_l = params[self.sigma_l[l].expect("hierarchical has sigma_l")];
                    for f in 0..n_fields {
                        total += normal_logpdf(params[self.beta_index(l, f)], mu, sigma_l);
                    }
                    let (m0, s0) = match (p.hyperprior_on_mu, self.hyper) {
                        (true, Some((m_idx, s_idx))) => (params[m_idx], params[s_idx]),
                        _ => (0.0, priors.mu_l_scale),
                    };
                    total += normal_logpdf(mu, m0, s0);
                    total += half_normal_logpdf(sigma_l, priors.sigma_l_scale);
                }
                Pooling::Pooled => {
                    let beta = params[self.beta_index(l, 0)];
                    total += normal_logpdf(beta, 0.0, priors.mu_l_scale);
                }
            }
        }
        if let Some(sigma_idx) = self.sigma {
            total += half_normal_logpdf(params[sigma_idx], priors.sigma_scale);
        }
        if let Some((m_idx, s_idx)) = self.hyper {
            total += normal_logpdf(params[m_idx], 0.0, 1.0);
            total += half_normal_logpdf(params[s_idx], 1.0);
        }
        total
    }

    /// Log posterior over the training rows.
    pub fn log_posterior(
        &self,
        params: &[f64],
        dataset: &RegressionDataset,
        rows: &[usize],
    ) -> Result<f64, RegressError> {
        let value = self.log_likelihood(params, dataset, rows) + self.log_prior(params);
        if !value.is_finite() {
            return Err(RegressError::Numerical {
                message: format!("log posterior is {value}"),
                dump: self.dump_params(params),
            });
        }
        Ok(value)
    }

    pub fn dump_params(&self, params: &[f64]) -> String {
        self.param_names
            .iter()
            .zip(params)
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

pub(crate) fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Log density of |Normal(0, scale)| for x > 0.
pub(crate) fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * (2.0 / std::f64::consts::PI).ln() - scale.ln() - 0.5 * (x / scale) * (x / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn record(id: &str, field: &str, log_cpy: f64, n_ref: u64, age: f64, rho: f64) -> MetricRecord {
        MetricRecord {
            id: id.into(),
            field_label: field.into(),
            rho: BTreeMap::from([("e".to_string(), rho)]),
            alpha: BTreeMap::from([("e".to_string(), 0.3 + 0.1 * rho.sin().abs())]),
            log_cpy,
            n_ref,
            age_years: age,
        }
    }

    fn tiny_table() -> (Vec<MetricRecord>, BTreeSet<String>) {
        let mut table = Vec::new();
        for i in 0..6 {
            table.push(record(
                &format!("a{i}"),
                "A",
                i as f64 * 0.5,
                10 + i,
                1.0 + i as f64,
                3.0 + i as f64,
            ));
            table.push(record(
                &format!("b{i}"),
                "B",
                1.0 - i as f64 * 0.25,
                20 + 2 * i,
                2.0 + i as f64,
                7.0 - i as f64,
            ));
        }
        let train: BTreeSet<String> = table.iter().map(|r| r.id.clone()).collect();
        (table, train)
    }

    #[test]
    fn standardize_simple_column() {
        // Field column values [1, 2, 3] standardize to [-1, 0, 1] (sample sd 1).
        let table = vec![
            record("a", "A", 1.0, 1, 1.0, 2.0),
            record("b", "A", 2.0, 2, 2.0, 3.0),
            record("c", "A", 3.0, 3, 3.0, 4.0),
        ];
        let train: BTreeSet<String> = table.iter().map(|r| r.id.clone()).collect();
        let ds = standardize_by_field(&table, &train).unwrap();
        let col = ds.column_index("n_ref").unwrap();
        let values: Vec<f64> = (0..3).map(|i| ds.value(i, col)).collect();
        assert!((values[0] + 1.0).abs() < 1e-12);
        assert!(values[1].abs() < 1e-12);
        assert!((values[2] - 1.0).abs() < 1e-12);
        assert!((ds.y[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let table = vec![
            record("a", "A", 1.0, 5, 1.0, 2.0),
            record("b", "A", 2.0, 5, 2.0, 3.0),
            record("c", "A", 3.0, 5, 3.0, 4.0),
        ];
        let train: BTreeSet<String> = table.iter().map(|r| r.id.clone()).collect();
        match standardize_by_field(&table, &train) {
            Err(RegressError::DegenerateColumn { field, column }) => {
                assert_eq!(field, "A");
                assert_eq!(column, "n_ref");
            }
            other => panic!("expected DegenerateColumn, got {other:?}"),
        }
    }

    #[test]
    fn inverse_transform_recovers_originals() {
        let (table, train) = tiny_table();
        let ds = standardize_by_field(&table, &train).unwrap();
        for (i, row) in table.iter().enumerate() {
            let f = ds.field_index[i];
            let back = ds.destandardize_response(f, ds.y[i]);
            assert!((back - row.log_cpy).abs() < 1e-12);
            for (c, column) in ds.predictor_names.iter().enumerate() {
                let back = ds.destandardize_predictor(f, c, ds.value(i, c));
                assert!((back - raw_value(row, column)).abs() < 1e-12, "{column}");
            }
        }
    }

    #[test]
    fn training_rows_have_zero_mean_unit_sd() {
        let (mut table, _) = tiny_table();
        // Hold the last row of each field out of training.
        let train: BTreeSet<String> = table
            .iter()
            .filter(|r| !r.id.ends_with('5'))
            .map(|r| r.id.clone())
            .collect();
        table.sort_by(|a, b| a.id.cmp(&b.id));
        let ds = standardize_by_field(&table, &train).unwrap();
        for f in 0..ds.field_names.len() {
            for c in 0..ds.n_predictors() {
                let values: Vec<f64> = ds
                    .train_idx
                    .iter()
                    .filter(|&&i| ds.field_index[i] == f)
                    .map(|&i| ds.value(i, c))
                    .collect();
                let (mean, sd) = mean_sd(&values);
                assert!(mean.abs() < 1e-9, "field {f} col {c} mean {mean}");
                assert!((sd - 1.0).abs() < 1e-9, "field {f} col {c} sd {sd}");
            }
        }
        assert_eq!(ds.train_idx.len() + ds.test_idx.len(), ds.len());
    }

    #[test]
    fn predict_mu_basics() {
        let (table, train) = tiny_table();
        let ds = standardize_by_field(&table, &train).unwrap();
        let spec = ModelSpec::new("m").with_hierarchical("rho_e").with_pooled("n_ref");
        let model = ResolvedModel::new(&spec, &ds).unwrap();
        let mut params = vec![0.0; model.n_params()];

        // All x at zero: mu = gamma.
        params[model.gamma_index()] = 0.7;
        let mu = model.predict_mu(&params, &[0.0, 0.0], "A").unwrap();
        assert_eq!(mu, 0.7);

        // One pooled predictor: beta 0.5 at x 2 with gamma 0 gives 1.0.
        params[model.gamma_index()] = 0.0;
        let pooled = model.beta_index(1, 0);
        params[pooled] = 0.5;
        let mu = model.predict_mu(&params, &[0.0, 2.0], "B").unwrap();
        assert!((mu - 1.0).abs() < 1e-15);

        assert!(matches!(
            model.predict_mu(&params, &[0.0, 0.0], "Nope"),
            Err(RegressError::FieldError(_))
        ));
    }

    #[test]
    fn predict_mu_matches_explicit_loop_and_is_linear() {
        use rand::{Rng, SeedableRng};
        let (table, train) = tiny_table();
        let ds = standardize_by_field(&table, &train).unwrap();
        let spec = ModelSpec::new("m")
            .with_hierarchical("rho_e")
            .with_hierarchical("n_ref")
            .with_pooled("age");
        let model = ResolvedModel::new(&spec, &ds).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(40);
        for _ in 0..20 {
            let p1: Vec<f64> = (0..model.n_params()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p2: Vec<f64> = (0..model.n_params()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = rng.gen_range(0..ds.field_names.len());

            // Explicit-loop oracle.
            let mut oracle = p1[model.gamma_index()];
            for l in 0..3 {
                oracle += p1[model.beta_index(l, f)] * x[l];
            }
            let got = model.predict_mu_idx(&p1, &x, f);
            assert!((got - oracle).abs() < 1e-12);

            // Linearity in the parameter vector.
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let combo: Vec<f64> = p1.iter().zip(&p2).map(|(u, v)| a * u + b * v).collect();
            let lhs = model.predict_mu_idx(&combo, &x, f);
            let rhs = a * model.predict_mu_idx(&p1, &x, f) + b * model.predict_mu_idx(&p2, &x, f);
            assert!((lhs - rhs).abs() < 1e-9, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn log_likelihood_reference_values() {
        let table = vec![
            record("a", "A", 1.0, 1, 1.0, 2.0),
            record("b", "A", 2.0, 2, 2.0, 3.0),
            record("c", "A", 3.0, 3, 3.0, 4.0),
        ];
        let train: BTreeSet<String> = table.iter().map(|r| r.id.clone()).collect();
        let ds = standardize_by_field(&table, &train).unwrap();
        let mut spec = ModelSpec::new("m");
        spec.fixed_sigma = Some(1.0);
        let model = ResolvedModel::new(&spec, &ds).unwrap();
        // gamma equal to a row's response gives zero residual on that row.
        let params = vec![ds.y[1]];
        let ll = model.log_likelihood(&params, &ds, &[1]);
        assert!((ll + 0.5 * LN_2PI).abs() < 1e-12);

        // Doubling sigma at zero residual costs ln 2 per row.
        let mut spec2 = ModelSpec::new("m2");
        spec2.fixed_sigma = Some(2.0);
        let model2 = ResolvedModel::new(&spec2, &ds).unwrap();
        let ll2 = model2.log_likelihood(&params, &ds, &[1]);
        assert!((ll - ll2 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn log_posterior_matches_term_by_term_oracle() {
        use rand::{Rng, SeedableRng};
        let (table, train) = tiny_table();
        let ds = standardize_by_field(&table, &train).unwrap();
        let mut spec = ModelSpec::new("m")
            .with_hierarchical("rho_e")
            .with_pooled("n_ref");
        spec.predictors[0].hyperprior_on_mu = true;
        let model = ResolvedModel::new(&spec, &ds).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(41);
        let rows: Vec<usize> = (0..ds.len()).collect();
        for _ in 0..10 {
            let mut params: Vec<f64> =
                (0..model.n_params()).map(|_| rng.gen_range(-1.5..1.5)).collect();
            // Scale parameters must be positive.
            for l in 0..spec.predictors.len() {
                if let Some(i) = model.sigma_l_index(l) {
                    params[i] = params[i].abs().max(0.1);
                }
            }
            if let Some(i) = model.sigma_index() {
                params[i] = params[i].abs().max(0.1);
            }
            if let Some((_, s)) = model.hyper_indices() {
                params[s] = params[s].abs().max(0.1);
            }

            // Naive term-by-term oracle.
            let normal = |x: f64, m: f64, s: f64| {
                -0.5 * (2.0 * std::f64::consts::PI).ln() - s.ln() - (x - m) * (x - m) / (2.0 * s * s)
            };
            let half = |x: f64, s: f64| {
                0.5 * (2.0 / std::f64::consts::PI).ln() - s.ln() - x * x / (2.0 * s * s)
            };
            let sigma = model.sigma_value(&params);
            let mut oracle = 0.0;
            for &i in &rows {
                let f = ds.field_index[i];
                let mut mu = params[model.gamma_index()];
                mu += params[model.beta_index(0, f)] * ds.value(i, ds.column_index("rho_e").unwrap());
                mu += params[model.beta_index(1, 0)] * ds.value(i, ds.column_index("n_ref").unwrap());
                oracle += normal(ds.y[i], mu, sigma);
            }
            oracle += normal(params[model.gamma_index()], 0.0, 1.0);
            let mu_l = params[model.mu_index(0).unwrap()];
            let sig_l = params[model.sigma_l_index(0).unwrap()];
            for f in 0..ds.field_names.len() {
                oracle += normal(params[model.beta_index(0, f)], mu_l, sig_l);
            }
            let (m_idx, s_idx) = model.hyper_indices().unwrap();
            oracle += normal(mu_l, params[m_idx], params[s_idx]);
            oracle += half(sig_l, 1.0);
            oracle += normal(params[model.beta_index(1, 0)], 0.0, 1.0);
            oracle += half(sigma, 1.0);
            oracle += normal(params[m_idx], 0.0, 1.0);
            oracle += half(params[s_idx], 1.0);

            let got = model.log_posterior(&params, &ds, &rows).unwrap();
            assert!((got - oracle).abs() < 1e-10, "got {got}, oracle {oracle}");
        }
    }

    #[test]
    fn non_finite_posterior_is_reported_with_dump() {
        let (table, train) = tiny_table();
        let ds = standardize_by_field(&table, &train).unwrap();
        let spec = ModelSpec::new("m").with_pooled("age");
        let model = ResolvedModel::new(&spec, &ds).unwrap();
        let mut params = vec![0.0; model.n_params()];
        params[model.sigma_index().unwrap()] = -1.0;
        let rows: Vec<usize> = (0..ds.len()).collect();
        match model.log_posterior(&params, &ds, &rows) {
            Err(RegressError::Numerical { dump, .. }) => assert!(dump.contains("sigma=")),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }
}
