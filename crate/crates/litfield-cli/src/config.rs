//! Pipeline configuration: one TOML document with per-module tables.
//!
//! Dates are ISO `YYYY-MM-DD` strings. The resolved configuration (after
//! `--seed`/`--out` overrides) is hashed, and every artifact carries that
//! hash so stages refuse to silently mix outputs from different configs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub fields: Vec<String>,
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub embed: EmbedConfig,
    pub atlas: AtlasConfig,
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub priors: PriorsConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// "fixture" or "live".
    pub provider: String,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default = "default_rps")]
    pub requests_per_second: f64,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: u32,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    /// Date the citation counts were retrieved (ISO string).
    pub retrieved_at: String,
    pub window_start: String,
    pub window_end: String,
}

fn default_page_size() -> usize {
    100
}
fn default_rps() -> f64 {
    1.0
}
fn default_retry_cap() -> u32 {
    5
}
fn default_max_inflight() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportConfig {
    pub embedder_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedConfig {
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default = "default_true")]
    pub build_bow: bool,
    #[serde(default)]
    pub imports: Vec<ImportConfig>,
    /// "text" or "binary" row encoding for matrix files.
    #[serde(default = "default_matrix_format")]
    pub matrix_format: String,
}

fn default_min_count() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_matrix_format() -> String {
    "text".into()
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            min_count: default_min_count(),
            build_bow: true,
            imports: Vec::new(),
            matrix_format: default_matrix_format(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasConfig {
    /// Embedder used for expansion-order similarity.
    pub expansion_embedder: String,
    /// Center publication id per field.
    pub centers: BTreeMap<String, String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_k")]
    pub knn_k: usize,
    #[serde(default = "default_convergence_additions")]
    pub convergence_additions: usize,
}

fn default_batch_size() -> usize {
    100
}
fn default_k() -> usize {
    16
}
fn default_convergence_additions() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Neighborhood size; defaults to `atlas.knn_k`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_angle_floor")]
    pub angle_floor: f64,
    #[serde(default = "default_cpy_offset")]
    pub cpy_offset: f64,
    #[serde(default = "default_age_floor")]
    pub age_floor_years: f64,
    pub asof_date: String,
}

fn default_angle_floor() -> f64 {
    1e-9
}
fn default_cpy_offset() -> f64 {
    0.1
}
fn default_age_floor() -> f64 {
    1.0 / litfield_core::metrics::DAYS_PER_YEAR
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_true")]
    pub stratify: bool,
}

fn default_test_fraction() -> f64 {
    0.25
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: default_test_fraction(), stratify: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcConfig {
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_chains() -> usize {
    4
}
fn default_warmup() -> usize {
    1000
}
fn default_iterations() -> usize {
    2000
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: default_chains(),
            warmup: default_warmup(),
            iterations: default_iterations(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorsConfig {
    #[serde(default = "default_scale")]
    pub intercept_scale: f64,
    #[serde(default = "default_scale")]
    pub mu_l_scale: f64,
    #[serde(default = "default_scale")]
    pub sigma_l_scale: f64,
    #[serde(default = "default_scale")]
    pub sigma_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl Default for PriorsConfig {
    fn default() -> Self {
        PriorsConfig {
            intercept_scale: 1.0,
            mu_l_scale: 1.0,
            sigma_l_scale: 1.0,
            sigma_scale: 1.0,
        }
    }
}

impl PriorsConfig {
    pub fn to_core(&self) -> litfield_core::regress::PriorConfig {
        litfield_core::regress::PriorConfig {
            intercept_scale: self.intercept_scale,
            mu_l_scale: self.mu_l_scale,
            sigma_l_scale: self.sigma_l_scale,
            sigma_scale: self.sigma_scale,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Benchmark model names to fit; see `litfield fit --help`.
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    /// Extra model manifests (ModelSpec JSON files).
    #[serde(default)]
    pub manifests: Vec<PathBuf>,
    /// "mean" or "median" point predictions for evaluation.
    #[serde(default = "default_point_estimate")]
    pub point_estimate: String,
}

fn default_models() -> Vec<String> {
    vec![
        "base_mean".into(),
        "per_field_nref_t".into(),
        "rho_nref_t".into(),
        "alpha_nref_t".into(),
        "rho_alpha_nref_t".into(),
    ]
}
fn default_point_estimate() -> String {
    "mean".into()
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            models: default_models(),
            manifests: Vec::new(),
            point_estimate: default_point_estimate(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyConfig {
    #[serde(default = "default_scale")]
    pub lambda: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_svd_dim")]
    pub svd_dim: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_lr() -> f64 {
    0.5
}
fn default_max_iters() -> usize {
    500
}
fn default_svd_dim() -> usize {
    2
}
fn default_train_fraction() -> f64 {
    0.8
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            lambda: 1.0,
            learning_rate: default_lr(),
            max_iters: default_max_iters(),
            svd_dim: default_svd_dim(),
            train_fraction: default_train_fraction(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Model whose effect sizes the report exports.
    #[serde(default = "default_report_model")]
    pub model: String,
    #[serde(default = "default_svd_dim")]
    pub projection_dim: usize,
    #[serde(default = "default_reduced_dim")]
    pub reduced_dim: usize,
}

fn default_report_model() -> String {
    "rho_nref_t".into()
}
fn default_reduced_dim() -> usize {
    100
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            model: default_report_model(),
            projection_dim: default_svd_dim(),
            reduced_dim: default_reduced_dim(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(out) = out {
            config.paths.out_dir = out;
        }
        // Relative paths resolve against the config file's directory.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.paths.out_dir = resolve(base, &config.paths.out_dir);
        if let Some(dir) = &config.corpus.fixture_dir {
            config.corpus.fixture_dir = Some(resolve(base, dir));
        }
        for import in &mut config.embed.imports {
            import.path = resolve(base, &import.path);
        }
        for manifest in &mut config.fit.manifests {
            *manifest = resolve(base, manifest);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.fields.is_empty() {
            return Err(CliError::Config("fields list is empty".into()));
        }
        match self.corpus.provider.as_str() {
            "fixture" => {
                let dir = self.corpus.fixture_dir.as_ref().ok_or_else(|| {
                    CliError::Config("provider \"fixture\" needs corpus.fixture_dir".into())
                })?;
                if !dir.is_dir() {
                    return Err(CliError::Config(format!(
                        "fixture_dir {} is not a directory",
                        dir.display()
                    )));
                }
            }
            "live" => {
                if self.corpus.base_url.is_none() {
                    return Err(CliError::Config("provider \"live\" needs corpus.base_url".into()));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown provider {other:?}; use \"fixture\" or \"live\""
                )))
            }
        }
        self.parse_date(&self.corpus.retrieved_at)?;
        let start = self.parse_date(&self.corpus.window_start)?;
        let end = self.parse_date(&self.corpus.window_end)?;
        if start > end {
            return Err(CliError::Config("window_start is after window_end".into()));
        }
        self.parse_date(&self.metrics.asof_date)?;
        for field in &self.fields {
            if !self.atlas.centers.contains_key(field) {
                return Err(CliError::Config(format!("no atlas center for field {field:?}")));
            }
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(CliError::Config("split.test_fraction must be in (0, 1)".into()));
        }
        if self.mcmc.chains < 2 {
            return Err(CliError::Config("mcmc.chains must be at least 2".into()));
        }
        match self.embed.matrix_format.as_str() {
            "text" | "binary" => {}
            other => {
                return Err(CliError::Config(format!(
                    "unknown matrix_format {other:?}; use \"text\" or \"binary\""
                )))
            }
        }
        match self.fit.point_estimate.as_str() {
            "mean" | "median" => {}
            other => {
                return Err(CliError::Config(format!(
                    "unknown point_estimate {other:?}; use \"mean\" or \"median\""
                )))
            }
        }
        for import in &self.embed.imports {
            if import.embedder_id == "bow" {
                return Err(CliError::Config("import id \"bow\" collides with the built bag-of-words".into()));
            }
        }
        Ok(())
    }

    pub fn parse_date(&self, s: &str) -> Result<NaiveDate, CliError> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|e| CliError::Config(format!("bad date {s:?}: {e}")))
    }

    pub fn matrix_format(&self) -> litfield_core::embed::io::MatrixFormat {
        match self.embed.matrix_format.as_str() {
            "binary" => litfield_core::embed::io::MatrixFormat::Binary,
            _ => litfield_core::embed::io::MatrixFormat::Text,
        }
    }

    pub fn metric_k(&self) -> usize {
        self.metrics.k.unwrap_or(self.atlas.knn_k)
    }

    /// Stable hash of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        hex16(&digest)
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn hex16(digest: &[u8]) -> String {
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
