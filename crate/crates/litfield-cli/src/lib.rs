//! Library surface of the `litfield` pipeline CLI. Each subcommand is a
//! function over a validated [`config::PipelineConfig`], so the end-to-end
//! pipeline is drivable from tests exactly as from the binary.

use thiserror::Error;

pub mod commands;
pub mod config;
pub mod paths;
pub mod stamp;

/// Exit code 2.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code 3.
pub const EXIT_UPSTREAM: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing upstream artifact {path}; run `{producer}` first")]
    Upstream { path: String, producer: String },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Upstream { .. } => EXIT_UPSTREAM,
            CliError::Other(_) => 1,
        }
    }
}

macro_rules! impl_from_error {
    ($type:ty) => {
        impl From<$type> for CliError {
            fn from(e: $type) -> Self {
                CliError::Other(e.to_string())
            }
        }
    };
}

impl_from_error!(std::io::Error);
impl_from_error!(litfield_core::corpus::CorpusError);
impl_from_error!(litfield_core::corpus::provider::ProviderError);
impl_from_error!(litfield_core::embed::EmbedError);
impl_from_error!(litfield_core::atlas::AtlasError);
impl_from_error!(litfield_core::metrics::MetricError);
impl_from_error!(litfield_core::regress::RegressError);
impl_from_error!(litfield_core::evaluate::EvalError);
impl_from_error!(litfield_core::classify::ClassifyError);
impl_from_error!(serde_json::Error);
