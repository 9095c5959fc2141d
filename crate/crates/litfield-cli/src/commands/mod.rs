//! Pipeline subcommands. Each one is a function of the validated config;
//! all randomness flows from the config seed through the stage-seed
//! derivation, so every command is idempotent given identical inputs.

use std::collections::BTreeMap;

use litfield_core::corpus::{CorpusStore, Provenance};
use litfield_core::embed::{self, EmbeddingSet};

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::{check_stamp, read_json_with_meta, require_upstream, Stamp};
use crate::CliError;

mod classify;
mod embed_cmd;
mod evaluate;
mod expand;
mod fit;
mod ingest;
mod metrics;
mod report;

pub use classify::cmd_classify;
pub use embed_cmd::cmd_embed;
pub use evaluate::cmd_evaluate;
pub use expand::cmd_expand;
pub use fit::cmd_fit;
pub use ingest::cmd_ingest;
pub use metrics::cmd_metrics;
pub use report::cmd_report;

pub(crate) fn current_stamp(config: &PipelineConfig) -> Stamp {
    Stamp::new(config.hash(), config.seed)
}

/// Provenance sidecar content for a corpus file.
#[derive(serde::Serialize, serde::Deserialize)]
pub(crate) struct ProvenanceArtifact {
    pub provenance: Provenance,
    pub accepted: usize,
    pub rejections: BTreeMap<String, usize>,
}

/// Load a corpus written by `litfield ingest`, checking its stamp.
pub(crate) fn load_corpus(
    config: &PipelineConfig,
    field: &str,
) -> Result<CorpusStore, CliError> {
    let paths = ArtifactPaths::new(config);
    let corpus_path = paths.corpus(field);
    require_upstream(&corpus_path, "litfield ingest")?;
    let (found, artifact): (Stamp, ProvenanceArtifact) =
        read_json_with_meta(&paths.provenance(field), "litfield ingest")?;
    check_stamp(&found, &current_stamp(config), &paths.provenance(field), "litfield ingest");
    let store = CorpusStore::load(&corpus_path, artifact.provenance)?;
    Ok(store)
}

/// Embedder ids in play: the built bag-of-words plus the configured imports,
/// sorted for stable column order.
pub(crate) fn embedder_ids(config: &PipelineConfig) -> Vec<String> {
    let mut ids = Vec::new();
    if config.embed.build_bow {
        ids.push("bow".to_string());
    }
    for import in &config.embed.imports {
        ids.push(import.embedder_id.clone());
    }
    ids.sort();
    ids
}

/// Load a normalized matrix produced by `litfield embed`.
pub(crate) fn load_normalized_matrix(
    config: &PipelineConfig,
    path: &std::path::Path,
    embedder: &str,
) -> Result<EmbeddingSet, CliError> {
    require_upstream(path, "litfield embed")?;
    let set = embed::io::load_matrix(path, embedder, config.matrix_format())?;
    Ok(embed::normalize(set)?)
}

pub(crate) fn ensure_dir(path: &std::path::Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Other(format!("create {}: {e}", path.display())))
}

/// Write a CSV artifact with the stamp comment line first.
pub(crate) fn write_stamped_csv(
    path: &std::path::Path,
    stamp: &Stamp,
    body: &str,
) -> Result<(), CliError> {
    let text = format!("{}\n{body}", stamp.csv_line());
    std::fs::write(path, text)
        .map_err(|e| CliError::Other(format!("write {}: {e}", path.display())))?;
    Ok(())
}
