//! `litfield ingest`: fetch payloads per field, validate them, and persist
//! the corpus with its provenance and rejection counts.

use std::collections::BTreeMap;

use litfield_core::corpus::{
    fetch_batch_concurrent, validate_record, CorpusStore, FixtureProvider, LiveProvider,
    Provenance, Provider, ProviderConfig, Query, ValidationResult,
};

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::write_json_with_meta;
use crate::CliError;

use super::{current_stamp, ensure_dir, ProvenanceArtifact};

pub fn cmd_ingest(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    ensure_dir(&paths.corpus_dir())?;
    let stamp = current_stamp(config);
    let retrieved_at = config.parse_date(&config.corpus.retrieved_at)?;

    let provider: Box<dyn Provider> = match config.corpus.provider.as_str() {
        "fixture" => Box::new(FixtureProvider::new(
            config.corpus.fixture_dir.as_ref().expect("validated"),
        )?),
        _ => Box::new(LiveProvider::new(ProviderConfig {
            base_url: config.corpus.base_url.clone().expect("validated"),
            api_key: std::env::var("LITFIELD_API_KEY").ok(),
            requests_per_second: config.corpus.requests_per_second,
            retry_cap: config.corpus.retry_cap,
            ..Default::default()
        })?),
    };

    for field in &config.fields {
        let query = match config.corpus.provider.as_str() {
            "fixture" => Query::All,
            _ => Query::Search(field.clone()),
        };
        let payloads = fetch_batch_concurrent(
            provider.as_ref(),
            &query,
            config.corpus.page_size,
            config.corpus.max_inflight,
        )?;

        let provenance = Provenance {
            provider: provider.id().to_string(),
            query: query.describe(),
            center_id: config.atlas.centers.get(field).cloned(),
            retrieved_at: Some(retrieved_at),
            parameters: BTreeMap::from([
                ("page_size".to_string(), config.corpus.page_size.to_string()),
                ("field".to_string(), field.clone()),
            ]),
        };
        let mut store = CorpusStore::new(provenance.clone());
        let mut rejections: BTreeMap<String, usize> = BTreeMap::new();
        for raw in &payloads {
            match validate_record(raw, field, retrieved_at)? {
                ValidationResult::Valid(record) => {
                    if store.contains(&record.id) {
                        *rejections.entry("duplicate_payload".to_string()).or_insert(0) += 1;
                    } else {
                        store.insert(record)?;
                    }
                }
                ValidationResult::Rejected(reason) => {
                    *rejections.entry(reason.as_str().to_string()).or_insert(0) += 1;
                }
            }
        }
        log::info!(
            "ingest {field}: {} accepted, {} rejected",
            store.len(),
            rejections.values().sum::<usize>()
        );
        store.save(&paths.corpus(field))?;
        write_json_with_meta(
            &paths.provenance(field),
            &stamp,
            &ProvenanceArtifact { provenance, accepted: store.len(), rejections },
        )?;
    }
    Ok(())
}
