//! `litfield expand`: replay similarity-ordered growth of each field's
//! collection from its center, snapshotting neighborhoods as it grows and
//! identifying the converged publications.

use std::collections::BTreeMap;

use litfield_core::atlas::{
    converged_ids, expand, snapshot, AtlasState, ExpansionContext, NeighborhoodSnapshot,
    TemporalRule,
};
use litfield_core::corpus::{payload_from_record, CorpusStore, MemoryProvider, Query};
use litfield_core::embed::EmbeddingSet;

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::write_json_with_meta;
use crate::CliError;

use super::{current_stamp, ensure_dir, load_corpus, load_normalized_matrix};

#[derive(serde::Serialize, serde::Deserialize)]
pub(crate) struct ConvergedArtifact {
    pub field: String,
    pub k: usize,
    pub before_size: usize,
    pub after_size: usize,
    pub converged: Vec<String>,
    pub rejections: BTreeMap<String, usize>,
}

pub fn cmd_expand(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    let stamp = current_stamp(config);
    let retrieved_at = config.parse_date(&config.corpus.retrieved_at)?;
    let k = config.atlas.knn_k;
    let n_additions = config.atlas.convergence_additions;

    for field in &config.fields {
        let corpus = load_corpus(config, field)?;
        let vectors = load_normalized_matrix(
            config,
            &paths.matrix(field, &config.atlas.expansion_embedder),
            &config.atlas.expansion_embedder,
        )?;
        let center_id = config.atlas.centers[field].clone();
        let center_record = corpus
            .get(&center_id)
            .ok_or_else(|| {
                CliError::Config(format!("center {center_id} not in corpus for field {field}"))
            })?
            .clone();
        let center_row = vectors
            .row_by_id(&center_id)
            .ok_or_else(|| {
                CliError::Config(format!("center {center_id} has no {} vector", vectors.embedder_id()))
            })?
            .into_owned();

        // Seed the atlas with just the center; the provider replays the rest
        // of the ingested pool.
        let mut seed_store = CorpusStore::new(corpus.provenance.clone());
        seed_store.insert(center_record)?;
        let mut seed_set = EmbeddingSet::from_rows(
            config.atlas.expansion_embedder.clone(),
            vec![center_id.clone()],
            vec![center_row],
        )?;
        seed_set = litfield_core::embed::normalize(seed_set)?;
        let mut atlas = AtlasState::new(seed_store, seed_set, center_id.clone())?;

        let provider = MemoryProvider {
            payloads: corpus
                .iter()
                .filter(|r| r.id != center_id)
                .map(|r| (r.id.clone(), payload_from_record(r)))
                .collect(),
        };
        let ctx = ExpansionContext {
            provider: &provider,
            query: Query::All,
            page_size: config.corpus.page_size,
            vectors: &vectors,
            target_field: field.clone(),
            retrieved_at,
        };

        ensure_dir(&paths.atlas_dir(field))?;
        let mut snapshots: Vec<NeighborhoodSnapshot> = Vec::new();
        let mut since_snapshot = 0usize;
        let mut rejections: BTreeMap<String, usize> = BTreeMap::new();
        loop {
            let outcome = expand(&mut atlas, &ctx, config.atlas.batch_size)?;
            for (reason, count) in &outcome.rejections {
                *rejections.entry(reason.as_str().to_string()).or_insert(0) += count;
            }
            if outcome.missing_vectors > 0 {
                *rejections.entry("missing_vector".to_string()).or_insert(0) +=
                    outcome.missing_vectors;
            }
            since_snapshot += outcome.admitted.len();
            if since_snapshot >= n_additions {
                let result = snapshot(&atlas, k, TemporalRule::StrictlyEarlier)?;
                write_json_with_meta(
                    &paths.snapshot(field, result.snapshot.collection_size),
                    &stamp,
                    &result.snapshot,
                )?;
                snapshots.push(result.snapshot);
                since_snapshot = 0;
            }
            if outcome.admitted.is_empty() {
                break;
            }
        }
        // Final-state snapshot, if the collection grew past the last one.
        if since_snapshot > 0 || snapshots.is_empty() {
            let result = snapshot(&atlas, k, TemporalRule::StrictlyEarlier)?;
            write_json_with_meta(
                &paths.snapshot(field, result.snapshot.collection_size),
                &stamp,
                &result.snapshot,
            )?;
            snapshots.push(result.snapshot);
        }

        let log_file = std::fs::File::create(paths.expansion_log(field))?;
        litfield_core::atlas::write_expansion_log(
            &atlas.expansion_log,
            std::io::BufWriter::new(log_file),
        )?;
        write_json_with_meta(
            &paths.expansion_meta(field),
            &stamp,
            &serde_json::json!({
                "field": field,
                "center_id": center_id,
                "batches": atlas.expansion_log.len(),
                "collection_size": atlas.collection_size(),
            }),
        )?;

        // The converged set compares the final snapshot against the most
        // recent one at least `convergence_additions` admissions earlier.
        let last = snapshots.last().expect("at least one snapshot");
        let before = snapshots
            .iter()
            .rev()
            .skip(1)
            .find(|s| s.collection_size + n_additions <= last.collection_size);
        let (converged, before_size) = match before {
            Some(before) => {
                let ids = converged_ids(before, last, n_additions)?;
                (ids.into_iter().collect::<Vec<_>>(), before.collection_size)
            }
            None => {
                log::warn!(
                    "expand {field}: collection too small for a {n_additions}-addition window; no converged publications"
                );
                (Vec::new(), last.collection_size)
            }
        };
        log::info!(
            "expand {field}: {} members, {} converged",
            atlas.collection_size(),
            converged.len()
        );
        write_json_with_meta(
            &paths.converged(field),
            &stamp,
            &ConvergedArtifact {
                field: field.clone(),
                k,
                before_size,
                after_size: last.collection_size,
                converged,
                rejections,
            },
        )?;
    }
    Ok(())
}
