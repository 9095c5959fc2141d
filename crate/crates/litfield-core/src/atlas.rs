//! Collection growth and neighborhood convergence.
//!
//! An atlas grows outward from a fixed center publication, admitting
//! candidates in order of decreasing cosine similarity to the center's
//! embedding. Snapshots record each member's k nearest previous neighbors at
//! a collection state; a publication is "converged" when its neighbor set is
//! unchanged between two snapshots separated by at least a configured number
//! of admissions, at which point its local density estimate is trustworthy.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    fetch_batch, CorpusStore, Provider, Query, Rejection, ValidationResult,
};
use crate::embed::EmbeddingSet;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("center id {0} has no embedding")]
    MissingCenter(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Provider(#[from] crate::corpus::provider::ProviderError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which neighbors count as "previous" when snapshotting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalRule {
    /// Strictly earlier calendar date (the default everywhere).
    StrictlyEarlier,
    /// Earlier or same-day. Kept for sensitivity checks only.
    OnOrBefore,
}

/// One admission batch in the expansion log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionBatch {
    pub batch: usize,
    pub ids: Vec<String>,
}

/// A growing collection: records, their embeddings (for the expansion
/// embedder), the fixed center, and the admission history.
pub struct AtlasState {
    pub store: CorpusStore,
    pub embeddings: EmbeddingSet,
    pub center_id: String,
    pub expansion_log: Vec<ExpansionBatch>,
}

impl AtlasState {
    /// Seed an atlas with a center publication and its embedding.
    pub fn new(
        store: CorpusStore,
        embeddings: EmbeddingSet,
        center_id: impl Into<String>,
    ) -> Result<Self, AtlasError> {
        let center_id = center_id.into();
        if !embeddings.is_normalized() {
            return Err(AtlasError::Config("expansion embeddings must be normalized".into()));
        }
        if embeddings.index_of(&center_id).is_none() {
            return Err(AtlasError::MissingCenter(center_id));
        }
        Ok(AtlasState { store, embeddings, center_id, expansion_log: Vec::new() })
    }

    pub fn collection_size(&self) -> usize {
        self.store.len()
    }
}

/// Everything `expand` needs besides the atlas itself.
pub struct ExpansionContext<'a, P: Provider + ?Sized> {
    pub provider: &'a P,
    pub query: Query,
    pub page_size: usize,
    /// Normalized vectors for every candidate the provider may return.
    pub vectors: &'a EmbeddingSet,
    pub target_field: String,
    pub retrieved_at: NaiveDate,
}

/// Result of one expansion step.
#[derive(Debug, Clone)]
pub struct ExpandOutcome {
    pub admitted: Vec<String>,
    /// Set when the provider ran out of candidates before the batch filled.
    pub exhausted: bool,
    pub rejections: BTreeMap<Rejection, usize>,
    pub missing_vectors: usize,
}

/// Admit the `batch_size` valid candidates most similar to the center.
///
/// Candidates are fetched from the provider, validated, and scored by cosine
/// similarity of their vector to the center's; ties break toward the
/// lexicographically smaller id so expansion order is reproducible.
pub fn expand<P: Provider + ?Sized>(
    atlas: &mut AtlasState,
    ctx: &ExpansionContext<'_, P>,
    batch_size: usize,
) -> Result<ExpandOutcome, AtlasError> {
    if !ctx.vectors.is_normalized() {
        return Err(AtlasError::Config("candidate vectors must be normalized".into()));
    }
    let mut outcome = ExpandOutcome {
        admitted: Vec::new(),
        exhausted: false,
        rejections: BTreeMap::new(),
        missing_vectors: 0,
    };
    if batch_size == 0 {
        return Ok(outcome);
    }

    let center_index = atlas
        .embeddings
        .index_of(&atlas.center_id)
        .ok_or_else(|| AtlasError::MissingCenter(atlas.center_id.clone()))?;
    let center_row = atlas.embeddings.row(center_index).into_owned();

    let payloads = fetch_batch(ctx.provider, &ctx.query, ctx.page_size)?;
    let mut scored: Vec<(f64, String, crate::corpus::PublicationRecord)> = Vec::new();
    for raw in &payloads {
        match crate::corpus::validate_record(raw, &ctx.target_field, ctx.retrieved_at)? {
            ValidationResult::Rejected(reason) => {
                *outcome.rejections.entry(reason).or_insert(0) += 1;
            }
            ValidationResult::Valid(record) => {
                if atlas.store.contains(&record.id) {
                    continue;
                }
                let Some(vector) = ctx.vectors.row_by_id(&record.id) else {
                    outcome.missing_vectors += 1;
                    continue;
                };
                let similarity = crate::embed::cosine_similarity(&center_row, vector.as_ref())?;
                scored.push((similarity, record.id.clone(), record));
            }
        }
    }

    if scored.len() < batch_size {
        outcome.exhausted = true;
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.truncate(batch_size);

    for (_, id, record) in scored {
        let vector = ctx.vectors.row_by_id(&id).expect("scored candidates have vectors");
        atlas.store.insert(record)?;
        atlas.embeddings.append_row(id.clone(), vector.as_ref())?;
        outcome.admitted.push(id);
    }
    atlas.expansion_log.push(ExpansionBatch {
        batch: atlas.expansion_log.len(),
        ids: outcome.admitted.clone(),
    });
    Ok(outcome)
}

/// Neighbor lists for every eligible member at one collection state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodSnapshot {
    pub collection_size: usize,
    pub k: usize,
    pub neighbors: BTreeMap<String, Vec<String>>,
}

/// A snapshot plus the members omitted for lacking k previous neighbors.
#[derive(Debug, Clone)]
pub struct SnapshotOutcome {
    pub snapshot: NeighborhoodSnapshot,
    /// Omitted id → number of previous neighbors found.
    pub omitted: BTreeMap<String, usize>,
}

/// Record the ordered k nearest previous neighbors of every member that has
/// at least k of them under the temporal rule; the rest are omitted.
pub fn snapshot(
    atlas: &AtlasState,
    k: usize,
    rule: TemporalRule,
) -> Result<SnapshotOutcome, AtlasError> {
    if k < 1 {
        return Err(AtlasError::Config("k must be >= 1".into()));
    }
    let dates = atlas.store.dates();
    let ids: Vec<String> = atlas.embeddings.ids().to_vec();
    let results: Vec<(String, Result<Vec<crate::metrics::Neighbor>, MetricError>)> = ids
        .par_iter()
        .map(|id| {
            let cutoff = match (rule, dates.get(id)) {
                (TemporalRule::StrictlyEarlier, Some(d)) => *d,
                (TemporalRule::OnOrBefore, Some(d)) => d.succ_opt().unwrap_or(*d),
                (_, None) => {
                    return (
                        id.clone(),
                        Err(MetricError::UnknownId(id.clone())),
                    )
                }
            };
            (
                id.clone(),
                crate::metrics::knn_before_cutoff(&atlas.embeddings, &dates, id, cutoff, k),
            )
        })
        .collect();

    let mut neighbors = BTreeMap::new();
    let mut omitted = BTreeMap::new();
    for (id, result) in results {
        match result {
            Ok(list) => {
                neighbors.insert(id, list.into_iter().map(|n| n.id).collect());
            }
            Err(MetricError::InsufficientNeighbors { found }) => {
                omitted.insert(id, found);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(SnapshotOutcome {
        snapshot: NeighborhoodSnapshot {
            collection_size: atlas.collection_size(),
            k,
            neighbors,
        },
        omitted,
    })
}

/// Ids present in both snapshots whose neighbor sets (order-insensitive) are
/// identical. `min_additions` is the required growth between the snapshots.
pub fn converged_ids(
    before: &NeighborhoodSnapshot,
    after: &NeighborhoodSnapshot,
    min_additions: usize,
) -> Result<BTreeSet<String>, AtlasError> {
    if before.k != after.k {
        return Err(AtlasError::Config(format!(
            "snapshot k mismatch: {} vs {}",
            before.k, after.k
        )));
    }
    if after.collection_size < before.collection_size + min_additions {
        return Err(AtlasError::Config(format!(
            "snapshots are {} additions apart, need at least {min_additions}",
            after.collection_size.saturating_sub(before.collection_size)
        )));
    }
    let mut converged = BTreeSet::new();
    for (id, before_list) in &before.neighbors {
        if let Some(after_list) = after.neighbors.get(id) {
            let before_set: BTreeSet<&String> = before_list.iter().collect();
            let after_set: BTreeSet<&String> = after_list.iter().collect();
            if before_set == after_set {
                converged.insert(id.clone());
            }
        }
    }
    Ok(converged)
}

pub fn write_snapshot(snapshot: &NeighborhoodSnapshot, path: &Path) -> Result<(), AtlasError> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), snapshot)
        .map_err(|e| AtlasError::Config(format!("serialize snapshot: {e}")))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<NeighborhoodSnapshot, AtlasError> {
    let file = std::fs::File::open(path)?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| AtlasError::Config(format!("parse snapshot: {e}")))
}

pub fn write_expansion_log<W: Write>(
    log: &[ExpansionBatch],
    mut w: W,
) -> Result<(), AtlasError> {
    for batch in log {
        serde_json::to_writer(&mut w, batch)
            .map_err(|e| AtlasError::Config(format!("serialize expansion log: {e}")))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_expansion_log<R: BufRead>(r: R) -> Result<Vec<ExpansionBatch>, AtlasError> {
    let mut log = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            log.push(
                serde_json::from_str(&line)
                    .map_err(|e| AtlasError::Config(format!("parse expansion log: {e}")))?,
            );
        }
    }
    Ok(log)
}
