//! `litfield embed`: build per-field bag-of-words matrices, import external
//! matrices, normalize everything, and emit the pooled cross-field variants
//! used by classification and the report projections.

use litfield_core::embed::{
    self, build_vocabulary, embed_bow, io::MatrixFormat, EmbeddingSet, Vocabulary,
};

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::write_json_with_meta;
use crate::CliError;

use super::{current_stamp, ensure_dir, load_corpus, write_stamped_csv};

pub fn cmd_embed(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    let stamp = current_stamp(config);
    let format = config.matrix_format();

    let mut field_vocabs: Vec<Vocabulary> = Vec::new();
    // (id, abstract); a record valid under several fields keeps its first.
    let mut pooled_rows: Vec<(String, String)> = Vec::new();
    let mut pooled_seen: std::collections::BTreeSet<String> = Default::default();
    let mut pooled_import_sources: Vec<EmbeddingSet> = Vec::new();

    for import in &config.embed.imports {
        let set = embed::io::load_matrix(&import.path, &import.embedder_id, MatrixFormat::Text)
            .map_err(|e| {
                CliError::Config(format!("import {}: {e}", import.path.display()))
            })?;
        pooled_import_sources.push(set);
    }

    for field in &config.fields {
        let corpus = load_corpus(config, field)?;
        ensure_dir(&paths.embeddings_dir(field))?;
        let ids: Vec<String> = corpus.ids().map(|s| s.to_string()).collect();
        let abstracts: Vec<String> =
            corpus.iter().map(|r| r.abstract_text.clone()).collect();
        for (id, text) in ids.iter().zip(&abstracts) {
            if pooled_seen.insert(id.clone()) {
                pooled_rows.push((id.clone(), text.clone()));
            }
        }

        let mut dropped: Vec<(String, String, String)> = Vec::new();

        if config.embed.build_bow {
            let vocab = build_vocabulary(field, &abstracts, config.embed.min_count)?;
            if vocab.is_empty() {
                return Err(CliError::Config(format!(
                    "field {field}: vocabulary is empty at min_count {}",
                    config.embed.min_count
                )));
            }
            let bow = embed_bow("bow", ids.clone(), &abstracts, &vocab)?;
            let bow = drop_zero_rows(bow, "bow", &mut dropped)?;
            let bow = embed::normalize(bow)?;
            embed::io::save_matrix(&bow, format, &paths.matrix(field, "bow"))?;
            let file = std::fs::File::create(paths.vocabulary(field))?;
            embed::io::write_vocabulary(&vocab, std::io::BufWriter::new(file))?;
            field_vocabs.push(vocab);
        }

        for (import, source) in config.embed.imports.iter().zip(&pooled_import_sources) {
            let present: Vec<String> = ids
                .iter()
                .filter(|id| source.index_of(id).is_some())
                .cloned()
                .collect();
            for id in &ids {
                if source.index_of(id).is_none() {
                    dropped.push((id.clone(), import.embedder_id.clone(), "missing_embedding".into()));
                }
            }
            let subset = source.select(&present)?;
            let subset = drop_zero_rows(subset, &import.embedder_id, &mut dropped)?;
            let subset = embed::normalize(subset)?;
            embed::io::save_matrix(&subset, format, &paths.matrix(field, &import.embedder_id))?;
        }

        let mut body = String::from("id,embedder,reason\n");
        for (id, embedder, reason) in &dropped {
            body.push_str(&format!("{id},{embedder},{reason}\n"));
        }
        write_stamped_csv(&paths.dropped_rows(field), &stamp, &body)?;
    }

    // Pooled variants across every field.
    ensure_dir(&paths.pooled_dir())?;
    let mut sink = Vec::new();
    if config.embed.build_bow {
        let pooled_vocab = Vocabulary::union("pooled", field_vocabs.iter());
        let ids: Vec<String> = pooled_rows.iter().map(|(id, _)| id.clone()).collect();
        let texts: Vec<String> = pooled_rows.iter().map(|(_, t)| t.clone()).collect();
        let bow = embed_bow("bow", ids, &texts, &pooled_vocab)?;
        let bow = drop_zero_rows(bow, "bow", &mut sink)?;
        let bow = embed::normalize(bow)?;
        embed::io::save_matrix(&bow, format, &paths.pooled_matrix("bow"))?;
        let file = std::fs::File::create(paths.pooled_vocabulary())?;
        embed::io::write_vocabulary(&pooled_vocab, std::io::BufWriter::new(file))?;
    }
    for (import, source) in config.embed.imports.iter().zip(&pooled_import_sources) {
        let present: Vec<String> = pooled_rows
            .iter()
            .map(|(id, _)| id.clone())
            .filter(|id| source.index_of(id).is_some())
            .collect();
        let subset = source.select(&present)?;
        let subset = drop_zero_rows(subset, &import.embedder_id, &mut sink)?;
        let subset = embed::normalize(subset)?;
        embed::io::save_matrix(&subset, format, &paths.pooled_matrix(&import.embedder_id))?;
    }

    #[derive(serde::Serialize)]
    struct EmbedMeta {
        embedders: Vec<String>,
        fields: Vec<String>,
        min_count: usize,
    }
    write_json_with_meta(
        &paths.embed_meta(),
        &stamp,
        &EmbedMeta {
            embedders: super::embedder_ids(config),
            fields: config.fields.clone(),
            min_count: config.embed.min_count,
        },
    )?;
    Ok(())
}

/// Remove rows that cannot be normalized, recording them as dropped.
fn drop_zero_rows(
    set: EmbeddingSet,
    embedder: &str,
    dropped: &mut Vec<(String, String, String)>,
) -> Result<EmbeddingSet, CliError> {
    let mut keep = Vec::with_capacity(set.len());
    for (i, id) in set.ids().iter().enumerate() {
        if set.row_norm(i) < embed::ZERO_NORM_FLOOR {
            dropped.push((id.clone(), embedder.to_string(), "zero_vector".into()));
        } else {
            keep.push(id.clone());
        }
    }
    if keep.len() == set.len() {
        return Ok(set);
    }
    Ok(set.select(&keep)?)
}
