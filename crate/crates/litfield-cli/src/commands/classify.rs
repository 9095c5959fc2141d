//! `litfield classify`: predict the field of a publication from its pooled
//! embeddings with a multinomial logistic regression, at full dimension and
//! after SVD reduction. A near-ceiling accuracy confirms the embeddings
//! carry field-level structure.

use std::collections::BTreeMap;

use litfield_core::classify::{train_eval, ClassifierConfig, ClassifierReport};
use litfield_core::embed::reduce_svd;
use litfield_core::seeding;

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::write_json_with_meta;
use crate::CliError;

use super::{current_stamp, embedder_ids, ensure_dir, load_corpus, load_normalized_matrix, write_stamped_csv};

/// Published reference accuracies for the five standard embedders, carried
/// in the report for side-by-side reading. Informational only; nothing
/// asserts against them.
pub const REFERENCE_ACCURACIES: [(&str, f64, f64); 5] = [
    ("bow", 0.98, 0.85),
    ("word2vec", 1.0, 1.0),
    ("gpt2", 0.94, 0.25),
    ("sbert", 0.98, 0.96),
    ("scibert", 0.95, 0.85),
];

#[derive(serde::Serialize)]
struct EmbedderAccuracy {
    full: f64,
    reduced: f64,
    full_report: ClassifierReport,
    reduced_report: ClassifierReport,
}

pub fn cmd_classify(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    let stamp = current_stamp(config);

    // Field labels for every publication across the corpora.
    let mut labels: BTreeMap<String, String> = BTreeMap::new();
    for field in &config.fields {
        let corpus = load_corpus(config, field)?;
        for record in corpus.iter() {
            labels.entry(record.id.clone()).or_insert_with(|| record.field_label.clone());
        }
    }

    let classifier_config = ClassifierConfig {
        lambda: config.classify.lambda,
        learning_rate: config.classify.learning_rate,
        max_iters: config.classify.max_iters,
        train_fraction: config.classify.train_fraction,
        seed: seeding::stage_seed(config.seed, "classify"),
    };

    let mut results: BTreeMap<String, EmbedderAccuracy> = BTreeMap::new();
    for embedder in embedder_ids(config) {
        let set = load_normalized_matrix(config, &paths.pooled_matrix(&embedder), &embedder)?;
        let full = train_eval(&set, &labels, &classifier_config)?;
        let target = config.classify.svd_dim.min(set.len().min(set.dim()));
        let reduced_set = reduce_svd(&set, target)?;
        let reduced = train_eval(&reduced_set, &labels, &classifier_config)?;
        log::info!(
            "classify {embedder}: full {:.3}, reduced({target}) {:.3}",
            full.accuracy,
            reduced.accuracy
        );
        results.insert(
            embedder,
            EmbedderAccuracy {
                full: full.accuracy,
                reduced: reduced.accuracy,
                full_report: full,
                reduced_report: reduced,
            },
        );
    }

    ensure_dir(&paths.classify_dir())?;
    let reference: BTreeMap<&str, serde_json::Value> = REFERENCE_ACCURACIES
        .iter()
        .map(|(name, full, reduced)| {
            (*name, serde_json::json!({ "full": full, "reduced": reduced }))
        })
        .collect();
    write_json_with_meta(
        &paths.accuracies_json(),
        &stamp,
        &serde_json::json!({
            "svd_dim": config.classify.svd_dim,
            "accuracies": results,
            "reference_accuracies": reference,
            "reference_note": "published reference values for the standard embedders; informational only",
        }),
    )?;

    // CSV layout: rows = full / reduced, columns = embedders.
    let embedders: Vec<&String> = results.keys().collect();
    let mut body = String::from("variant");
    for e in &embedders {
        body.push(',');
        body.push_str(e);
    }
    body.push('\n');
    for (variant, pick) in [
        ("full", true),
        ("reduced", false),
    ] {
        body.push_str(variant);
        for e in &embedders {
            let acc = if pick { results[*e].full } else { results[*e].reduced };
            body.push_str(&format!(",{acc:.4}"));
        }
        body.push('\n');
    }
    write_stamped_csv(&paths.accuracies_csv(), &stamp, &body)?;
    Ok(())
}
