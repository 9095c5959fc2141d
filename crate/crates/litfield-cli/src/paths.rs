//! Artifact locations under the output directory. Centralized so producers
//! and consumers can never drift apart.

use std::path::PathBuf;

use crate::config::PipelineConfig;

pub struct ArtifactPaths<'a> {
    config: &'a PipelineConfig,
}

impl<'a> ArtifactPaths<'a> {
    pub fn new(config: &'a PipelineConfig) -> Self {
        ArtifactPaths { config }
    }

    fn out(&self) -> &std::path::Path {
        &self.config.paths.out_dir
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out().join("corpus")
    }

    pub fn corpus(&self, field: &str) -> PathBuf {
        self.corpus_dir().join(format!("{}.jsonl", slug(field)))
    }

    pub fn provenance(&self, field: &str) -> PathBuf {
        self.corpus_dir().join(format!("{}.provenance.json", slug(field)))
    }

    pub fn embeddings_dir(&self, field: &str) -> PathBuf {
        self.out().join("embeddings").join(slug(field))
    }

    pub fn matrix(&self, field: &str, embedder: &str) -> PathBuf {
        self.embeddings_dir(field).join(format!("{embedder}.emb"))
    }

    pub fn pooled_dir(&self) -> PathBuf {
        self.out().join("embeddings").join("pooled")
    }

    pub fn pooled_matrix(&self, embedder: &str) -> PathBuf {
        self.pooled_dir().join(format!("{embedder}.emb"))
    }

    pub fn vocabulary(&self, field: &str) -> PathBuf {
        self.embeddings_dir(field).join("bow_vocab.txt")
    }

    pub fn pooled_vocabulary(&self) -> PathBuf {
        self.pooled_dir().join("bow_vocab.txt")
    }

    pub fn embed_meta(&self) -> PathBuf {
        self.out().join("embeddings").join("meta.json")
    }

    pub fn dropped_rows(&self, field: &str) -> PathBuf {
        self.embeddings_dir(field).join("dropped.csv")
    }

    pub fn atlas_dir(&self, field: &str) -> PathBuf {
        self.out().join("atlas").join(slug(field))
    }

    pub fn expansion_log(&self, field: &str) -> PathBuf {
        self.atlas_dir(field).join("expansion_log.jsonl")
    }

    pub fn expansion_meta(&self, field: &str) -> PathBuf {
        self.atlas_dir(field).join("expansion_log.provenance.json")
    }

    pub fn snapshot(&self, field: &str, size: usize) -> PathBuf {
        self.atlas_dir(field).join(format!("snapshot_{size:06}.json"))
    }

    pub fn converged(&self, field: &str) -> PathBuf {
        self.atlas_dir(field).join("converged.json")
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.out().join("metrics")
    }

    pub fn metric_table(&self) -> PathBuf {
        self.metrics_dir().join("metric_table.csv")
    }

    pub fn exclusions(&self) -> PathBuf {
        self.metrics_dir().join("exclusions.csv")
    }

    pub fn sensitivity(&self) -> PathBuf {
        self.metrics_dir().join("cpy_offset_sensitivity.json")
    }

    pub fn split(&self) -> PathBuf {
        self.out().join("split").join("split.json")
    }

    pub fn fit_dir(&self, model: &str) -> PathBuf {
        self.out().join("fit").join(slug(model))
    }

    pub fn posterior(&self, model: &str) -> PathBuf {
        self.fit_dir(model).join("posterior.csv")
    }

    pub fn summary(&self, model: &str) -> PathBuf {
        self.fit_dir(model).join("summary.json")
    }

    pub fn manifest(&self, model: &str) -> PathBuf {
        self.fit_dir(model).join("manifest.json")
    }

    pub fn evaluate_dir(&self) -> PathBuf {
        self.out().join("evaluate")
    }

    pub fn report_json(&self) -> PathBuf {
        self.evaluate_dir().join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.evaluate_dir().join("report.csv")
    }

    pub fn table1(&self) -> PathBuf {
        self.evaluate_dir().join("table1.csv")
    }

    pub fn classify_dir(&self) -> PathBuf {
        self.out().join("classify")
    }

    pub fn accuracies_json(&self) -> PathBuf {
        self.classify_dir().join("accuracies.json")
    }

    pub fn accuracies_csv(&self) -> PathBuf {
        self.classify_dir().join("accuracies.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out().join("report")
    }

    pub fn effect_sizes(&self) -> PathBuf {
        self.report_dir().join("fig_effect_sizes.csv")
    }

    pub fn model_scores(&self) -> PathBuf {
        self.report_dir().join("fig_model_scores.csv")
    }

    pub fn projection(&self, embedder: &str) -> PathBuf {
        self.report_dir().join(format!("projection_{embedder}.csv"))
    }

    pub fn reduced_matrix(&self, embedder: &str) -> PathBuf {
        self.report_dir().join(format!("reduced_{embedder}.emb"))
    }
}

/// Lowercased, filesystem-safe name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}
