//! `litfield report`: export figure data — effect sizes of the chosen model,
//! model-comparison scores (raw and rank-scaled), 2D projections of the
//! pooled embeddings, and reduced matrices for external visualization tools.

use std::collections::BTreeMap;

use litfield_core::embed::{io::MatrixFormat, reduce_svd};
use litfield_core::evaluate::{higher_is_better, EvaluationReport, METRIC_NAMES};
use litfield_core::regress::ParamSummary;

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::{check_stamp, read_json_with_meta, Stamp};
use crate::CliError;

use super::{current_stamp, embedder_ids, ensure_dir, load_corpus, load_normalized_matrix, write_stamped_csv};

pub fn cmd_report(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    let stamp = current_stamp(config);
    ensure_dir(&paths.report_dir())?;

    write_effect_sizes(config, &paths, &stamp)?;
    write_model_scores(config, &paths, &stamp)?;
    write_projections(config, &paths, &stamp)?;
    Ok(())
}

#[derive(serde::Deserialize)]
struct SummaryArtifact {
    params: BTreeMap<String, ParamSummary>,
}

/// Pull `beta[pred][field]`, `mu[pred]`, `sigma_l[pred]` rows out of the
/// fitted summary of the configured model.
fn write_effect_sizes(
    config: &PipelineConfig,
    paths: &ArtifactPaths,
    stamp: &Stamp,
) -> Result<(), CliError> {
    let model = &config.report.model;
    let (found, summary): (Stamp, SummaryArtifact) =
        read_json_with_meta(&paths.summary(model), "litfield fit")?;
    check_stamp(&found, stamp, &paths.summary(model), "litfield fit");

    let fmt = litfield_core::embed::io::format_f64;
    let mut body =
        String::from("kind,predictor,field,mean,sd,q16,q84,q2_5,q97_5,rhat,ess\n");
    for (name, p) in &summary.params {
        let (kind, predictor, field) = parse_param_name(name);
        body.push_str(&format!(
            "{kind},{predictor},{field},{},{},{},{},{},{},{},{}\n",
            fmt(p.mean),
            fmt(p.sd),
            fmt(p.q16),
            fmt(p.q84),
            fmt(p.q2_5),
            fmt(p.q97_5),
            fmt(p.rhat),
            fmt(p.ess),
        ));
    }
    write_stamped_csv(&paths.effect_sizes(), stamp, &body)
}

/// `beta[rho_bow][Physics]` → ("beta", "rho_bow", "Physics").
fn parse_param_name(name: &str) -> (String, String, String) {
    let mut parts = name.split('[');
    let kind = parts.next().unwrap_or_default().to_string();
    let predictor = parts
        .next()
        .map(|s| s.trim_end_matches(']').to_string())
        .unwrap_or_default();
    let field = parts
        .next()
        .map(|s| s.trim_end_matches(']').to_string())
        .unwrap_or_default();
    (kind, predictor, field)
}

/// Raw and min-max-scaled scores per metric across models, for the
/// model-comparison figure.
fn write_model_scores(
    _config: &PipelineConfig,
    paths: &ArtifactPaths,
    stamp: &Stamp,
) -> Result<(), CliError> {
    let (found, report): (Stamp, EvaluationReport) =
        read_json_with_meta(&paths.report_json(), "litfield evaluate")?;
    check_stamp(&found, stamp, &paths.report_json(), "litfield evaluate");

    let fmt = litfield_core::embed::io::format_f64;
    let mut body = String::from("metric,model,score,scaled,higher_is_better\n");
    for metric in METRIC_NAMES {
        let values: Vec<f64> = report.models.iter().map(|m| m.scores.get(metric)).collect();
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        for (entry, value) in report.models.iter().zip(&values) {
            let scaled = if hi > lo { (value - lo) / (hi - lo) } else { 0.5 };
            // Orient so 1.0 is always "best".
            let scaled = if higher_is_better(metric) { scaled } else { 1.0 - scaled };
            body.push_str(&format!(
                "{metric},{},{},{},{}\n",
                entry.model,
                fmt(*value),
                fmt(scaled),
                higher_is_better(metric),
            ));
        }
    }
    write_stamped_csv(&paths.model_scores(), stamp, &body)
}

/// SVD projections of the pooled embeddings (for plotting) and reduced
/// matrices (for external dimension-reduction tools).
fn write_projections(
    config: &PipelineConfig,
    paths: &ArtifactPaths,
    stamp: &Stamp,
) -> Result<(), CliError> {
    let mut labels: BTreeMap<String, String> = BTreeMap::new();
    for field in &config.fields {
        let corpus = load_corpus(config, field)?;
        for record in corpus.iter() {
            labels.entry(record.id.clone()).or_insert_with(|| record.field_label.clone());
        }
    }

    for embedder in embedder_ids(config) {
        let set = load_normalized_matrix(config, &paths.pooled_matrix(&embedder), &embedder)?;
        let cap = set.len().min(set.dim());

        let projection_dim = config.report.projection_dim.min(cap).max(1);
        if projection_dim < config.report.projection_dim {
            log::warn!(
                "report {embedder}: projection_dim clamped to {projection_dim} (matrix is {}x{})",
                set.len(),
                set.dim()
            );
        }
        let projected = reduce_svd(&set, projection_dim)?;
        let fmt = litfield_core::embed::io::format_f64;
        let mut body = String::from("id,field");
        for c in 0..projection_dim {
            body.push_str(&format!(",x{}", c + 1));
        }
        body.push('\n');
        for (i, id) in projected.ids().iter().enumerate() {
            body.push_str(id);
            body.push(',');
            body.push_str(labels.get(id).map(|s| s.as_str()).unwrap_or(""));
            for v in projected.row(i).iter() {
                body.push(',');
                body.push_str(&fmt(*v));
            }
            body.push('\n');
        }
        write_stamped_csv(&paths.projection(&embedder), stamp, &body)?;

        let reduced_dim = config.report.reduced_dim.min(cap).max(1);
        if reduced_dim < config.report.reduced_dim {
            log::warn!(
                "report {embedder}: reduced_dim clamped to {reduced_dim} (matrix is {}x{})",
                set.len(),
                set.dim()
            );
        }
        let reduced = reduce_svd(&set, reduced_dim)?;
        litfield_core::embed::io::save_matrix(
            &reduced,
            MatrixFormat::Text,
            &paths.reduced_matrix(&embedder),
        )?;
    }
    Ok(())
}
