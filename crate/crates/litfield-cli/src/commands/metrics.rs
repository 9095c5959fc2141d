//! `litfield metrics`: density, asymmetry, citation rate, and age for every
//! converged publication inside the analysis window, complete-case across
//! all embedders, plus the exclusion report and the log-offset sensitivity
//! summary.

use std::collections::BTreeSet;

use litfield_core::corpus::filter_window;
use litfield_core::metrics::{
    compute_metric_records, write_exclusions, write_metric_table, EmbedderPool, MetricConfig,
    MetricRecord,
};

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::{check_stamp, read_json_with_meta, write_json_with_meta, Stamp};
use crate::CliError;

use super::expand::ConvergedArtifact;
use super::{current_stamp, embedder_ids, ensure_dir, load_corpus, load_normalized_matrix};

pub fn cmd_metrics(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    let stamp = current_stamp(config);
    let window_start = config.parse_date(&config.corpus.window_start)?;
    let window_end = config.parse_date(&config.corpus.window_end)?;

    let mut cfg = MetricConfig::new(config.parse_date(&config.metrics.asof_date)?);
    cfg.k = config.metric_k();
    cfg.angle_floor = config.metrics.angle_floor;
    cfg.cpy_offset = config.metrics.cpy_offset;
    cfg.age_floor = config.metrics.age_floor_years;
    cfg.validate()?;

    let embedders = embedder_ids(config);
    let mut all_rows: Vec<MetricRecord> = Vec::new();
    let mut all_exclusions: Vec<(String, litfield_core::metrics::Exclusion)> = Vec::new();

    for field in &config.fields {
        let corpus = load_corpus(config, field)?;
        let (found, converged): (Stamp, ConvergedArtifact) =
            read_json_with_meta(&paths.converged(field), "litfield expand")?;
        check_stamp(&found, &stamp, &paths.converged(field), "litfield expand");

        let sets: Vec<(String, litfield_core::embed::EmbeddingSet)> = embedders
            .iter()
            .map(|e| {
                load_normalized_matrix(config, &paths.matrix(field, e), e).map(|s| (e.clone(), s))
            })
            .collect::<Result<_, _>>()?;
        let pools: Vec<EmbedderPool> = sets
            .iter()
            .map(|(e, s)| EmbedderPool { embedder_id: e.clone(), set: s })
            .collect();

        let window_ids: BTreeSet<String> =
            filter_window(&corpus, window_start, window_end)?.into_iter().collect();
        let mut candidates = converged.converged.clone();
        candidates.sort();

        let (rows, exclusions) =
            compute_metric_records(corpus.records(), &pools, &candidates, &window_ids, &cfg)?;
        log::info!("metrics {field}: {} rows, {} exclusions", rows.len(), exclusions.len());
        all_rows.extend(rows);
        all_exclusions.extend(exclusions);
    }

    ensure_dir(&paths.metrics_dir())?;
    let mut table_body = Vec::new();
    write_metric_table(&all_rows, &mut table_body)?;
    super::write_stamped_csv(
        &paths.metric_table(),
        &stamp,
        &String::from_utf8(table_body).expect("csv is utf-8"),
    )?;

    let mut exclusion_body = Vec::new();
    write_exclusions(&all_exclusions, &mut exclusion_body)?;
    super::write_stamped_csv(
        &paths.exclusions(),
        &stamp,
        &String::from_utf8(exclusion_body).expect("csv is utf-8"),
    )?;

    write_sensitivity(config, &paths, &stamp, &all_rows, &cfg)?;
    Ok(())
}

/// Report how the log-cpy column responds to halving and doubling the
/// offset: summary moments plus the rank correlation with the base column.
fn write_sensitivity(
    config: &PipelineConfig,
    paths: &ArtifactPaths,
    stamp: &Stamp,
    rows: &[MetricRecord],
    cfg: &MetricConfig,
) -> Result<(), CliError> {
    let _ = config;
    #[derive(serde::Serialize)]
    struct OffsetSummary {
        offset: f64,
        mean: f64,
        sd: f64,
        spearman_vs_base: f64,
    }
    #[derive(serde::Serialize)]
    struct Sensitivity {
        base_offset: f64,
        offsets: Vec<OffsetSummary>,
    }

    // log_cpy stored in rows used the base offset; recover cpy and re-apply.
    let cpy: Vec<f64> = rows.iter().map(|r| r.log_cpy.exp() - cfg.cpy_offset).collect();
    let base: Vec<f64> = rows.iter().map(|r| r.log_cpy).collect();
    let mut offsets = Vec::new();
    for factor in [0.5, 1.0, 2.0] {
        let offset = cfg.cpy_offset * factor;
        let column: Vec<f64> = cpy.iter().map(|c| (c.max(0.0) + offset).ln()).collect();
        let (mean, sd) = if column.len() >= 2 {
            litfield_core::regress::mean_sd(&column)
        } else {
            (f64::NAN, f64::NAN)
        };
        offsets.push(OffsetSummary {
            offset,
            mean,
            sd,
            spearman_vs_base: spearman(&column, &base),
        });
    }
    write_json_with_meta(
        &paths.sensitivity(),
        stamp,
        &Sensitivity { base_offset: cfg.cpy_offset, offsets },
    )
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        // Average ranks over ties.
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.len() < 2 {
        return f64::NAN;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let (ma, sa) = litfield_core::regress::mean_sd(&ra);
    let (mb, sb) = litfield_core::regress::mean_sd(&rb);
    if sa == 0.0 || sb == 0.0 {
        return f64::NAN;
    }
    let mut cov = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
    }
    cov / ((a.len() - 1) as f64 * sa * sb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_of_monotone_sequences_is_one() {
        let a = [1.0, 2.0, 5.0, 9.0];
        let b = [0.1, 0.4, 0.5, 3.0];
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
        let reversed = [3.0, 0.5, 0.4, 0.1];
        assert!((spearman(&a, &reversed) + 1.0).abs() < 1e-12);
    }
}
