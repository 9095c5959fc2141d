//! `litfield fit`: split, standardize on the training partition, and fit the
//! configured model variants by MCMC.

use std::collections::BTreeSet;
use std::io::BufRead;

use litfield_core::metrics::{read_metric_table, table_embedders, MetricRecord};
use litfield_core::regress::{
    benchmark_specs, fit, standardize_by_field, summary_map, write_posterior_csv, McmcSettings,
    ModelSpec, RegressionDataset, ResolvedModel,
};

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::{check_csv_stamp, write_json_with_meta, Stamp};
use crate::CliError;

use super::{current_stamp, ensure_dir, write_stamped_csv};

#[derive(serde::Serialize, serde::Deserialize)]
pub(crate) struct SplitArtifact {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub test_fraction: f64,
    pub stratify: bool,
}

#[derive(serde::Serialize, serde::Deserialize)]
pub(crate) struct ManifestArtifact {
    pub spec: ModelSpec,
    pub signature: String,
    pub mcmc: McmcSettings,
}

pub(crate) fn load_metric_table(
    config: &PipelineConfig,
    stamp: &Stamp,
) -> Result<Vec<MetricRecord>, CliError> {
    let paths = ArtifactPaths::new(config);
    check_csv_stamp(&paths.metric_table(), stamp, "litfield metrics")?;
    let file = std::fs::File::open(paths.metric_table())?;
    Ok(read_metric_table(std::io::BufReader::new(file))?)
}

/// The configured split over metric-table rows: stratified by field unless
/// disabled.
pub(crate) fn split_rows(
    config: &PipelineConfig,
    table: &[MetricRecord],
) -> Result<(Vec<String>, Vec<String>), CliError> {
    let rows: Vec<(String, String)> = table
        .iter()
        .map(|r| {
            let field = if config.split.stratify { r.field_label.clone() } else { "all".into() };
            (r.id.clone(), field)
        })
        .collect();
    Ok(litfield_core::evaluate::split(
        &rows,
        config.split.test_fraction,
        config.seed,
    )?)
}

/// Model specs to fit: named benchmarks plus any explicit manifests.
pub(crate) fn resolve_specs(
    config: &PipelineConfig,
    embedders: &[String],
) -> Result<Vec<ModelSpec>, CliError> {
    let benchmarks = benchmark_specs(embedders);
    let mut specs = Vec::new();
    for name in &config.fit.models {
        let mut spec = benchmarks
            .iter()
            .find(|s| &s.name == name)
            .cloned()
            .ok_or_else(|| {
                let known: Vec<&str> = benchmarks.iter().map(|s| s.name.as_str()).collect();
                CliError::Config(format!("unknown model {name:?}; benchmarks: {known:?}"))
            })?;
        spec.priors = config.priors.to_core();
        specs.push(spec);
    }
    for path in &config.fit.manifests {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))?;
        let spec: ModelSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))?;
        specs.push(spec);
    }
    Ok(specs)
}

pub(crate) fn model_names(config: &PipelineConfig) -> Vec<String> {
    let mut names = config.fit.models.clone();
    for path in &config.fit.manifests {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(spec) = serde_json::from_str::<ModelSpec>(&text) {
                names.push(spec.name);
            }
        }
    }
    names
}

pub(crate) fn build_dataset(
    table: &[MetricRecord],
    train: &[String],
) -> Result<RegressionDataset, CliError> {
    let train_set: BTreeSet<String> = train.iter().cloned().collect();
    Ok(standardize_by_field(table, &train_set)?)
}

pub fn cmd_fit(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    let stamp = current_stamp(config);
    let table = load_metric_table(config, &stamp)?;
    if table.is_empty() {
        return Err(CliError::Other("metric table is empty; nothing to fit".into()));
    }
    let embedders = table_embedders(&table);

    let (train, test) = split_rows(config, &table)?;
    ensure_dir(paths.split().parent().expect("split has a parent"))?;
    write_json_with_meta(
        &paths.split(),
        &stamp,
        &SplitArtifact {
            train: train.clone(),
            test,
            test_fraction: config.split.test_fraction,
            stratify: config.split.stratify,
        },
    )?;

    let dataset = build_dataset(&table, &train)?;
    let settings = McmcSettings {
        chains: config.mcmc.chains,
        warmup: config.mcmc.warmup,
        iterations: config.mcmc.iterations,
        seed: config.seed,
    };

    for spec in resolve_specs(config, &embedders)? {
        let model = ResolvedModel::new(&spec, &dataset)?;
        let posterior = fit(&model, &dataset, &settings)?;
        ensure_dir(&paths.fit_dir(&spec.name))?;

        let mut body = Vec::new();
        write_posterior_csv(&posterior, &mut body)?;
        write_stamped_csv(
            &paths.posterior(&spec.name),
            &stamp,
            &String::from_utf8(body).expect("csv is utf-8"),
        )?;

        let summary = summary_map(&posterior)?;
        write_json_with_meta(
            &paths.summary(&spec.name),
            &stamp,
            &serde_json::json!({
                "model": spec.name,
                "signature": spec.signature(),
                "priors": spec.priors,
                "params": summary,
                "warnings": litfield_core::regress::summarize(&posterior)?.warnings,
            }),
        )?;
        write_json_with_meta(
            &paths.manifest(&spec.name),
            &stamp,
            &ManifestArtifact {
                signature: spec.signature(),
                mcmc: settings.clone(),
                spec,
            },
        )?;
    }
    Ok(())
}

/// Read a posterior CSV back, skipping the stamp line.
pub(crate) fn load_posterior(
    config: &PipelineConfig,
    stamp: &Stamp,
    model: &str,
) -> Result<litfield_core::regress::PosteriorSamples, CliError> {
    let paths = ArtifactPaths::new(config);
    let path = paths.posterior(model);
    check_csv_stamp(&path, stamp, "litfield fit")?;
    let file = std::fs::File::open(&path)?;
    let reader = std::io::BufReader::new(file);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let body = lines.join("\n");
    Ok(litfield_core::regress::read_posterior_csv(
        std::io::Cursor::new(body),
        model,
        config.mcmc.warmup,
        config.seed,
    )?)
}
