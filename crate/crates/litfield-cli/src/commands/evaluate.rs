//! `litfield evaluate`: score every fitted model on the held-out rows with
//! the six metrics and rank them; `--table1` additionally emits the
//! benchmark comparison table (rows = 1−RMSE and the other metrics, columns
//! = models).

use litfield_core::evaluate::{
    rank_models, score, EvaluationReport, ModelScores, TrainReferences, METRIC_NAMES,
};
use litfield_core::regress::{PosteriorSamples, RegressionDataset, ResolvedModel};

use crate::config::PipelineConfig;
use crate::paths::ArtifactPaths;
use crate::stamp::{check_stamp, read_json_with_meta, write_json_with_meta, Stamp};
use crate::CliError;

use super::fit::{
    build_dataset, load_metric_table, load_posterior, model_names, ManifestArtifact,
    SplitArtifact,
};
use super::{current_stamp, ensure_dir, write_stamped_csv};

/// Point predictions for the test rows under the configured estimator.
pub(crate) fn predict_test_rows(
    model: &ResolvedModel,
    dataset: &RegressionDataset,
    posterior: &PosteriorSamples,
    point_estimate: &str,
) -> Vec<f64> {
    match point_estimate {
        // The linear predictor is linear in the parameters, so the posterior
        // mean of mu equals mu at the posterior-mean parameters.
        "median" => {
            let mut out = Vec::with_capacity(dataset.test_idx.len());
            for &row in &dataset.test_idx {
                let x = model.row_values(dataset, row);
                let field = dataset.field_index[row];
                let mut draws = Vec::with_capacity(posterior.chains * posterior.iterations);
                for chain in 0..posterior.chains {
                    for iter in 0..posterior.iterations {
                        draws.push(model.predict_mu_idx(posterior.draw(chain, iter), &x, field));
                    }
                }
                draws.sort_by(|a, b| a.total_cmp(b));
                let n = draws.len();
                let median = if n % 2 == 1 {
                    draws[n / 2]
                } else {
                    0.5 * (draws[n / 2 - 1] + draws[n / 2])
                };
                out.push(median);
            }
            out
        }
        _ => {
            let mean_params = posterior.mean_params();
            dataset
                .test_idx
                .iter()
                .map(|&row| {
                    let x = model.row_values(dataset, row);
                    model.predict_mu_idx(&mean_params, &x, dataset.field_index[row])
                })
                .collect()
        }
    }
}

pub fn cmd_evaluate(config: &PipelineConfig, table1: bool) -> Result<(), CliError> {
    let paths = ArtifactPaths::new(config);
    let stamp = current_stamp(config);
    let table = load_metric_table(config, &stamp)?;

    let (split_stamp, split): (Stamp, SplitArtifact) =
        read_json_with_meta(&paths.split(), "litfield fit")?;
    check_stamp(&split_stamp, &stamp, &paths.split(), "litfield fit");

    let dataset = build_dataset(&table, &split.train)?;
    let y_train: Vec<f64> = dataset.train_idx.iter().map(|&i| dataset.y[i]).collect();
    let y_test: Vec<f64> = dataset.test_idx.iter().map(|&i| dataset.y[i]).collect();
    let refs = TrainReferences::from_training(&y_train)?;

    let mut scored = Vec::new();
    for name in model_names(config) {
        let (manifest_stamp, manifest): (Stamp, ManifestArtifact) =
            read_json_with_meta(&paths.manifest(&name), "litfield fit")?;
        check_stamp(&manifest_stamp, &stamp, &paths.manifest(&name), "litfield fit");
        let model = ResolvedModel::new(&manifest.spec, &dataset)?;
        let posterior = load_posterior(config, &stamp, &name)?;
        let yhat =
            predict_test_rows(&model, &dataset, &posterior, &config.fit.point_estimate);
        let scores = score(&y_test, &yhat, &refs)?;
        log::info!("evaluate {name}: rmse {:.4}, r2 {:.4}", scores.rmse, scores.r2);
        scored.push(ModelScores { model: name, scores });
    }

    let report = rank_models(scored, config.seed, config.split.test_fraction)?;
    ensure_dir(&paths.evaluate_dir())?;
    write_json_with_meta(&paths.report_json(), &stamp, &report)?;
    write_stamped_csv(&paths.report_csv(), &stamp, &report_csv_body(&report))?;
    if table1 {
        write_stamped_csv(&paths.table1(), &stamp, &table1_body(&report))?;
    }
    Ok(())
}

fn report_csv_body(report: &EvaluationReport) -> String {
    let fmt = litfield_core::embed::io::format_f64;
    let mut body = String::from("model,rmse,mae,mape,r2,d2_pinball,d2_abs,one_minus_rmse\n");
    for entry in &report.models {
        let s = &entry.scores;
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            entry.model,
            fmt(s.rmse),
            fmt(s.mae),
            fmt(s.mape),
            fmt(s.r2),
            fmt(s.d2_pinball),
            fmt(s.d2_abs),
            fmt(1.0 - s.rmse),
        ));
    }
    body
}

/// Benchmark layout: metric rows (1−RMSE first) by model columns.
fn table1_body(report: &EvaluationReport) -> String {
    let fmt = |v: f64| format!("{v:.3}");
    let mut body = String::from("metric");
    for entry in &report.models {
        body.push(',');
        body.push_str(&entry.model);
    }
    body.push('\n');
    body.push_str("one_minus_rmse");
    for entry in &report.models {
        body.push(',');
        body.push_str(&fmt(1.0 - entry.scores.rmse));
    }
    body.push('\n');
    for metric in METRIC_NAMES {
        body.push_str(metric);
        for entry in &report.models {
            body.push(',');
            body.push_str(&fmt(entry.scores.get(metric)));
        }
        body.push('\n');
    }
    body
}
