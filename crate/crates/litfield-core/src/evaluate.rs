//! Holdout evaluation: stratified splitting, the six scoring metrics, and
//! model ranking.
//!
//! Reference statistics (training mean for R², training median for the D²
//! scores) always come from the training partition, so a score never peeks at
//! the rows it judges.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("field {field} has {rows} rows; stratified splitting needs at least 2")]
    StratificationError { field: String, rows: usize },
    #[error("dimension mismatch: {expected} responses vs {got} predictions")]
    DimensionError { expected: usize, got: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

/// Deterministic stratified split into (train, test) id lists.
///
/// Each field contributes a share of test rows within one row of
/// `test_fraction`, with the global test count hit exactly by
/// largest-remainder allocation. Ids are returned sorted.
pub fn split(
    rows: &[(String, String)],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), EvalError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::Config(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_field: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, field) in rows {
        by_field.entry(field).or_default().push(id);
    }
    for (field, ids) in &by_field {
        if ids.len() < 2 {
            return Err(EvalError::StratificationError {
                field: field.to_string(),
                rows: ids.len(),
            });
        }
    }

    let total_test = ((rows.len() as f64) * test_fraction).round() as usize;
    let total_test = total_test.clamp(1, rows.len() - 1);

    // Largest-remainder apportionment of the test quota across fields.
    let mut quotas: Vec<(String, usize, f64)> = Vec::new();
    let mut allocated = 0usize;
    for (field, ids) in &by_field {
        let ideal = ids.len() as f64 * test_fraction;
        let floor = ideal.floor() as usize;
        // Leave at least one training row per field.
        let floor = floor.min(ids.len() - 1);
        allocated += floor;
        quotas.push((field.to_string(), floor, ideal - floor as f64));
    }
    let mut remainder = total_test.saturating_sub(allocated);
    quotas.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    for quota in quotas.iter_mut() {
        if remainder == 0 {
            break;
        }
        let field_size = by_field[quota.0.as_str()].len();
        if quota.1 + 1 < field_size {
            quota.1 += 1;
            remainder -= 1;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut rng = seeding::stage_rng(seed, "split");
    quotas.sort_by(|a, b| a.0.cmp(&b.0));
    for (field, take, _) in &quotas {
        let mut ids: Vec<&str> = by_field[field.as_str()].iter().map(|s| &**s).collect();
        ids.sort();
        ids.shuffle(&mut rng);
        for (i, id) in ids.iter().enumerate() {
            if i < *take {
                test.push(id.to_string());
            } else {
                train.push(id.to_string());
            }
        }
    }
    train.sort();
    test.sort();
    Ok((train, test))
}

/// Training-partition reference statistics used by R² and the D² scores.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainReferences {
    pub mean: f64,
    pub median: f64,
}

impl TrainReferences {
    pub fn from_training(y_train: &[f64]) -> Result<Self, EvalError> {
        if y_train.is_empty() {
            return Err(EvalError::Config("empty training responses".into()));
        }
        let (mean, _) = crate::regress::mean_sd(y_train);
        let mut sorted = y_train.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Ok(TrainReferences { mean, median })
    }
}

/// The six evaluation metrics for one model on one test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scores {
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub r2: f64,
    pub d2_pinball: f64,
    pub d2_abs: f64,
    /// Rows excluded from MAPE because |y| was zero.
    pub mape_excluded: usize,
}

pub const METRIC_NAMES: [&str; 6] = ["rmse", "mae", "mape", "r2", "d2_pinball", "d2_abs"];

/// Whether larger values of a metric are better.
pub fn higher_is_better(metric: &str) -> bool {
    matches!(metric, "r2" | "d2_pinball" | "d2_abs")
}

impl Scores {
    pub fn get(&self, metric: &str) -> f64 {
        match metric {
            "rmse" => self.rmse,
            "mae" => self.mae,
            "mape" => self.mape,
            "r2" => self.r2,
            "d2_pinball" => self.d2_pinball,
            "d2_abs" => self.d2_abs,
            _ => f64::NAN,
        }
    }
}

fn pinball_loss(y: f64, pred: f64, quantile: f64) -> f64 {
    let diff = y - pred;
    if diff >= 0.0 {
        quantile * diff
    } else {
        (1.0 - quantile) * (-diff)
    }
}

/// Score predictions against responses with the six metrics.
pub fn score(y: &[f64], yhat: &[f64], refs: &TrainReferences) -> Result<Scores, EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::DimensionError { expected: y.len(), got: yhat.len() });
    }
    if y.len() < 2 {
        return Err(EvalError::Config("need at least 2 rows to score".into()));
    }
    let n = y.len() as f64;

    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut ape_sum = 0.0;
    let mut ape_n = 0usize;
    let mut sq_ref = 0.0;
    let mut pinball_sum = 0.0;
    let mut pinball_ref = 0.0;
    let mut abs_ref = 0.0;
    for (yi, pi) in y.iter().zip(yhat) {
        let err = yi - pi;
        sq_sum += err * err;
        abs_sum += err.abs();
        if *yi != 0.0 {
            ape_sum += (err / yi).abs();
            ape_n += 1;
        }
        sq_ref += (yi - refs.mean) * (yi - refs.mean);
        pinball_sum += pinball_loss(*yi, *pi, 0.5);
        pinball_ref += pinball_loss(*yi, refs.median, 0.5);
        abs_ref += (yi - refs.median).abs();
    }
    let rmse = (sq_sum / n).sqrt();
    let mae = abs_sum / n;
    let mape = if ape_n > 0 { ape_sum / ape_n as f64 } else { f64::NAN };
    let r2 = 1.0 - sq_sum / sq_ref;
    let d2_pinball = 1.0 - pinball_sum / pinball_ref;
    // The same quantity computed through absolute error instead of pinball
    // loss at q = 0.5; kept as an independent route.
    let d2_abs = 1.0 - abs_sum / abs_ref;
    Ok(Scores {
        rmse,
        mae,
        mape,
        r2,
        d2_pinball,
        d2_abs,
        mape_excluded: y.len() - ape_n,
    })
}

/// One model's scores under a name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    pub scores: Scores,
}

/// Per-metric rankings plus the consensus check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub models: Vec<ModelScores>,
    /// Metric name → model names, best first.
    pub rankings: BTreeMap<String, Vec<String>>,
    /// True when every metric produces the same ordering.
    pub consensus: bool,
    /// Metrics where at least two models scored identically.
    pub ties: Vec<String>,
    /// 1 − RMSE per model, for comparison tables.
    pub one_minus_rmse: BTreeMap<String, f64>,
    pub split_seed: u64,
    pub test_fraction: f64,
}

/// Rank models per metric (error metrics ascending, skill metrics
/// descending) and check whether all six agree.
pub fn rank_models(
    models: Vec<ModelScores>,
    split_seed: u64,
    test_fraction: f64,
) -> Result<EvaluationReport, EvalError> {
    if models.len() < 2 {
        return Err(EvalError::Config("need at least 2 models to rank".into()));
    }
    let mut rankings = BTreeMap::new();
    let mut ties = Vec::new();
    for metric in METRIC_NAMES {
        let mut order: Vec<(f64, String)> = models
            .iter()
            .map(|m| (m.scores.get(metric), m.model.clone()))
            .collect();
        if higher_is_better(metric) {
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        } else {
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        }
        let mut has_tie = false;
        for pair in order.windows(2) {
            if pair[0].0 == pair[1].0 {
                has_tie = true;
            }
        }
        if has_tie {
            ties.push(metric.to_string());
        }
        rankings.insert(metric.to_string(), order.into_iter().map(|(_, m)| m).collect());
    }
    let first = &rankings[METRIC_NAMES[0]];
    let consensus = METRIC_NAMES.iter().all(|m| &rankings[*m] == first);
    let one_minus_rmse = models
        .iter()
        .map(|m| (m.model.clone(), 1.0 - m.scores.rmse))
        .collect();
    Ok(EvaluationReport {
        models,
        rankings,
        consensus,
        ties,
        one_minus_rmse,
        split_seed,
        test_fraction,
    })
}
