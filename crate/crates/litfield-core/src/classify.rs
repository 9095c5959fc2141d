//! Field classification from embeddings: a multinomial logistic regression
//! trained by full-batch gradient descent on the L2-penalized cross-entropy.
//! Used as a sanity check that embeddings separate fields, not as a model of
//! interest, so it stays deliberately simple and fully deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingSet;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("fewer than 2 distinct labels")]
    DegenerateLabels,
    #[error("labels missing for ids: {0}")]
    MissingLabels(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// L2 penalty weight on the coefficient matrix (not the intercepts).
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            lambda: 1.0,
            learning_rate: 0.5,
            max_iters: 500,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub classes: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub accuracy: f64,
    pub final_loss: f64,
    pub iterations_run: usize,
}

/// Train on a stratified `train_fraction` of rows, report test accuracy.
pub fn train_eval(
    set: &EmbeddingSet,
    labels: &BTreeMap<String, String>,
    config: &ClassifierConfig,
) -> Result<ClassifierReport, ClassifyError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(ClassifyError::Config("train_fraction must be in (0, 1)".into()));
    }
    let missing: Vec<&String> =
        set.ids().iter().filter(|id| !labels.contains_key(*id)).collect();
    if !missing.is_empty() {
        return Err(ClassifyError::MissingLabels(format!("{} ids", missing.len())));
    }
    let mut classes: Vec<String> = set.ids().iter().map(|id| labels[id].clone()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClassifyError::DegenerateLabels);
    }

    let rows: Vec<(String, String)> = set
        .ids()
        .iter()
        .map(|id| (id.clone(), labels[id].clone()))
        .collect();
    let (train_ids, test_ids) =
        crate::evaluate::split(&rows, 1.0 - config.train_fraction, config.seed)
            .map_err(|e| ClassifyError::Config(e.to_string()))?;

    let class_of = |id: &str| -> usize {
        classes
            .binary_search_by(|c| c.as_str().cmp(&labels[id]))
            .expect("class list built from labels")
    };

    let d = set.dim();
    let c = classes.len();
    let train_rows: Vec<usize> =
        train_ids.iter().map(|id| set.index_of(id).expect("id from set")).collect();
    let train_targets: Vec<usize> = train_ids.iter().map(|id| class_of(id)).collect();

    // Weights are (c × d) row-major plus per-class intercepts, zero-initialized.
    let mut weights = vec![0.0f64; c * d];
    let mut bias = vec![0.0f64; c];
    let n = train_rows.len() as f64;

    let loss_of = |weights: &[f64], bias: &[f64]| -> f64 {
        let mut total = 0.0;
        for (&row, &target) in train_rows.iter().zip(&train_targets) {
            let x = set.row(row);
            let logits = class_logits(weights, bias, &x, c, d);
            total -= log_softmax(&logits, target);
        }
        let mut penalty = 0.0;
        for w in weights {
            penalty += w * w;
        }
        total / n + 0.5 * config.lambda * penalty / n
    };

    let mut loss = loss_of(&weights, &bias);
    let mut lr = config.learning_rate;
    let mut iterations_run = 0;
    for _ in 0..config.max_iters {
        iterations_run += 1;
        // Gradient of mean cross-entropy + L2.
        let mut grad_w = vec![0.0f64; c * d];
        let mut grad_b = vec![0.0f64; c];
        for (&row, &target) in train_rows.iter().zip(&train_targets) {
            let x = set.row(row);
            let logits = class_logits(&weights, &bias, &x, c, d);
            let probs = softmax(&logits);
            for class in 0..c {
                let delta = probs[class] - if class == target { 1.0 } else { 0.0 };
                grad_b[class] += delta;
                for (j, xv) in x.iter().enumerate() {
                    grad_w[class * d + j] += delta * xv;
                }
            }
        }
        for (g, w) in grad_w.iter_mut().zip(&weights) {
            *g = *g / n + config.lambda * w / n;
        }
        for g in &mut grad_b {
            *g /= n;
        }

        // Deterministic backtracking: halve the step until the loss drops.
        let mut stepped = false;
        for _ in 0..20 {
            let trial_w: Vec<f64> =
                weights.iter().zip(&grad_w).map(|(w, g)| w - lr * g).collect();
            let trial_b: Vec<f64> = bias.iter().zip(&grad_b).map(|(b, g)| b - lr * g).collect();
            let trial_loss = loss_of(&trial_w, &trial_b);
            if trial_loss <= loss {
                weights = trial_w;
                bias = trial_b;
                loss = trial_loss;
                stepped = true;
                break;
            }
            lr *= 0.5;
        }
        if !stepped {
            break;
        }
    }

    let mut correct = 0usize;
    for id in &test_ids {
        let row = set.index_of(id).expect("id from set");
        let x = set.row(row);
        let logits = class_logits(&weights, &bias, &x, c, d);
        let predicted = argmax(&logits);
        if predicted == class_of(id) {
            correct += 1;
        }
    }
    Ok(ClassifierReport {
        classes,
        train_rows: train_ids.len(),
        test_rows: test_ids.len(),
        accuracy: correct as f64 / test_ids.len() as f64,
        final_loss: loss,
        iterations_run,
    })
}

fn class_logits(weights: &[f64], bias: &[f64], x: &[f64], c: usize, d: usize) -> Vec<f64> {
    let mut logits = Vec::with_capacity(c);
    for class in 0..c {
        let mut z = bias[class];
        for (j, xv) in x.iter().enumerate() {
            z += weights[class * d + j] * xv;
        }
        logits.push(z);
    }
    logits
}

fn log_softmax(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut log_sum = 0.0;
    for z in logits {
        log_sum += (z - max).exp();
    }
    logits[target] - max - log_sum.ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= sum;
    }
    exps
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
