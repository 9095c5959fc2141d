//! Deterministic synthetic data: fixture corpora for the offline provider,
//! planted-effect metric tables, model-exact regression datasets, and
//! clustered embeddings. Everything is a pure function of its seed, which is
//! what the end-to-end determinism and calibration suites rely on.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embed::EmbeddingSet;
use crate::metrics::MetricRecord;
use crate::regress::RegressionDataset;

/// Shape of a synthetic fixture corpus.
#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub seed: u64,
    pub fields: Vec<String>,
    pub records_per_field: usize,
    /// Dimension of the synthetic "imported" embedding.
    pub dim: usize,
    /// Fraction of payloads made invalid (no abstract or no date).
    pub invalid_fraction: f64,
    pub start_year: i32,
    pub end_year: i32,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 0,
            fields: vec!["Geometry".into(), "Dynamics".into()],
            records_per_field: 60,
            dim: 16,
            invalid_fraction: 0.05,
            start_year: 1998,
            end_year: 2022,
        }
    }
}

/// A generated corpus: raw payloads (id, JSON), the matching import matrix,
/// and one center id per field.
pub struct FixtureCorpus {
    pub payloads: Vec<(String, String)>,
    pub vectors: EmbeddingSet,
    pub centers: BTreeMap<String, String>,
}

const TOPICS_PER_FIELD: usize = 3;
const WORDS_PER_TOPIC: usize = 18;

pub fn gen_fixture_corpus(spec: &FixtureSpec) -> FixtureCorpus {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut payloads = Vec::new();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut centers = BTreeMap::new();

    for (f, field) in spec.fields.iter().enumerate() {
        // Topic centers on the unit sphere; abstracts mix one dominant topic.
        let topic_centers: Vec<Vec<f64>> = (0..TOPICS_PER_FIELD)
            .map(|_| unit_vector(&mut rng, spec.dim))
            .collect();
        for i in 0..spec.records_per_field {
            let id = format!("{}-{i:04}", field.to_lowercase());
            let topic = rng.gen_range(0..TOPICS_PER_FIELD);
            let n_words = rng.gen_range(25..60);
            let mut words = Vec::with_capacity(n_words);
            for _ in 0..n_words {
                // Mostly the dominant topic's lexicon, sometimes another's.
                let t = if rng.gen::<f64>() < 0.75 {
                    topic
                } else {
                    rng.gen_range(0..TOPICS_PER_FIELD)
                };
                let w = rng.gen_range(0..WORDS_PER_TOPIC);
                words.push(format!("term{f}{t}w{w}"));
            }
            let abstract_text = words.join(" ");

            let day_range = days_between(spec.start_year, spec.end_year);
            let day = rng.gen_range(0..day_range);
            let date = NaiveDate::from_ymd_opt(spec.start_year, 1, 1).expect("valid year")
                + chrono::Duration::days(day);

            let log_rate: f64 = 1.0 + 0.8 * snorm(&mut rng);
            let citation_count = log_rate.exp().floor().min(5000.0) as u64;
            let reference_count = rng.gen_range(5..60) as u64;

            // Every so often, break a payload so validation has work to do.
            let roll: f64 = rng.gen();
            let (abstract_field, date_field) = if roll < spec.invalid_fraction / 2.0 {
                (None, Some(date.format("%Y-%m-%d").to_string()))
            } else if roll < spec.invalid_fraction {
                (Some(abstract_text.clone()), None)
            } else {
                (Some(abstract_text.clone()), Some(date.format("%Y-%m-%d").to_string()))
            };

            let payload = serde_json::json!({
                "paperId": id,
                "title": format!("Synthetic record {id}"),
                "abstract": abstract_field,
                "publicationDate": date_field,
                "fieldsOfStudy": [field],
                "citationCount": citation_count,
                "referenceCount": reference_count,
            });
            payloads.push((id.clone(), serde_json::to_string(&payload).unwrap()));

            let mut vector = topic_centers[topic].clone();
            for v in &mut vector {
                *v = 2.0 * *v + 0.6 * snorm(&mut rng);
            }
            ids.push(id.clone());
            rows.push(vector);

            if i == 0 {
                centers.insert(field.clone(), id);
            }
        }
    }

    let vectors = EmbeddingSet::from_rows("import", ids, rows).expect("unique synthetic ids");
    FixtureCorpus { payloads, vectors, centers }
}

fn days_between(start_year: i32, end_year: i32) -> i64 {
    let start = NaiveDate::from_ymd_opt(start_year, 1, 1).expect("valid year");
    let end = NaiveDate::from_ymd_opt(end_year, 12, 31).expect("valid year");
    (end - start).num_days()
}

/// Write payload files (`<id>.json`) and the import matrix.
pub fn write_fixture_corpus(
    corpus: &FixtureCorpus,
    payload_dir: &Path,
    matrix_path: &Path,
) -> std::io::Result<()> {
    std::fs::create_dir_all(payload_dir)?;
    for (id, json) in &corpus.payloads {
        std::fs::write(payload_dir.join(format!("{id}.json")), json)?;
    }
    if let Some(parent) = matrix_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    crate::embed::io::save_matrix(
        &corpus.vectors,
        crate::embed::io::MatrixFormat::Text,
        matrix_path,
    )
    .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(())
}

fn snorm(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn unit_vector(rng: &mut ChaCha12Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = crate::embed::dot(&v, &v).sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

pub fn unit_vectors(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| unit_vector(&mut rng, d)).collect()
}

/// True parameters behind a generated regression dataset.
#[derive(Debug, Clone)]
pub struct TrueParams {
    pub gamma: f64,
    /// `beta[l][f]`.
    pub beta: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma_l: Vec<f64>,
    pub sigma: f64,
}

/// Draw a dataset exactly from the hierarchical model on the standardized
/// scale: `x ~ N(0,1)`, `beta[l][f] ~ N(mu[l], sigma_l[l])`,
/// `y = gamma + sum_l beta[l][f] x[l] + N(0, sigma)`. Every row is a
/// training row.
pub fn gen_model_dataset(
    seed: u64,
    n_fields: usize,
    predictors: &[String],
    rows_per_field: usize,
    mu_scale: f64,
    sigma_l_scale: f64,
    sigma: f64,
) -> (RegressionDataset, TrueParams) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let l = predictors.len();
    let gamma = 0.5 * snorm(&mut rng);
    let mu: Vec<f64> = (0..l)
        .map(|_| mu_scale * snorm(&mut rng))
        .collect();
    let sigma_l: Vec<f64> = (0..l)
        .map(|_| 0.05 + sigma_l_scale * snorm(&mut rng).abs())
        .collect();
    let beta: Vec<Vec<f64>> = (0..l)
        .map(|li| {
            (0..n_fields)
                .map(|_| mu[li] + sigma_l[li] * snorm(&mut rng))
                .collect()
        })
        .collect();

    let field_names: Vec<String> = (0..n_fields).map(|f| format!("F{f}")).collect();
    let n = n_fields * rows_per_field;
    let mut ids = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * l);
    let mut y = Vec::with_capacity(n);
    let mut field_index = Vec::with_capacity(n);
    for (f, field_betas) in (0..n_fields).map(|f| (f, &beta)) {
        for i in 0..rows_per_field {
            ids.push(format!("F{f}r{i:04}"));
            let mut mu_row = gamma;
            for field_beta in field_betas.iter().take(l) {
                let xv: f64 = StandardNormal.sample(&mut rng);
                x.push(xv);
                mu_row += field_beta[f] * xv;
            }
            y.push(mu_row + sigma * snorm(&mut rng));
            field_index.push(f);
        }
    }
    let train_idx: Vec<usize> = (0..n).collect();
    let dataset = RegressionDataset::from_standardized(
        predictors.to_vec(),
        field_names,
        ids,
        x,
        y,
        field_index,
        train_idx,
        Vec::new(),
    )
    .expect("consistent by construction");
    (
        dataset,
        TrueParams { gamma, beta, mu, sigma_l, sigma },
    )
}

/// Effects planted in a synthetic metric table (standardized scale).
#[derive(Debug, Clone)]
pub struct PlantedEffects {
    /// Mean effect of every density column, e.g. -0.05.
    pub rho_mu: f64,
    /// Field-level spread of the density effects.
    pub rho_sigma: f64,
    pub nref_mu: f64,
    pub age_mu: f64,
    pub effect_spread: f64,
    /// Residual standard deviation of the standardized response.
    pub sigma: f64,
}

/// Generate a raw-scale metric table whose standardized regression has the
/// planted effects. Raw columns are affine images of standard normals, so
/// per-field standardization recovers the planted coefficients up to
/// sampling error.
pub fn gen_planted_table(
    seed: u64,
    n_fields: usize,
    rows_per_field: usize,
    embedders: &[String],
    effects: &PlantedEffects,
) -> Vec<MetricRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_rho = embedders.len();

    // Field-level coefficients.
    let rho_beta: Vec<Vec<f64>> = (0..n_rho)
        .map(|_| {
            (0..n_fields)
                .map(|_| {
                    effects.rho_mu
                        + effects.rho_sigma * snorm(&mut rng)
                })
                .collect()
        })
        .collect();
    let nref_beta: Vec<f64> = (0..n_fields)
        .map(|_| effects.nref_mu + effects.effect_spread * snorm(&mut rng))
        .collect();
    let age_beta: Vec<f64> = (0..n_fields)
        .map(|_| effects.age_mu + effects.effect_spread * snorm(&mut rng))
        .collect();

    let mut table = Vec::with_capacity(n_fields * rows_per_field);
    for f in 0..n_fields {
        for i in 0..rows_per_field {
            let z_rho: Vec<f64> = (0..n_rho).map(|_| StandardNormal.sample(&mut rng)).collect();
            let z_alpha: Vec<f64> =
                (0..n_rho).map(|_| StandardNormal.sample(&mut rng)).collect();
            let z_nref: f64 = StandardNormal.sample(&mut rng);
            let z_age: f64 = StandardNormal.sample(&mut rng);
            let mut y = 0.0;
            for (li, z) in z_rho.iter().enumerate() {
                y += rho_beta[li][f] * z;
            }
            y += nref_beta[f] * z_nref + age_beta[f] * z_age;
            y += effects.sigma * snorm(&mut rng);

            // Raw-scale images; each field gets its own affine map.
            let field_shift = f as f64 * 0.3;
            let rho: BTreeMap<String, f64> = embedders
                .iter()
                .zip(&z_rho)
                .map(|(e, z)| (e.clone(), 20.0 + field_shift + 4.0 * z))
                .collect();
            let alpha: BTreeMap<String, f64> = embedders
                .iter()
                .zip(&z_alpha)
                .map(|(e, z)| (e.clone(), (0.5 + 0.08 * z).clamp(0.0, 1.0)))
                .collect();
            table.push(MetricRecord {
                id: format!("F{f}p{i:05}"),
                field_label: format!("F{f}"),
                rho,
                alpha,
                log_cpy: y * (1.2 + 0.1 * f as f64) + 0.4 + field_shift,
                n_ref: ((30.0 + 8.0 * z_nref).round().max(0.0)) as u64,
                age_years: (10.0 + 2.5 * z_age).max(0.05),
            });
        }
    }
    table
}

/// Clustered embeddings whose class means sit on a circle inside a random
/// 2-plane, so a rank-2 projection keeps the classes separated.
pub fn gen_circle_clusters(
    seed: u64,
    classes: usize,
    per_class: usize,
    d: usize,
    radius: f64,
    noise: f64,
) -> (EmbeddingSet, BTreeMap<String, String>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Orthonormal pair spanning the plane of the class means.
    let e1 = unit_vector(&mut rng, d);
    let mut e2 = unit_vector(&mut rng, d);
    let proj = crate::embed::dot(&e1, &e2);
    for (b, a) in e2.iter_mut().zip(&e1) {
        *b -= proj * a;
    }
    let norm = crate::embed::dot(&e2, &e2).sqrt();
    for b in &mut e2 {
        *b /= norm;
    }

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut labels = BTreeMap::new();
    for class in 0..classes {
        let angle = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
        let (cos, sin) = (angle.cos(), angle.sin());
        for i in 0..per_class {
            let id = format!("c{class}i{i:04}");
            let row: Vec<f64> = (0..d)
                .map(|j| {
                    radius * (cos * e1[j] + sin * e2[j])
                        + noise * snorm(&mut rng)
                })
                .collect();
            ids.push(id.clone());
            rows.push(row);
            labels.insert(id, format!("class{class}"));
        }
    }
    (
        EmbeddingSet::from_rows("clusters", ids, rows).expect("unique ids"),
        labels,
    )
}
