//! Document-embedding matrices aligned to corpus ids.
//!
//! Bag-of-words rows are held sparse (token counts) and densified only where
//! a kernel needs contiguous rows; imported matrices are dense. All angular
//! computations assume unit-normalized rows; [`normalize`] enforces that and
//! [`cosine_similarity`] guards the arccos domain.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod io;
mod svd;

pub use svd::reduce_svd;

/// Inner products may exceed 1 by rounding; anything past this tolerance is
/// treated as an unnormalized input rather than noise.
pub const COSINE_CLAMP_TOLERANCE: f64 = 1e-9;

/// Rows whose norm falls below this are rejected at normalization.
pub const ZERO_NORM_FLOOR: f64 = 1e-12;

/// A normalized row may deviate from unit length by at most this much.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("all abstracts are empty")]
    EmptyCorpus,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("row for id {0} has near-zero norm")]
    ZeroVector(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("input not normalized: {0}")]
    NotNormalized(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("matrix format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Token list for one field's bag-of-words space: sorted, unique, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub field_label: String,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Build from pre-deduplicated tokens; sorts and drops empties.
    pub fn from_tokens(field_label: impl Into<String>, mut tokens: Vec<String>) -> Self {
        tokens.retain(|t| !t.is_empty());
        tokens.sort();
        tokens.dedup();
        Vocabulary { field_label: field_label.into(), tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    /// Lexicographic union of several vocabularies (the pooled space used for
    /// cross-field classification).
    pub fn union<'a>(label: impl Into<String>, vocabs: impl IntoIterator<Item = &'a Vocabulary>) -> Self {
        let mut tokens: Vec<String> = vocabs
            .into_iter()
            .flat_map(|v| v.tokens.iter().cloned())
            .collect();
        tokens.sort();
        tokens.dedup();
        Vocabulary { field_label: label.into(), tokens }
    }
}

/// Lowercase, split on non-alphanumeric runs, drop pure-digit tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .map(|t| t.to_lowercase())
}

/// All tokens occurring at least `min_count` times across the abstracts.
pub fn build_vocabulary(
    field_label: &str,
    abstracts: &[impl AsRef<str>],
    min_count: usize,
) -> Result<Vocabulary, EmbedError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in abstracts {
        for token in tokenize(text.as_ref()) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let tokens = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(t, _)| t)
        .collect();
    Ok(Vocabulary { field_label: field_label.to_string(), tokens })
}

/// Row storage. Sparse rows keep `(column, value)` pairs sorted by column.
#[derive(Debug, Clone, PartialEq)]
enum Rows {
    Dense(Vec<f64>),
    Sparse(Vec<Vec<(u32, f64)>>),
}

/// An id-aligned matrix of document vectors with named provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    embedder_id: String,
    ids: Vec<String>,
    dim: usize,
    rows: Rows,
    normalized: bool,
}

impl EmbeddingSet {
    pub fn from_dense(
        embedder_id: impl Into<String>,
        ids: Vec<String>,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        if data.len() != ids.len() * dim {
            return Err(EmbedError::DimensionError { expected: ids.len() * dim, got: data.len() });
        }
        check_unique(&ids)?;
        Ok(EmbeddingSet {
            embedder_id: embedder_id.into(),
            ids,
            dim,
            rows: Rows::Dense(data),
            normalized: false,
        })
    }

    pub fn from_rows(
        embedder_id: impl Into<String>,
        ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, EmbedError> {
        let dim = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(EmbedError::DimensionError { expected: dim, got: bad.len() });
        }
        let data = rows.into_iter().flatten().collect();
        Self::from_dense(embedder_id, ids, dim, data)
    }

    fn from_sparse(
        embedder_id: impl Into<String>,
        ids: Vec<String>,
        dim: usize,
        rows: Vec<Vec<(u32, f64)>>,
    ) -> Result<Self, EmbedError> {
        check_unique(&ids)?;
        Ok(EmbeddingSet {
            embedder_id: embedder_id.into(),
            ids,
            dim,
            rows: Rows::Sparse(rows),
            normalized: false,
        })
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }

    /// Row as a contiguous slice, materializing sparse rows on demand.
    pub fn row(&self, i: usize) -> Cow<'_, [f64]> {
        match &self.rows {
            Rows::Dense(data) => Cow::Borrowed(&data[i * self.dim..(i + 1) * self.dim]),
            Rows::Sparse(rows) => {
                let mut dense = vec![0.0; self.dim];
                for &(c, v) in &rows[i] {
                    dense[c as usize] = v;
                }
                Cow::Owned(dense)
            }
        }
    }

    pub fn row_by_id(&self, id: &str) -> Option<Cow<'_, [f64]>> {
        self.index_of(id).map(|i| self.row(i))
    }

    /// Inner product of rows `i` and `j`. Summation is sequential in column
    /// order so results are schedule-independent.
    pub fn dot(&self, i: usize, j: usize) -> f64 {
        match &self.rows {
            Rows::Dense(data) => {
                let a = &data[i * self.dim..(i + 1) * self.dim];
                let b = &data[j * self.dim..(j + 1) * self.dim];
                dot(a, b)
            }
            Rows::Sparse(rows) => sparse_dot(&rows[i], &rows[j]),
        }
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.dot(i, i).sqrt()
    }

    /// Append one dense row. On a normalized set the row must be unit length.
    pub fn append_row(&mut self, id: impl Into<String>, row: &[f64]) -> Result<(), EmbedError> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(EmbedError::DimensionError { expected: self.dim, got: row.len() });
        }
        if self.ids.contains(&id) {
            return Err(EmbedError::DuplicateId(id));
        }
        if self.normalized {
            let norm = dot(row, row).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(EmbedError::NotNormalized(format!(
                    "appended row {id} has norm {norm}"
                )));
            }
        }
        match &mut self.rows {
            Rows::Dense(data) => data.extend_from_slice(row),
            Rows::Sparse(rows) => rows.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c as u32, *v))
                    .collect(),
            ),
        }
        self.ids.push(id);
        Ok(())
    }

    /// Subset of rows by id, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<EmbeddingSet, EmbedError> {
        let mut out_rows = Vec::with_capacity(ids.len());
        for id in ids {
            let i = self
                .index_of(id)
                .ok_or_else(|| EmbedError::Config(format!("id {id} not in embedding set")))?;
            out_rows.push(self.row(i).into_owned());
        }
        let mut set = EmbeddingSet::from_rows(self.embedder_id.clone(), ids.to_vec(), out_rows)?;
        set.normalized = self.normalized;
        Ok(set)
    }

    /// Dense copy of the matrix, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.rows {
            Rows::Dense(data) => data.clone(),
            Rows::Sparse(rows) => {
                let mut data = vec![0.0; self.ids.len() * self.dim];
                for (i, row) in rows.iter().enumerate() {
                    for &(c, v) in row {
                        data[i * self.dim + c as usize] = v;
                    }
                }
                data
            }
        }
    }

    fn divide_row(&mut self, i: usize, divisor: f64) {
        match &mut self.rows {
            Rows::Dense(data) => {
                for v in &mut data[i * self.dim..(i + 1) * self.dim] {
                    *v /= divisor;
                }
            }
            Rows::Sparse(rows) => {
                for (_, v) in &mut rows[i] {
                    *v /= divisor;
                }
            }
        }
    }
}

fn check_unique(ids: &[String]) -> Result<(), EmbedError> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(EmbedError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Sequential left-to-right inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let mut acc = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Count vocabulary tokens in each abstract. Out-of-vocabulary tokens are
/// ignored; all-zero rows are legal here and rejected at normalization.
pub fn embed_bow(
    embedder_id: &str,
    ids: Vec<String>,
    abstracts: &[impl AsRef<str>],
    vocab: &Vocabulary,
) -> Result<EmbeddingSet, EmbedError> {
    if vocab.is_empty() {
        return Err(EmbedError::EmptyVocabulary);
    }
    if ids.len() != abstracts.len() {
        return Err(EmbedError::DimensionError { expected: ids.len(), got: abstracts.len() });
    }
    let mut rows = Vec::with_capacity(abstracts.len());
    for text in abstracts {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokenize(text.as_ref()) {
            if let Some(col) = vocab.index_of(&token) {
                *counts.entry(col as u32).or_insert(0.0) += 1.0;
            }
        }
        rows.push(counts.into_iter().collect::<Vec<_>>());
    }
    EmbeddingSet::from_sparse(embedder_id, ids, vocab.len(), rows)
}

/// Rescale every row to unit Euclidean norm. Already-normalized sets are
/// returned unchanged, which makes the operation exactly idempotent.
pub fn normalize(mut set: EmbeddingSet) -> Result<EmbeddingSet, EmbedError> {
    if set.normalized {
        return Ok(set);
    }
    for i in 0..set.len() {
        let norm = set.row_norm(i);
        if norm < ZERO_NORM_FLOOR {
            return Err(EmbedError::ZeroVector(set.ids[i].clone()));
        }
        set.divide_row(i, norm);
    }
    set.normalized = true;
    Ok(set)
}

/// Inner product of two unit vectors, clamped into `[-1, 1]`.
///
/// Values beyond the clamp tolerance signal unnormalized input and error out
/// rather than being silently absorbed.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionError { expected: a.len(), got: b.len() });
    }
    clamp_cosine(dot(a, b))
}

/// Clamp an inner product into the arccos domain, rejecting gross excursions.
pub fn clamp_cosine(value: f64) -> Result<f64, EmbedError> {
    if value.abs() > 1.0 + COSINE_CLAMP_TOLERANCE || value.is_nan() {
        return Err(EmbedError::NotNormalized(format!(
            "inner product {value} outside [-1, 1]"
        )));
    }
    Ok(value.clamp(-1.0, 1.0))
}

/// Angle in radians between two unit vectors.
pub fn angle_between(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    Ok(cosine_similarity(a, b)?.acos())
}
