//! Per-publication regression inputs: nearest previous neighbors, neighborhood
//! density, asymmetry, citation rate, and age.
//!
//! Density is the count of the k nearest previously-published neighbors
//! divided by the angle (radians) enclosing them on the unit hypersphere — a
//! surface density, deliberately not the volumetric `1/distance^d` form,
//! which underflows at high dimension. Asymmetry is the norm of the mean of
//! unit difference-directions from a publication to those neighbors: 0 at the
//! semantic center of a neighborhood, 1 at its extreme edge.
//!
//! "Previous" always means a strictly earlier calendar date; same-day
//! publications are excluded so no metric can leak information from the
//! future.

use std::collections::BTreeMap;


use std::io::Write;
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PublicationRecord;
use crate::embed::{clamp_cosine, EmbeddingSet, UNIT_NORM_TOLERANCE};

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("only {found} strictly-earlier neighbors available")]
    InsufficientNeighbors { found: usize },
    #[error("input not normalized: {0}")]
    NotNormalized(String),
    #[error("publication {id} dated {date} is after the as-of date {asof}")]
    InvalidDate { id: String, date: NaiveDate, asof: NaiveDate },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("id {0} not present in pool")]
    UnknownId(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Knobs for metric computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Neighborhood size.
    pub k: usize,
    /// Lower bound on the enclosing angle; caps density for duplicates.
    pub angle_floor: f64,
    /// Offset added to citations/year before the log transform, keeping
    /// zero-citation publications in-sample.
    pub cpy_offset: f64,
    /// Minimum age in years (one day by default).
    pub age_floor: f64,
    /// Date citation counts were retrieved.
    pub asof_date: NaiveDate,
}

impl MetricConfig {
    pub fn new(asof_date: NaiveDate) -> Self {
        MetricConfig {
            k: 16,
            angle_floor: 1e-9,
            cpy_offset: 0.1,
            age_floor: 1.0 / DAYS_PER_YEAR,
            asof_date,
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.k < 1 {
            return Err(MetricError::Config("k must be >= 1".into()));
        }
        if self.angle_floor <= 0.0 || self.cpy_offset <= 0.0 || self.age_floor <= 0.0 {
            return Err(MetricError::Config("floors and offset must be > 0".into()));
        }
        Ok(())
    }
}

/// One neighbor with its angular distance to the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub angle: f64,
}

/// The regression row for one publication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub id: String,
    pub field_label: String,
    /// Density per embedder (neighbors per radian).
    pub rho: BTreeMap<String, f64>,
    /// Asymmetry per embedder, in [0, 1].
    pub alpha: BTreeMap<String, f64>,
    pub log_cpy: f64,
    pub n_ref: u64,
    pub age_years: f64,
}

/// Why a converged publication was excluded from the metric table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    OutsideWindow,
    MissingRecord,
    MissingEmbedding { embedder: String },
    InsufficientNeighbors { embedder: String, found: usize },
}

impl Exclusion {
    pub fn as_string(&self) -> String {
        match self {
            Exclusion::OutsideWindow => "outside_window".into(),
            Exclusion::MissingRecord => "missing_record".into(),
            Exclusion::MissingEmbedding { embedder } => format!("missing_embedding:{embedder}"),
            Exclusion::InsufficientNeighbors { embedder, found } => {
                format!("insufficient_neighbors:{embedder}:{found}")
            }
        }
    }
}

/// The k nearest strictly-earlier pool members by angular distance.
///
/// Sorted ascending by angle; exact ties rank the lexicographically smaller
/// id first. The target itself is never a candidate.
pub fn knn_previous(
    pool: &EmbeddingSet,
    dates: &BTreeMap<String, NaiveDate>,
    target_id: &str,
    k: usize,
) -> Result<Vec<Neighbor>, MetricError> {
    let target_date = dates
        .get(target_id)
        .ok_or_else(|| MetricError::UnknownId(target_id.to_string()))?;
    knn_before_cutoff(pool, dates, target_id, *target_date, k)
}

/// Core k-NN: pool members with `date < cutoff`, nearest first. Passing the
/// target's own date gives the strictly-earlier rule; passing the day after
/// admits same-day neighbors.
pub fn knn_before_cutoff(
    pool: &EmbeddingSet,
    dates: &BTreeMap<String, NaiveDate>,
    target_id: &str,
    cutoff: NaiveDate,
    k: usize,
) -> Result<Vec<Neighbor>, MetricError> {
    if k < 1 {
        return Err(MetricError::Config("k must be >= 1".into()));
    }
    if !pool.is_normalized() {
        return Err(MetricError::NotNormalized("pool must be normalized".into()));
    }
    let target_index = pool
        .index_of(target_id)
        .ok_or_else(|| MetricError::UnknownId(target_id.to_string()))?;

    let mut candidates: Vec<Neighbor> = Vec::new();
    for (i, id) in pool.ids().iter().enumerate() {
        if i == target_index {
            continue;
        }
        let Some(date) = dates.get(id) else { continue };
        if *date >= cutoff {
            continue;
        }
        let cos = clamp_cosine(pool.dot(target_index, i))
            .map_err(|e| MetricError::NotNormalized(e.to_string()))?;
        candidates.push(Neighbor { id: id.clone(), angle: cos.acos() });
    }
    if candidates.len() < k {
        return Err(MetricError::InsufficientNeighbors { found: candidates.len() });
    }
    candidates.sort_by(|a, b| a.angle.total_cmp(&b.angle).then_with(|| a.id.cmp(&b.id)));
    candidates.truncate(k);
    Ok(candidates)
}

/// Density: k over the angle to the k-th nearest previous neighbor, floored
/// so duplicate embeddings stay finite.
pub fn density(
    target: &[f64],
    kth_neighbor: &[f64],
    k: usize,
    angle_floor: f64,
) -> Result<f64, MetricError> {
    check_unit(target)?;
    check_unit(kth_neighbor)?;
    if target.len() != kth_neighbor.len() {
        return Err(MetricError::DimensionError { expected: target.len(), got: kth_neighbor.len() });
    }
    let cos = clamp_cosine(crate::embed::dot(target, kth_neighbor))
        .map_err(|e| MetricError::NotNormalized(e.to_string()))?;
    Ok(density_from_angle(cos.acos(), k, angle_floor))
}

pub fn density_from_angle(angle: f64, k: usize, angle_floor: f64) -> f64 {
    k as f64 / angle.max(angle_floor)
}

/// Asymmetry: the magnitude of the mean of unit difference-directions from
/// the target to its neighbors. Neighbors coincident with the target
/// contribute a zero vector but still count in the 1/k normalization.
pub fn asymmetry(target: &[f64], neighbors: &[&[f64]]) -> Result<f64, MetricError> {
    if neighbors.is_empty() {
        return Err(MetricError::Config("neighbor list is empty".into()));
    }
    check_unit(target)?;
    let d = target.len();
    let mut net = vec![0.0f64; d];
    for neighbor in neighbors {
        check_unit(neighbor)?;
        if neighbor.len() != d {
            return Err(MetricError::DimensionError { expected: d, got: neighbor.len() });
        }
        let mut norm_sq = 0.0;
        for c in 0..d {
            let diff = target[c] - neighbor[c];
            norm_sq += diff * diff;
        }
        let norm = norm_sq.sqrt();
        if norm < 1e-12 {
            continue;
        }
        for c in 0..d {
            net[c] += (target[c] - neighbor[c]) / norm;
        }
    }
    let mut mag_sq = 0.0;
    for v in &net {
        mag_sq += v * v;
    }
    Ok(mag_sq.sqrt() / neighbors.len() as f64)
}

fn check_unit(v: &[f64]) -> Result<(), MetricError> {
    let norm = crate::embed::dot(v, v).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(MetricError::NotNormalized(format!("vector norm {norm}")));
    }
    Ok(())
}

/// Citations per year and its offset log transform.
pub fn citation_rate(
    record: &PublicationRecord,
    cfg: &MetricConfig,
) -> Result<(f64, f64), MetricError> {
    if record.publication_date > cfg.asof_date {
        return Err(MetricError::InvalidDate {
            id: record.id.clone(),
            date: record.publication_date,
            asof: cfg.asof_date,
        });
    }
    let days = (cfg.asof_date - record.publication_date).num_days() as f64;
    let age = (days / DAYS_PER_YEAR).max(cfg.age_floor);
    let cpy = record.citation_count as f64 / age;
    Ok((cpy, (cpy + cfg.cpy_offset).ln()))
}

/// Metric rows plus the per-id exclusion reasons.
pub type MetricTable = (Vec<MetricRecord>, Vec<(String, Exclusion)>);

/// Inputs for the per-embedder parts of a metric table.
pub struct EmbedderPool<'a> {
    pub embedder_id: String,
    pub set: &'a EmbeddingSet,
}

/// Build one [`MetricRecord`] per candidate id that is inside the window and
/// has k previous neighbors under every embedder; everything else lands in
/// the exclusion list with a reason. Rows are complete-case by construction:
/// every returned record has a density and asymmetry entry per embedder.
pub fn compute_metric_records(
    records: &BTreeMap<String, PublicationRecord>,
    pools: &[EmbedderPool<'_>],
    candidates: &[String],
    window_ids: &std::collections::BTreeSet<String>,
    cfg: &MetricConfig,
) -> Result<MetricTable, MetricError> {
    cfg.validate()?;
    if pools.is_empty() {
        return Err(MetricError::Config("no embedder pools supplied".into()));
    }
    for pool in pools {
        if !pool.set.is_normalized() {
            return Err(MetricError::NotNormalized(format!(
                "pool {} must be normalized",
                pool.embedder_id
            )));
        }
    }
    let dates: BTreeMap<String, NaiveDate> =
        records.iter().map(|(id, r)| (id.clone(), r.publication_date)).collect();

    type RowOutcome = Result<Result<MetricRecord, (String, Exclusion)>, MetricError>;
    let outcomes: Vec<RowOutcome> = candidates
        .par_iter()
        .map(|id| compute_one(id, records, pools, window_ids, &dates, cfg))
        .collect();

    let mut rows = Vec::new();
    let mut exclusions = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Ok(row) => rows.push(row),
            Err(excl) => exclusions.push(excl),
        }
    }
    Ok((rows, exclusions))
}

fn compute_one(
    id: &str,
    records: &BTreeMap<String, PublicationRecord>,
    pools: &[EmbedderPool<'_>],
    window_ids: &std::collections::BTreeSet<String>,
    dates: &BTreeMap<String, NaiveDate>,
    cfg: &MetricConfig,
) -> Result<Result<MetricRecord, (String, Exclusion)>, MetricError> {
    let Some(record) = records.get(id) else {
        return Ok(Err((id.to_string(), Exclusion::MissingRecord)));
    };
    if !window_ids.contains(id) {
        return Ok(Err((id.to_string(), Exclusion::OutsideWindow)));
    }
    let mut rho = BTreeMap::new();
    let mut alpha = BTreeMap::new();
    for pool in pools {
        if pool.set.index_of(id).is_none() {
            return Ok(Err((
                id.to_string(),
                Exclusion::MissingEmbedding { embedder: pool.embedder_id.clone() },
            )));
        }
        match knn_previous(pool.set, dates, id, cfg.k) {
            Ok(neighbors) => {
                let kth = &neighbors[cfg.k - 1];
                rho.insert(
                    pool.embedder_id.clone(),
                    density_from_angle(kth.angle, cfg.k, cfg.angle_floor),
                );
                let target_row = pool.set.row_by_id(id).expect("checked above");
                let neighbor_rows: Vec<_> = neighbors
                    .iter()
                    .map(|n| pool.set.row_by_id(&n.id).expect("neighbor came from pool"))
                    .collect();
                let neighbor_slices: Vec<&[f64]> =
                    neighbor_rows.iter().map(|r| r.as_ref()).collect();
                alpha.insert(
                    pool.embedder_id.clone(),
                    asymmetry(target_row.as_ref(), &neighbor_slices)?,
                );
            }
            Err(MetricError::InsufficientNeighbors { found }) => {
                return Ok(Err((
                    id.to_string(),
                    Exclusion::InsufficientNeighbors {
                        embedder: pool.embedder_id.clone(),
                        found,
                    },
                )));
            }
            Err(e) => return Err(e),
        }
    }
    let (_, log_cpy) = citation_rate(record, cfg)?;
    let days = (cfg.asof_date - record.publication_date).num_days() as f64;
    Ok(Ok(MetricRecord {
        id: id.to_string(),
        field_label: record.field_label.clone(),
        rho,
        alpha,
        log_cpy,
        n_ref: record.reference_count,
        age_years: (days / DAYS_PER_YEAR).max(cfg.age_floor),
    }))
}

/// Embedder ids present in a metric table, sorted.
pub fn table_embedders(rows: &[MetricRecord]) -> Vec<String> {
    rows.first().map_or_else(Vec::new, |r| r.rho.keys().cloned().collect())
}

/// Write the metric table as CSV:
/// `id,field,log_cpy,n_ref,age_years,rho_<e>...,alpha_<e>...` with floats at
/// 17 significant digits. Lines starting with `#` are reserved for stamps.
pub fn write_metric_table<W: Write>(rows: &[MetricRecord], mut w: W) -> Result<(), MetricError> {
    let embedders = table_embedders(rows);
    let mut header = String::from("id,field,log_cpy,n_ref,age_years");
    for e in &embedders {
        header.push_str(&format!(",rho_{e}"));
    }
    for e in &embedders {
        header.push_str(&format!(",alpha_{e}"));
    }
    writeln!(w, "{header}")?;
    let fmt = crate::embed::io::format_f64;
    for row in rows {
        let mut line = format!(
            "{},{},{},{},{}",
            row.id,
            row.field_label,
            fmt(row.log_cpy),
            row.n_ref,
            fmt(row.age_years)
        );
        for e in &embedders {
            line.push_str(&format!(",{}", fmt(row.rho[e])));
        }
        for e in &embedders {
            line.push_str(&format!(",{}", fmt(row.alpha[e])));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_metric_table<R: std::io::BufRead>(r: R) -> Result<Vec<MetricRecord>, MetricError> {
    let mut lines = r.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if line.starts_with('#') || line.trim().is_empty() {
                    continue;
                }
                break line;
            }
            None => return Ok(Vec::new()),
        }
    };
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != columns.len() {
            return Err(MetricError::DimensionError {
                expected: columns.len(),
                got: values.len(),
            });
        }
        let mut row = MetricRecord {
            id: values[0].to_string(),
            field_label: values[1].to_string(),
            rho: BTreeMap::new(),
            alpha: BTreeMap::new(),
            log_cpy: parse_f64(values[2])?,
            n_ref: values[3]
                .parse()
                .map_err(|e| MetricError::Config(format!("bad n_ref: {e}")))?,
            age_years: parse_f64(values[4])?,
        };
        for (col, value) in columns.iter().zip(&values).skip(5) {
            if let Some(e) = col.strip_prefix("rho_") {
                row.rho.insert(e.to_string(), parse_f64(value)?);
            } else if let Some(e) = col.strip_prefix("alpha_") {
                row.alpha.insert(e.to_string(), parse_f64(value)?);
            } else {
                return Err(MetricError::Config(format!("unknown column {col}")));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_f64(s: &str) -> Result<f64, MetricError> {
    s.parse()
        .map_err(|e| MetricError::Config(format!("bad float {s:?}: {e}")))
}

/// Write the exclusion report CSV (`id,reason`).
pub fn write_exclusions<W: Write>(
    exclusions: &[(String, Exclusion)],
    mut w: W,
) -> Result<(), MetricError> {
    writeln!(w, "id,reason")?;
    for (id, reason) in exclusions {
        writeln!(w, "{id},{}", reason.as_string())?;
    }
    Ok(())
}
