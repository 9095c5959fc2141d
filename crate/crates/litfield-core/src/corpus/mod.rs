//! Bibliographic corpus: record validation, storage, and providers.
//!
//! A [`PublicationRecord`] is admitted only when it has an abstract, a
//! publication date, and the target field of study among its field labels.
//! Everything else is reported as a typed [`Rejection`] so survival
//! statistics can be reproduced on any corpus.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod provider;

pub use provider::{
    fetch_batch, fetch_batch_concurrent, FixtureProvider, LiveProvider, MemoryProvider, Provider,
    ProviderConfig, Query,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("invalid window: start {start} after end {end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Provider(#[from] provider::ProviderError),
}

/// Why a payload was rejected during validation. These are expected outcomes,
/// not errors: the survival rate of a crawl is reported from their counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    MissingAbstract,
    MissingDate,
    WrongField,
}

impl Rejection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::MissingAbstract => "missing_abstract",
            Rejection::MissingDate => "missing_date",
            Rejection::WrongField => "wrong_field",
        }
    }
}

/// Outcome of validating one provider payload.
#[derive(Debug, Clone)]
pub enum ValidationResult {
    Valid(PublicationRecord),
    Rejected(Rejection),
}

/// One publication's metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: String,
    pub publication_date: NaiveDate,
    pub field_label: String,
    pub abstract_text: String,
    pub citation_count: u64,
    pub reference_count: u64,
    pub retrieved_at: NaiveDate,
}

/// Retrieval provenance stored alongside a corpus file so expansion order can
/// be replayed. The timestamp is the configured retrieval date, not wall
/// clock, so reruns are byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider: String,
    pub query: String,
    pub center_id: Option<String>,
    pub retrieved_at: Option<NaiveDate>,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

/// Keyed, append-only collection of validated records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStore {
    records: BTreeMap<String, PublicationRecord>,
    pub provenance: Provenance,
}

impl CorpusStore {
    pub fn new(provenance: Provenance) -> Self {
        CorpusStore {
            records: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, record: PublicationRecord) -> Result<(), CorpusError> {
        if self.records.contains_key(&record.id) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        self.records.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PublicationRecord> {
        self.records.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in id order.
    pub fn iter(&self) -> impl Iterator<Item = &PublicationRecord> {
        self.records.values()
    }

    pub fn records(&self) -> &BTreeMap<String, PublicationRecord> {
        &self.records
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(|s| s.as_str())
    }

    /// Publication dates keyed by id, for neighbor pools.
    pub fn dates(&self) -> BTreeMap<String, NaiveDate> {
        self.records
            .iter()
            .map(|(id, r)| (id.clone(), r.publication_date))
            .collect()
    }

    /// Serialize records as JSON Lines, one record per line, id order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for record in self.records.values() {
            serde_json::to_writer(&mut w, record)
                .map_err(|e| CorpusError::Parse { offset: 0, message: e.to_string() })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, provenance: Provenance) -> Result<Self, CorpusError> {
        let mut store = CorpusStore::new(provenance);
        let mut offset = 0usize;
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                let record: PublicationRecord =
                    serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                        offset: offset + byte_offset(&line, e.line(), e.column()),
                        message: e.to_string(),
                    })?;
                store.insert(record)?;
            }
            offset += line.len() + 1;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path, provenance: Provenance) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file), provenance)
    }
}

/// Raw provider payload, mirroring the live API schema. The fixture provider
/// serves files of exactly this shape (see `schemas/payload.schema.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RawPayload {
    pub paper_id: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub publication_date: Option<String>,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub fields_of_study: Option<Vec<String>>,
    #[serde(default)]
    pub citation_count: Option<u64>,
    #[serde(default)]
    pub reference_count: Option<u64>,
}

/// Validate one raw payload against the three admission criteria: an
/// abstract, a publication date, and the target field among its labels.
///
/// Payloads carrying only a year are dated July 1 of that year (midpoint).
/// A malformed payload (bad JSON, missing id, unparseable date) is an error,
/// not a rejection.
pub fn validate_record(
    raw: &str,
    target_field: &str,
    retrieved_at: NaiveDate,
) -> Result<ValidationResult, CorpusError> {
    let payload: RawPayload = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
        offset: byte_offset(raw, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let id = match payload.paper_id {
        Some(id) if !id.is_empty() => id,
        _ => {
            return Err(CorpusError::Parse {
                offset: 0,
                message: "payload has no paperId".into(),
            })
        }
    };

    let abstract_text = match payload.abstract_text {
        Some(a) if !a.trim().is_empty() => a,
        _ => return Ok(ValidationResult::Rejected(Rejection::MissingAbstract)),
    };

    let publication_date = match (&payload.publication_date, payload.year) {
        (Some(s), _) => NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| {
            CorpusError::Parse {
                offset: 0,
                message: format!("unparseable publicationDate {s:?}: {e}"),
            }
        })?,
        (None, Some(year)) => NaiveDate::from_ymd_opt(year, 7, 1).ok_or_else(|| {
            CorpusError::Parse {
                offset: 0,
                message: format!("year {year} out of range"),
            }
        })?,
        (None, None) => return Ok(ValidationResult::Rejected(Rejection::MissingDate)),
    };

    let has_field = payload
        .fields_of_study
        .as_deref()
        .unwrap_or_default()
        .iter()
        .any(|f| f == target_field);
    if !has_field {
        return Ok(ValidationResult::Rejected(Rejection::WrongField));
    }

    Ok(ValidationResult::Valid(PublicationRecord {
        id,
        publication_date,
        field_label: target_field.to_string(),
        abstract_text,
        citation_count: payload.citation_count.unwrap_or(0),
        reference_count: payload.reference_count.unwrap_or(0),
        retrieved_at,
    }))
}

/// Mirror a validated record back into the provider payload schema, so an
/// ingested corpus can be replayed through the expansion pipeline.
pub fn payload_from_record(record: &PublicationRecord) -> String {
    serde_json::json!({
        "paperId": record.id,
        "abstract": record.abstract_text,
        "publicationDate": record.publication_date.format("%Y-%m-%d").to_string(),
        "fieldsOfStudy": [record.field_label],
        "citationCount": record.citation_count,
        "referenceCount": record.reference_count,
    })
    .to_string()
}

/// Ids whose publication date falls inside `[start, end]`, both ends
/// inclusive.
pub fn filter_window(
    store: &CorpusStore,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<Vec<String>, CorpusError> {
    if start > end {
        return Err(CorpusError::InvalidWindow { start, end });
    }
    Ok(store
        .iter()
        .filter(|r| r.publication_date >= start && r.publication_date <= end)
        .map(|r| r.id.clone())
        .collect())
}

/// Byte offset of a 1-based (line, column) position in `raw`.
fn byte_offset(raw: &str, line: usize, column: usize) -> usize {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0usize;
    for (i, b) in raw.bytes().enumerate() {
        if remaining == 0 {
            break;
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(raw.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn payload(
        id: &str,
        abs: Option<&str>,
        date: Option<&str>,
        year: Option<i32>,
        fields: Option<&[&str]>,
    ) -> String {
        serde_json::to_string(&serde_json::json!({
            "paperId": id,
            "abstract": abs,
            "publicationDate": date,
            "year": year,
            "fieldsOfStudy": fields,
            "citationCount": 3,
            "referenceCount": 11,
        }))
        .unwrap()
    }

    #[test]
    fn accepts_complete_payload() {
        let raw = payload("p1", Some("an abstract"), Some("2011-02-03"), None, Some(&["Physics"]));
        match validate_record(&raw, "Physics", date("2024-01-01")).unwrap() {
            ValidationResult::Valid(r) => {
                assert_eq!(r.id, "p1");
                assert_eq!(r.publication_date, date("2011-02-03"));
                assert_eq!(r.citation_count, 3);
                assert_eq!(r.reference_count, 11);
                assert_eq!(r.field_label, "Physics");
            }
            other => panic!("expected valid, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_abstract() {
        let raw = payload("p1", None, Some("2011-02-03"), None, Some(&["Physics"]));
        match validate_record(&raw, "Physics", date("2024-01-01")).unwrap() {
            ValidationResult::Rejected(Rejection::MissingAbstract) => {}
            other => panic!("expected MissingAbstract, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_field() {
        let raw = payload("p1", Some("a"), Some("2011-02-03"), None, Some(&["Chemistry"]));
        match validate_record(&raw, "Physics", date("2024-01-01")).unwrap() {
            ValidationResult::Rejected(Rejection::WrongField) => {}
            other => panic!("expected WrongField, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_date() {
        let raw = payload("p1", Some("a"), None, None, Some(&["Physics"]));
        match validate_record(&raw, "Physics", date("2024-01-01")).unwrap() {
            ValidationResult::Rejected(Rejection::MissingDate) => {}
            other => panic!("expected MissingDate, got {other:?}"),
        }
    }

    #[test]
    fn year_only_dates_to_july_first() {
        let raw = payload("p1", Some("a"), None, Some(2004), Some(&["Physics"]));
        match validate_record(&raw, "Physics", date("2024-01-01")).unwrap() {
            ValidationResult::Valid(r) => assert_eq!(r.publication_date, date("2004-07-01")),
            other => panic!("expected valid, got {other:?}"),
        }
    }

    #[test]
    fn malformed_payload_reports_byte_offset() {
        let raw = "{\"paperId\": \"x\", \"abstract\": }";
        match validate_record(raw, "Physics", date("2024-01-01")) {
            Err(CorpusError::Parse { offset, .. }) => assert!(offset > 0 && offset <= raw.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn window_is_inclusive_on_both_ends() {
        let mut store = CorpusStore::default();
        for (id, d) in [
            ("a", "1999-12-31"),
            ("b", "2000-01-01"),
            ("c", "2020-12-31"),
            ("d", "2021-01-01"),
        ] {
            store
                .insert(PublicationRecord {
                    id: id.into(),
                    publication_date: date(d),
                    field_label: "F".into(),
                    abstract_text: "t".into(),
                    citation_count: 0,
                    reference_count: 0,
                    retrieved_at: date("2024-01-01"),
                })
                .unwrap();
        }
        let ids = filter_window(&store, date("2000-01-01"), date("2020-12-31")).unwrap();
        assert_eq!(ids, vec!["b".to_string(), "c".to_string()]);
        assert!(filter_window(&CorpusStore::default(), date("2000-01-01"), date("2020-12-31"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn duplicate_insert_fails() {
        let mut store = CorpusStore::default();
        let r = PublicationRecord {
            id: "a".into(),
            publication_date: date("2001-01-01"),
            field_label: "F".into(),
            abstract_text: "t".into(),
            citation_count: 0,
            reference_count: 0,
            retrieved_at: date("2024-01-01"),
        };
        store.insert(r.clone()).unwrap();
        assert!(matches!(store.insert(r), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let mut store = CorpusStore::default();
        for i in 0..5 {
            store
                .insert(PublicationRecord {
                    id: format!("p{i}"),
                    publication_date: date("2003-05-06"),
                    field_label: "F".into(),
                    abstract_text: format!("abstract {i} with unicode ü"),
                    citation_count: i,
                    reference_count: 2 * i,
                    retrieved_at: date("2024-01-01"),
                })
                .unwrap();
        }
        let mut buf = Vec::new();
        store.write_jsonl(&mut buf).unwrap();
        let reread =
            CorpusStore::read_jsonl(std::io::Cursor::new(&buf), Provenance::default()).unwrap();
        let mut buf2 = Vec::new();
        reread.write_jsonl(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
