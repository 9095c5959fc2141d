//! Artifact stamping and staleness checks.
//!
//! Every artifact carries `{config_hash, seed, tool_version}`: JSON files in
//! a top-level `meta` object, CSV files in a leading `#`-comment line, and
//! JSONL files in a `.provenance.json` sidecar. A command loading an
//! upstream artifact stamped under a different config hash prints a
//! `StaleArtifact` warning naming the command to rerun.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Stamp {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Stamp { config_hash, seed, tool_version: TOOL_VERSION.to_string() }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "# config_hash={} seed={} tool_version={}",
            self.config_hash, self.seed, self.tool_version
        )
    }

    pub fn from_csv_line(line: &str) -> Option<Stamp> {
        let rest = line.strip_prefix('#')?.trim();
        let mut config_hash = None;
        let mut seed = None;
        let mut tool_version = None;
        for token in rest.split_whitespace() {
            if let Some(v) = token.strip_prefix("config_hash=") {
                config_hash = Some(v.to_string());
            } else if let Some(v) = token.strip_prefix("seed=") {
                seed = v.parse().ok();
            } else if let Some(v) = token.strip_prefix("tool_version=") {
                tool_version = Some(v.to_string());
            }
        }
        Some(Stamp { config_hash: config_hash?, seed: seed?, tool_version: tool_version? })
    }
}

/// Write a JSON artifact as `{"meta": stamp, ...value}`.
pub fn write_json_with_meta<T: Serialize>(
    path: &Path,
    stamp: &Stamp,
    value: &T,
) -> Result<(), CliError> {
    let mut object = match serde_json::to_value(value)
        .map_err(|e| CliError::Other(format!("serialize {}: {e}", path.display())))?
    {
        serde_json::Value::Object(map) => map,
        other => {
            let mut map = serde_json::Map::new();
            map.insert("data".into(), other);
            map
        }
    };
    object.insert(
        "meta".into(),
        serde_json::to_value(stamp).expect("stamp serializes"),
    );
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(object))
        .expect("object serializes");
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Other(format!("write {}: {e}", path.display())))?;
    Ok(())
}

/// Read a JSON artifact written by [`write_json_with_meta`], returning the
/// stamp and the remaining value.
pub fn read_json_with_meta<T: for<'de> Deserialize<'de>>(
    path: &Path,
    producer: &str,
) -> Result<(Stamp, T), CliError> {
    let text = read_upstream(path, producer)?;
    let mut object: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| CliError::Other(format!("parse {}: {e}", path.display())))?;
    let meta = object
        .remove("meta")
        .ok_or_else(|| CliError::Other(format!("{} has no meta stamp", path.display())))?;
    let stamp: Stamp = serde_json::from_value(meta)
        .map_err(|e| CliError::Other(format!("bad meta in {}: {e}", path.display())))?;
    let value: T = serde_json::from_value(serde_json::Value::Object(object))
        .map_err(|e| CliError::Other(format!("parse {}: {e}", path.display())))?;
    Ok((stamp, value))
}

/// Read an upstream artifact, mapping a missing file to an actionable error
/// naming the producing command.
pub fn read_upstream(path: &Path, producer: &str) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::Upstream {
            path: path.display().to_string(),
            producer: producer.to_string(),
        });
    }
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("read {}: {e}", path.display())))
}

pub fn require_upstream(path: &Path, producer: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Upstream {
            path: path.display().to_string(),
            producer: producer.to_string(),
        });
    }
    Ok(())
}

/// Warn (never fail) when an upstream stamp does not match the current
/// configuration.
pub fn check_stamp(found: &Stamp, current: &Stamp, path: &Path, producer: &str) {
    if found.config_hash != current.config_hash {
        eprintln!(
            "StaleArtifact: {} was produced under config {} (current {}); rerun `{}`",
            path.display(),
            found.config_hash,
            current.config_hash,
            producer
        );
    }
}

/// Check the stamp comment line of a CSV artifact.
pub fn check_csv_stamp(path: &Path, current: &Stamp, producer: &str) -> Result<(), CliError> {
    let text = read_upstream(path, producer)?;
    if let Some(first) = text.lines().next() {
        if let Some(stamp) = Stamp::from_csv_line(first) {
            check_stamp(&stamp, current, path, producer);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_stamp_round_trip() {
        let stamp = Stamp::new("abcd1234".into(), 42);
        let line = stamp.csv_line();
        let parsed = Stamp::from_csv_line(&line).unwrap();
        assert_eq!(parsed, stamp);
        assert!(Stamp::from_csv_line("id,field").is_none());
    }

    #[test]
    fn json_meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.json");
        let stamp = Stamp::new("ffff0000".into(), 7);
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Payload {
            value: i32,
        }
        write_json_with_meta(&path, &stamp, &Payload { value: 3 }).unwrap();
        let (got_stamp, got): (Stamp, Payload) = read_json_with_meta(&path, "litfield x").unwrap();
        assert_eq!(got_stamp, stamp);
        assert_eq!(got, Payload { value: 3 });
    }

    #[test]
    fn missing_upstream_names_producer() {
        let err = read_upstream(Path::new("/nonexistent/x.json"), "litfield metrics").unwrap_err();
        match err {
            CliError::Upstream { producer, .. } => assert_eq!(producer, "litfield metrics"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
