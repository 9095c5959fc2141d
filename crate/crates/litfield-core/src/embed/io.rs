//! Matrix and vocabulary file formats.
//!
//! A matrix file starts with one JSON header line
//! `{"embedder_id": .., "n": .., "d": .., "ids": [..]}` followed by the rows:
//! either `n` text lines of `d` space-separated decimals printed at 17
//! significant digits (exact `f64` round trip), or `n × d` little-endian
//! 32-bit floats in the binary variant. Vocabulary files are one token per
//! line, UTF-8.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingSet, Vocabulary};

/// Row encoding of a matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Text,
    Binary,
}

#[derive(Serialize, Deserialize)]
struct Header {
    embedder_id: String,
    n: usize,
    d: usize,
    ids: Vec<String>,
}

/// Format a float with 17 significant digits, enough for exact round trips.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix<W: Write>(
    set: &EmbeddingSet,
    format: MatrixFormat,
    mut w: W,
) -> Result<(), EmbedError> {
    let header = Header {
        embedder_id: set.embedder_id().to_string(),
        n: set.len(),
        d: set.dim(),
        ids: set.ids().to_vec(),
    };
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| EmbedError::Format { line: 1, message: e.to_string() })?;
    w.write_all(b"\n")?;
    match format {
        MatrixFormat::Text => {
            let mut line = String::new();
            for i in 0..set.len() {
                line.clear();
                for (c, v) in set.row(i).iter().enumerate() {
                    if c > 0 {
                        line.push(' ');
                    }
                    line.push_str(&format_f64(*v));
                }
                line.push('\n');
                w.write_all(line.as_bytes())?;
            }
        }
        MatrixFormat::Binary => {
            for i in 0..set.len() {
                for v in set.row(i).iter() {
                    w.write_all(&(*v as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Load a matrix file. The returned set keeps the caller's `embedder_id`
/// (the header's id is provenance only) and is not yet normalized.
pub fn read_matrix<R: BufRead>(
    mut r: R,
    embedder_id: &str,
    format: MatrixFormat,
) -> Result<EmbeddingSet, EmbedError> {
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: Header = serde_json::from_str(header_line.trim_end())
        .map_err(|e| EmbedError::Format { line: 1, message: e.to_string() })?;
    if header.ids.len() != header.n {
        return Err(EmbedError::Format {
            line: 1,
            message: format!("header declares n={} but lists {} ids", header.n, header.ids.len()),
        });
    }

    let data = match format {
        MatrixFormat::Text => {
            let mut data = Vec::with_capacity(header.n * header.d);
            let mut rows_read = 0usize;
            for (lineno, line) in r.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                rows_read += 1;
                if rows_read > header.n {
                    return Err(EmbedError::Format {
                        line: lineno + 2,
                        message: format!("more than the declared {} rows", header.n),
                    });
                }
                let row_start = data.len();
                for tok in line.split_ascii_whitespace() {
                    let v: f64 = tok.parse().map_err(|e| EmbedError::Format {
                        line: lineno + 2,
                        message: format!("bad float {tok:?}: {e}"),
                    })?;
                    data.push(v);
                }
                let got = data.len() - row_start;
                if got != header.d {
                    return Err(EmbedError::Format {
                        line: lineno + 2,
                        message: format!("row has {got} values, header declares d={}", header.d),
                    });
                }
            }
            if rows_read != header.n {
                return Err(EmbedError::Format {
                    line: rows_read + 1,
                    message: format!("found {rows_read} rows, header declares n={}", header.n),
                });
            }
            data
        }
        MatrixFormat::Binary => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            let expected = header.n * header.d * 4;
            if bytes.len() != expected {
                return Err(EmbedError::Format {
                    line: 2,
                    message: format!(
                        "binary body has {} bytes, expected {expected}",
                        bytes.len()
                    ),
                });
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect()
        }
    };

    EmbeddingSet::from_dense(embedder_id, header.ids, header.d, data)
}

pub fn save_matrix(set: &EmbeddingSet, format: MatrixFormat, path: &Path) -> Result<(), EmbedError> {
    let file = std::fs::File::create(path)?;
    write_matrix(set, format, std::io::BufWriter::new(file))
}

pub fn load_matrix(
    path: &Path,
    embedder_id: &str,
    format: MatrixFormat,
) -> Result<EmbeddingSet, EmbedError> {
    let file = std::fs::File::open(path)?;
    read_matrix(std::io::BufReader::new(file), embedder_id, format)
}

/// Import an externally computed embedding matrix (text format by default).
pub fn import_external(path: &Path, embedder_id: &str) -> Result<EmbeddingSet, EmbedError> {
    load_matrix(path, embedder_id, MatrixFormat::Text)
}

pub fn write_vocabulary<W: Write>(vocab: &Vocabulary, mut w: W) -> Result<(), EmbedError> {
    for token in vocab.tokens() {
        writeln!(w, "{token}")?;
    }
    Ok(())
}

pub fn read_vocabulary<R: BufRead>(r: R, field_label: &str) -> Result<Vocabulary, EmbedError> {
    let mut tokens = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.is_empty() {
            tokens.push(line);
        }
    }
    Ok(Vocabulary::from_tokens(field_label, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn small_matrix_round_trip() {
        let set = EmbeddingSet::from_rows(
            "t",
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix(&set, MatrixFormat::Text, &mut buf).unwrap();
        let got = read_matrix(std::io::Cursor::new(&buf), "t", MatrixFormat::Text).unwrap();
        assert_eq!(got.ids(), set.ids());
        assert_eq!(got.row(1).as_ref(), set.row(1).as_ref());
    }

    #[test]
    fn short_row_is_a_format_error() {
        let text = "{\"embedder_id\":\"t\",\"n\":1,\"d\":3,\"ids\":[\"a\"]}\n1.0 2.0\n";
        match read_matrix(std::io::Cursor::new(text), "t", MatrixFormat::Text) {
            Err(EmbedError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = "{\"embedder_id\":\"t\",\"n\":2,\"d\":1,\"ids\":[\"a\",\"a\"]}\n1.0\n2.0\n";
        assert!(matches!(
            read_matrix(std::io::Cursor::new(text), "t", MatrixFormat::Text),
            Err(EmbedError::DuplicateId(_))
        ));
    }

    #[test]
    fn random_round_trip_is_bit_identical() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..17)
            .map(|_| (0..9).map(|_| rng.gen::<f64>() * 2e3 - 1e3).collect())
            .collect();
        let ids: Vec<String> = (0..17).map(|i| format!("p{i}")).collect();
        let set = EmbeddingSet::from_rows("rt", ids, rows).unwrap();
        let mut buf = Vec::new();
        write_matrix(&set, MatrixFormat::Text, &mut buf).unwrap();
        let got = read_matrix(std::io::Cursor::new(&buf), "rt", MatrixFormat::Text).unwrap();
        for i in 0..set.len() {
            let (a, b) = (set.row(i), got.row(i));
            for c in 0..set.dim() {
                assert_eq!(a[c].to_bits(), b[c].to_bits(), "row {i} col {c}");
            }
        }
    }

    #[test]
    fn binary_round_trip_of_f32_values() {
        let rows = vec![vec![0.5f64, -2.25, 1024.0], vec![0.125, 3.5, -0.75]];
        let set = EmbeddingSet::from_rows("bin", vec!["a".into(), "b".into()], rows).unwrap();
        let mut buf = Vec::new();
        write_matrix(&set, MatrixFormat::Binary, &mut buf).unwrap();
        let got = read_matrix(std::io::Cursor::new(&buf), "bin", MatrixFormat::Binary).unwrap();
        assert_eq!(got.row(0).as_ref(), set.row(0).as_ref());
        assert_eq!(got.row(1).as_ref(), set.row(1).as_ref());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let vocab = Vocabulary::from_tokens("F", vec!["beta".into(), "alpha".into(), "γ".into()]);
        let mut buf = Vec::new();
        write_vocabulary(&vocab, &mut buf).unwrap();
        let got = read_vocabulary(std::io::Cursor::new(&buf), "F").unwrap();
        assert_eq!(got, vocab);
    }
}
