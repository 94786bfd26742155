//! One-shot CSV to binary conversion.
//!
//! Columns are numeric with the label last; an optional header row is
//! detected by its non-numeric cells. Rows stream straight into the binary
//! writer so only one row is ever materialized. Missing or non-finite
//! values are rejected.

use std::path::Path;

use crate::data::{binary, Labels, RowBlock, Task, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub n_rows: u64,
    pub n_features: u32,
    /// Class count (0 for regression).
    pub k: u32,
}

pub fn ingest_csv(input: &Path, output: &Path, kind: TaskKind) -> Result<IngestSummary> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(input)
        .map_err(csv_open_error)?;

    let mut records = reader.records();
    let first = match records.next() {
        Some(rec) => rec.map_err(|e| csv_record_error(1, e))?,
        None => {
            return Err(Error::Parse {
                row: 1,
                msg: "empty file".into(),
            })
        }
    };
    if first.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            msg: format!(
                "need at least one feature column and a label, found {} column(s)",
                first.len()
            ),
        });
    }
    let n_features = (first.len() - 1) as u32;

    let placeholder_task = match kind {
        TaskKind::Classification => Task::Classification { n_classes: 1 },
        TaskKind::Regression => Task::Regression,
    };
    let mut writer = binary::StreamWriter::create(output, placeholder_task, n_features)?;
    let mut max_class = 0u32;
    let mut saw_row = false;

    // The first record doubles as header detection: any non-numeric cell
    // means it is a header row and data starts at row 2.
    if let Some(parsed) = parse_row(&first, n_features, kind, 1).transpose() {
        let (block, class) = parsed?;
        writer.append_block(&block)?;
        max_class = max_class.max(class);
        saw_row = true;
    }

    let mut row_no = 1u64;
    for rec in records {
        row_no += 1;
        let rec = rec.map_err(|e| csv_record_error(row_no, e))?;
        if rec.len() as u32 != n_features + 1 {
            return Err(Error::Parse {
                row: row_no,
                msg: format!("expected {} columns, found {}", n_features + 1, rec.len()),
            });
        }
        match parse_row(&rec, n_features, kind, row_no)? {
            Some((block, class)) => {
                writer.append_block(&block)?;
                max_class = max_class.max(class);
                saw_row = true;
            }
            None => {
                return Err(Error::Parse {
                    row: row_no,
                    msg: "non-numeric cell".into(),
                })
            }
        }
    }

    if !saw_row {
        return Err(Error::Parse {
            row: 1,
            msg: "no data rows (header only)".into(),
        });
    }

    let k = match kind {
        TaskKind::Classification => max_class + 1,
        TaskKind::Regression => 0,
    };
    let n_rows = writer.finish(match kind {
        TaskKind::Classification => Some(k),
        TaskKind::Regression => None,
    })?;
    Ok(IngestSummary {
        n_rows,
        n_features,
        k,
    })
}

/// Parse one record into a single-row block. Returns `Ok(None)` when the
/// record is non-numeric (candidate header).
fn parse_row(
    rec: &csv::StringRecord,
    n_features: u32,
    kind: TaskKind,
    row_no: u64,
) -> Result<Option<(RowBlock, u32)>> {
    let d = n_features as usize;
    let mut features = Vec::with_capacity(d);
    for cell in rec.iter().take(d) {
        let cell = cell.trim();
        if cell.is_empty() {
            return Err(Error::Parse {
                row: row_no,
                msg: "missing value".into(),
            });
        }
        match cell.parse::<f32>() {
            Ok(v) if v.is_finite() => features.push(v),
            Ok(_) => {
                return Err(Error::Parse {
                    row: row_no,
                    msg: format!("non-finite feature value {cell:?}"),
                })
            }
            Err(_) => return Ok(None),
        }
    }
    let label_cell = rec.get(d).unwrap_or("").trim();
    if label_cell.is_empty() {
        return Err(Error::Parse {
            row: row_no,
            msg: "missing label".into(),
        });
    }
    match kind {
        TaskKind::Classification => {
            let value: f64 = match label_cell.parse() {
                Ok(v) => v,
                Err(_) => return Ok(None),
            };
            if value.fract() != 0.0 || value < 0.0 || value > u32::MAX as f64 {
                return Err(Error::Schema(format!(
                    "row {row_no}: class label {label_cell:?} is not a non-negative integer"
                )));
            }
            let class = value as u32;
            let block = RowBlock::from_parts(d, features, Labels::Class(vec![class]));
            Ok(Some((block, class)))
        }
        TaskKind::Regression => {
            let value = match label_cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                Ok(_) => {
                    return Err(Error::Parse {
                        row: row_no,
                        msg: format!("non-finite label {label_cell:?}"),
                    })
                }
                Err(_) => return Ok(None),
            };
            let block = RowBlock::from_parts(d, features, Labels::Value(vec![value]));
            Ok(Some((block, 0)))
        }
    }
}

fn csv_open_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row: 0,
            msg: format!("{other:?}"),
        },
    }
}

fn csv_record_error(row: u64, e: csv::Error) -> Error {
    Error::Parse {
        row,
        msg: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{open_dataset, DataFormat};
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn three_row_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_file(
            &dir,
            "t.csv",
            "a,b,label\n1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n",
        );
        let out = dir.path().join("t.cnpy");
        let summary = ingest_csv(&input, &out, TaskKind::Classification).unwrap();
        assert_eq!(summary.n_rows, 3);
        assert_eq!(summary.n_features, 2);
        assert_eq!(summary.k, 2);

        let handle = open_dataset(&out, DataFormat::Binary, None, 16).unwrap();
        assert_eq!(handle.n_rows(), 3);
        assert_eq!(handle.n_features(), 2);
    }

    #[test]
    fn empty_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_file(&dir, "empty.csv", "");
        let out = dir.path().join("empty.cnpy");
        match ingest_csv(&input, &out, TaskKind::Classification) {
            Err(Error::Parse { row: 1, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_cites_row() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_file(&dir, "bad.csv", "1.0,2.0,0\n3.0,oops,1\n");
        let out = dir.path().join("bad.cnpy");
        match ingest_csv(&input, &out, TaskKind::Classification) {
            Err(Error::Parse { row: 2, .. }) => {}
            other => panic!("expected parse error at row 2, got {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_cites_row() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_file(&dir, "arity.csv", "1.0,2.0,0\n3.0,1\n");
        let out = dir.path().join("arity.cnpy");
        match ingest_csv(&input, &out, TaskKind::Classification) {
            Err(Error::Parse { row: 2, msg }) => assert!(msg.contains("columns")),
            other => panic!("expected parse error at row 2, got {other:?}"),
        }
    }

    #[test]
    fn missing_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_file(&dir, "missing.csv", "1.0,,0\n");
        let out = dir.path().join("missing.cnpy");
        match ingest_csv(&input, &out, TaskKind::Classification) {
            Err(Error::Parse { row: 1, msg }) => assert!(msg.contains("missing")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fractional_class_label_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_file(&dir, "frac.csv", "1.0,2.0,0\n3.0,4.0,1.5\n");
        let out = dir.path().join("frac.cnpy");
        match ingest_csv(&input, &out, TaskKind::Classification) {
            Err(Error::Schema(msg)) => assert!(msg.contains("row 2")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn regression_labels_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_file(&dir, "r.csv", "1.0,0.5\n2.0,-3.25\n");
        let out = dir.path().join("r.cnpy");
        let summary = ingest_csv(&input, &out, TaskKind::Regression).unwrap();
        assert_eq!(summary.n_rows, 2);
        assert_eq!(summary.k, 0);
        let handle = open_dataset(&out, DataFormat::Binary, None, 16).unwrap();
        let block = handle.read_all().unwrap();
        assert_eq!(block.labels().value(1), -3.25);
    }
}
