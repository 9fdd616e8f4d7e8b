//! Delimited text tables keyed by `spot_id`, plus atomic file output.

use std::fmt::Write as _;
use std::fs;
use std::io::{Cursor, Write as _};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Raw contents of a table whose first column is `spot_id` and whose
/// remaining columns are reals.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub spot_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Tab-separated when the extension says so, or when the header has tabs
/// but no commas; comma-separated otherwise.
fn delimiter_for(path: &Path, first_line: &str) -> u8 {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("tsv") | Some("tab") => b'\t',
        Some("csv") => b',',
        _ if first_line.contains('\t') && !first_line.contains(',') => b'\t',
        _ => b',',
    }
}

fn open_records(path: &Path) -> Result<csv::Reader<Cursor<Vec<u8>>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let first_line = String::from_utf8_lossy(&bytes)
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path, &first_line))
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(Cursor::new(bytes)))
}

/// Reads a `spot_id,<col_1>,...` table. `expected` pins the value-column
/// names when the format fixes them.
pub fn read_numeric_table(path: &Path, expected: Option<&[&str]>) -> Result<NumericTable> {
    let mut reader = open_records(path)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(path, 1, e))?,
        None => {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: "file is empty".into(),
            })
        }
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.first().map(String::as_str) != Some("spot_id") {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!(
                "first column must be 'spot_id', found '{}'",
                names.first().cloned().unwrap_or_default()
            ),
        });
    }
    let columns = names[1..].to_vec();
    if columns.is_empty() {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "no value columns".into(),
        });
    }
    if let Some(expected) = expected {
        if columns.iter().map(String::as_str).ne(expected.iter().copied()) {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!(
                    "expected columns spot_id,{}, found spot_id,{}",
                    expected.join(","),
                    columns.join(",")
                ),
            });
        }
    }

    let mut spot_ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, line, e))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != columns.len() + 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!(
                    "dimension mismatch: expected {} fields, found {}",
                    columns.len() + 1,
                    rec.len()
                ),
            });
        }
        spot_ids.push(rec[0].to_string());
        let mut row = Vec::with_capacity(columns.len());
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("column {} ('{}'): not a number: '{field}'", j + 2, columns[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: spot_ids.len(),
                    col: j + 1,
                    context: path.display().to_string(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(NumericTable {
        columns,
        spot_ids,
        rows,
    })
}

/// Reads a `spot_id,label` file.
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let mut reader = open_records(path)?;
    let mut records = reader.records();
    let header = records
        .next()
        .transpose()
        .map_err(|e| csv_error(path, 1, e))?
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "file is empty".into(),
        })?;
    if header.iter().ne(["spot_id", "label"]) {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "expected 'spot_id,label'".into(),
        });
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, line, e))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let label = rec[1].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("label '{}' is not a nonnegative integer", &rec[1]),
        })?;
        ids.push(rec[0].to_string());
        labels.push(label);
    }
    Ok((ids, labels))
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: e.to_string(),
    }
}

/// Renders a numeric table in the comma-separated interchange format.
/// Values use the shortest representation that round-trips exactly.
pub fn format_numeric_table<'a, R: IntoIterator<Item = &'a f64>>(
    columns: &[String],
    spot_ids: &[String],
    rows: impl Iterator<Item = R>,
) -> String {
    let mut out = String::new();
    out.push_str("spot_id");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (id, row) in spot_ids.iter().zip(rows) {
        out.push_str(id);
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn format_labels(spot_ids: &[String], labels: &[usize]) -> String {
    let mut out = String::from("spot_id,label\n");
    for (id, l) in spot_ids.iter().zip(labels) {
        writeln!(out, "{id},{l}").unwrap();
    }
    out
}

/// Writes through a temporary sibling file and renames it into place, so a
/// reader never observes a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
