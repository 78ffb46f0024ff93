//! CSV encoding of fields and result tables, and atomic file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// A named-column numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Table {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    /// Builds a table from equal-length columns.
    pub fn from_columns(names: &[&str], cols: &[&[f64]]) -> Table {
        let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
        let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        Table { columns: names.iter().map(|s| s.to_string()).collect(), rows }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format_f64(*v))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64, CliError> {
    let t = s.trim();
    t.parse::<f64>().map_err(|_| CliError::Parse { line, message: format!("not a number: {t:?}") })
}

/// Parses a table with a header row and numeric cells.
pub fn parse_table(text: &str) -> Result<Table, CliError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| CliError::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(CliError::Parse { line: 1, message: "empty column name".into() });
    }
    let mut table = Table::new(header);
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            CliError::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec.iter().map(|c| parse_f64(c, line)).collect::<Result<Vec<_>, _>>()?;
        table.push(row);
    }
    Ok(table)
}

/// One row of `n` finite values.
pub fn field_to_csv(values: &[f64]) -> String {
    let mut s = values.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Parses a single-row field; `expected` pins the length when given.
pub fn parse_field_csv(text: &str, expected: Option<usize>) -> Result<Vec<f64>, CliError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = r.records();
    let rec = match rows.next() {
        Some(rec) => rec.map_err(|e| CliError::Parse { line: 1, message: e.to_string() })?,
        None => return Err(CliError::Parse { line: 1, message: "empty field".into() }),
    };
    if let Some(extra) = rows.next() {
        let line = extra.ok().and_then(|r| r.position().map(|p| p.line() as usize)).unwrap_or(2);
        return Err(CliError::Parse { line, message: "a field is a single row".into() });
    }
    let vals = rec.iter().map(|c| parse_f64(c, 1)).collect::<Result<Vec<_>, _>>()?;
    if let Some(n) = expected {
        if vals.len() != n {
            return Err(CliError::Parse { line: 1, message: format!("expected {n} values, got {}", vals.len()) });
        }
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Parse { line: 1, message: "field values must be finite".into() });
    }
    Ok(vals)
}

/// Writes via a temporary sibling and a rename, so readers never see partial files.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(contents).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
