//! CSV ingestion.

use std::path::Path;

use super::CliError;
use crate::linalg::Matrix;

/// A CSV file with a header row, kept as text until columns are requested.
#[derive(Debug, Clone)]
pub struct DataTable {
    pub headers: Vec<String>,
    rows: Vec<Vec<String>>,
    lines: Vec<u64>,
    source: String,
}

impl DataTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let source = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Usage(format!("cannot read {source}: {e}")))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| csv_usage(&source, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().any(String::is_empty) {
            return Err(CliError::Usage(format!("{source}: line 1: header row has an empty column name")));
        }
        if let Some(dup) = headers.iter().enumerate().find(|(i, h)| headers[..*i].contains(h)) {
            return Err(CliError::Usage(format!("{source}: line 1: duplicate column {:?}", dup.1)));
        }
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_usage(&source, e))?;
            lines.push(record.position().map_or(0, |p| p.line()));
            rows.push(record.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(CliError::Usage(format!("{source}: no data rows")));
        }
        Ok(Self { headers, rows, lines, source })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("{}: no column named {name:?}", self.source)))
    }

    /// The listed columns parsed as numbers, one row per observation.
    pub fn numeric(&self, columns: &[usize]) -> Result<Matrix, CliError> {
        let mut m = Matrix::zeros(self.rows.len(), columns.len());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &c) in columns.iter().enumerate() {
                let field = &row[c];
                m[(i, j)] = parse_number(field).ok_or_else(|| {
                    CliError::Usage(format!(
                        "{}: line {}, field {:?}: {field:?} is not a finite number",
                        self.source, self.lines[i], self.headers[c]
                    ))
                })?;
            }
        }
        Ok(m)
    }

    pub fn strings(&self, column: usize) -> Vec<String> {
        self.rows.iter().map(|r| r[column].clone()).collect()
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn csv_usage(source: &str, e: csv::Error) -> CliError {
    let line = e.position().map(|p| format!(": line {}", p.line())).unwrap_or_default();
    CliError::Usage(format!("{source}{line}: {e}"))
}

/// A numeric matrix stored as CSV without a header row.
pub fn read_matrix_file(path: &Path) -> Result<Matrix, CliError> {
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {source}: {e}")))?;
    let mut values = Vec::new();
    let mut cols = 0;
    let mut nrows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_usage(&source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        cols = record.len();
        for (j, field) in record.iter().enumerate() {
            values.push(parse_number(field).ok_or_else(|| {
                CliError::Usage(format!("{source}: line {line}, field {}: {field:?} is not a finite number", j + 1))
            })?);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(CliError::Usage(format!("{source}: empty matrix file")));
    }
    Ok(Matrix::from_row_slice(nrows, cols, &values))
}
