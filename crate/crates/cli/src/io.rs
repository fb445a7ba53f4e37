//! CSV readers and writers. Comma-separated, '.' decimal, optional header
//! row; parse failures report the offending line.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::errors::{CliError, CliResult};

fn parse_field(raw: &str, path: &Path, line: usize) -> CliResult<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "{}: line {line}: cannot parse '{raw}' as a number",
            path.display()
        ))
    })
}

fn read_rows(path: &Path, header: bool) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let offset = if header { 2 } else { 1 };
    for (i, record) in reader.records().enumerate() {
        let line = i + offset;
        let record =
            record.map_err(|e| CliError::Data(format!("{}: line {line}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            if field.trim().is_empty() {
                return Err(CliError::Data(format!(
                    "{}: line {line}: empty field (dense data required)",
                    path.display()
                )));
            }
            row.push(parse_field(field, path, line)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

pub fn read_vector(path: &Path, header: bool) -> CliResult<DVector<f64>> {
    let rows = read_rows(path, header)?;
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 1 {
            return Err(CliError::Data(format!(
                "{}: line {}: expected one column, found {}",
                path.display(),
                i + if header { 2 } else { 1 },
                row.len()
            )));
        }
        values.push(row[0]);
    }
    Ok(DVector::from_vec(values))
}

pub fn read_matrix(path: &Path, header: bool) -> CliResult<DMatrix<f64>> {
    let rows = read_rows(path, header)?;
    let cols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(CliError::Data(format!(
                "{}: line {}: ragged row ({} fields, expected {cols})",
                path.display(),
                i + if header { 2 } else { 1 },
                row.len()
            )));
        }
    }
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

/// Formats a float with enough digits to round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    let short = format!("{v}");
    if short.parse::<f64>() == Ok(v) {
        short
    } else {
        format!("{v:.17e}")
    }
}

/// Writes one value per line; `header` adds a single name row.
pub fn write_vector_csv(path: &Path, header: Option<&str>, values: &[f64]) -> CliResult<()> {
    let mut out = String::with_capacity(values.len() * 12 + 16);
    if let Some(name) = header {
        out.push_str(name);
        out.push('\n');
    }
    for v in values {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m[(r, c)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
