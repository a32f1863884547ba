//! Sample files: UTF-8 CSV, one sample per row, an optional header row.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use klnn::neighbors::PointCloud;

use crate::CliError;

/// Reads a sample file. The first row is a header when any of its fields is
/// not a number.
pub fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_cloud(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn parse_cloud(text: &str) -> Result<PointCloud, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if rows == 0 && width.is_none() && parsed.iter().any(Result::is_err) {
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(format!("line {line}: expected {w} columns, found {}", record.len()));
            }
            _ => width = Some(record.len()),
        }
        for (col, value) in parsed.into_iter().enumerate() {
            let v = value.map_err(|_| format!("line {line}, column {}: '{}' is not a number", col + 1, &record[col]))?;
            if !v.is_finite() {
                return Err(format!("line {line}, column {}: non-finite value", col + 1));
            }
            data.push(v);
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    if rows == 0 {
        return Err("no samples".into());
    }
    PointCloud::new(rows, d, data).map_err(|e| e.to_string())
}

/// Writes one sample per row with a header. Values use the shortest decimal
/// form that reads back to the same `f64`.
pub fn write_cloud(path: &Path, cloud: &PointCloud, header: &[String]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let mut text = String::new();
    format_cloud(&mut text, cloud, header);
    out.write_all(text.as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn format_cloud(text: &mut String, cloud: &PointCloud, header: &[String]) {
    use std::fmt::Write as _;
    text.push_str(&header.join(","));
    text.push('\n');
    for row in cloud.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                text.push(',');
            }
            write!(text, "{v:?}").expect("writing to a string");
        }
        text.push('\n');
    }
}

/// Column names `x1..xp, y1..yq`.
pub fn xy_header(d: usize, dims_x: usize) -> Vec<String> {
    (0..d)
        .map(|j| if j < dims_x { format!("x{}", j + 1) } else { format!("y{}", j - dims_x + 1) })
        .collect()
}
