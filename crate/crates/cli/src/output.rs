//! CSV files with a leading metadata comment, and reading layouts back.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use sensoralloc::SensorLayout;

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug)]
pub struct CsvSink {
    pub dir: PathBuf,
    pub seed: u64,
    pub scenario_hash: String,
}

impl CsvSink {
    pub fn new(dir: &Path, seed: u64, scenario_hash: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), seed, scenario_hash })
    }

    pub fn metadata(&self) -> String {
        format!("# sensoralloc {VERSION} seed={} scenario_sha256={}", self.seed, self.scenario_hash)
    }

    pub fn write<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.dir.join(name);
        let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
        let mut file = File::create(&path).map_err(io)?;
        writeln!(file, "{}", self.metadata()).map_err(io)?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row.into_iter()).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    /// `key,value` rows.
    pub fn write_report(&self, name: &str, entries: &[(String, String)]) -> Result<PathBuf, CliError> {
        self.write(name, &["key", "value"], entries.iter().map(|(k, v)| [k.clone(), v.clone()]))
    }

    pub fn write_layout(&self, name: &str, layout: &SensorLayout) -> Result<PathBuf, CliError> {
        self.write(name, &["sensor_index", "x", "y"], layout_rows(layout))
    }
}

pub fn layout_rows(layout: &SensorLayout) -> impl Iterator<Item = [String; 3]> + '_ {
    layout.positions.iter().enumerate().map(|(i, p)| [i.to_string(), num(p[0]), num(p[1])])
}

/// Reads a CSV written by this tool (or any CSV with a header), skipping `#` lines.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let bad = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(bad)?;
    let header: Vec<String> = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(bad)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn column(header: &[String], name: &str, path: &Path) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Input(format!("{}: missing column `{name}`", path.display())))
}

pub fn parse_f64(cell: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    cell.trim().parse().map_err(|_| CliError::Input(format!("{}: row {line}: `{cell}` is not a number", path.display())))
}

pub fn parse_usize(cell: &str, path: &Path, line: usize) -> Result<usize, CliError> {
    cell.trim().parse().map_err(|_| CliError::Input(format!("{}: row {line}: `{cell}` is not an index", path.display())))
}

/// Reads `(sensor_index, x, y)` rows in index order.
pub fn read_layout(path: &Path) -> Result<SensorLayout, CliError> {
    let (header, rows) = read_table(path)?;
    let (ci, cx, cy) = (column(&header, "sensor_index", path)?, column(&header, "x", path)?, column(&header, "y", path)?);
    let mut points = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        points.push((parse_usize(&row[ci], path, line + 1)?, [parse_f64(&row[cx], path, line + 1)?, parse_f64(&row[cy], path, line + 1)?]));
    }
    points.sort_by_key(|p| p.0);
    if points.iter().enumerate().any(|(i, p)| p.0 != i) {
        return Err(CliError::Input(format!("{}: sensor indices must be 0..n without gaps", path.display())));
    }
    SensorLayout::new(points.into_iter().map(|p| p.1).collect()).map_err(|e| CliError::Input(e.to_string()))
}
