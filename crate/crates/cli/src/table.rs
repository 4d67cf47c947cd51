//! CSV tables with shortest round-trip number formatting.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// Missing values are written as `NA`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), num)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| CliError::Csv { file: path.to_path_buf(), line: 0, message: e.to_string() };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CliError::MissingOutput(path.to_path_buf()));
        }
        let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, &e))?;
        let header = rd.headers().map_err(|e| csv_error(path, &e))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| csv_error(path, &e))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str, file: &Path) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| CliError::Csv {
            file: file.to_path_buf(),
            line: 1,
            message: format!("no column {name:?}"),
        })
    }

    /// Numeric cell; `NA` reads as NaN. Data rows start on line 2.
    pub fn value(&self, row: usize, col: usize, file: &Path) -> Result<f64> {
        let cell = &self.rows[row][col];
        if cell == "NA" {
            return Ok(f64::NAN);
        }
        cell.parse().map_err(|_| CliError::Csv {
            file: file.to_path_buf(),
            line: row as u64 + 2,
            message: format!("column {:?}: {cell:?} is not a number", self.header[col]),
        })
    }

    pub fn numeric_column(&self, name: &str, file: &Path) -> Result<Vec<f64>> {
        let c = self.column(name, file)?;
        (0..self.rows.len()).map(|r| self.value(r, c, file)).collect()
    }
}

fn csv_error(path: &Path, e: &csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::Csv { file: PathBuf::from(path), line, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Table::new(&["r", "v"]);
        t.push(vec![num(8.0), num(0.1 + 0.2)]);
        t.push(vec![num(16.0), opt(None)]);
        t.write(&p).unwrap();
        let back = Table::read(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.numeric_column("v", &p).unwrap()[0], 0.1 + 0.2);
        assert!(back.numeric_column("v", &p).unwrap()[1].is_nan());

        std::fs::write(&p, "r,v\n8,1\n16,oops\n").unwrap();
        let bad = Table::read(&p).unwrap();
        match bad.numeric_column("v", &p) {
            Err(CliError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "r,v\n8,1,3\n").unwrap();
        match Table::read(&p) {
            Err(CliError::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
