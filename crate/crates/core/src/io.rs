//! Binary persistence for coefficient fields and named field bundles.
//!
//! Field files start with `HOMLAB-FIELD-v1\n` and a header line
//! `dim n h topology lambda seed`, followed by little-endian `f64` values,
//! faces ordered by (axis, index), `d*d` row-major entries per face.
//!
//! Bundles start with `HOMLAB-BUNDLE-v1\n` and a header line
//! `dim n h topology entries`; each entry is a line `name len` followed by
//! `len` little-endian `f64` values.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::{Grid, Topology};
use crate::scalar::Real;

pub const FIELD_MAGIC: &str = "HOMLAB-FIELD-v1";
pub const BUNDLE_MAGIC: &str = "HOMLAB-BUNDLE-v1";

fn write_f64s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    let mut filled = 0;
    while filled < bytes.len() {
        match r.read(&mut bytes[filled..])? {
            0 => {
                return Err(Error::Format(format!("{what}: truncated after {} of {count} values", filled / 8)));
            }
            k => filled += k,
        }
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

fn read_line(r: &mut impl BufRead, what: &str) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Format(format!("{what}: unexpected end of file")));
    }
    Ok(line.trim_end_matches('\n').to_string())
}

fn parse<V: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<V> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Format(format!("bad or missing {what}")))
}

fn parse_grid(toks: &mut std::str::SplitWhitespace<'_>) -> Result<Grid> {
    let dim: usize = parse(toks.next(), "dim")?;
    let n: usize = parse(toks.next(), "n")?;
    let h: f64 = parse(toks.next(), "h")?;
    let topo = toks.next().and_then(Topology::parse).ok_or_else(|| Error::Format("bad topology".into()))?;
    Grid::new(dim, n, h, topo).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_field<T: Real>(w: &mut impl Write, field: &CoefficientField<T>) -> Result<()> {
    let g = field.grid();
    writeln!(w, "{FIELD_MAGIC}")?;
    writeln!(w, "{} {} {} {} {} {}", g.dim(), g.n(), g.h(), g.topology().as_str(), field.lambda().as_f64(), field.seed())?;
    for k in 0..g.dim() {
        write_f64s(w, field.face_data(k).iter().map(|v| v.as_f64()))?;
    }
    Ok(())
}

pub fn read_field<T: Real>(r: &mut impl BufRead) -> Result<CoefficientField<T>> {
    if read_line(r, "field")? != FIELD_MAGIC {
        return Err(Error::Format(format!("missing {FIELD_MAGIC} magic")));
    }
    let header = read_line(r, "field header")?;
    let mut toks = header.split_whitespace();
    let grid = parse_grid(&mut toks)?;
    let lambda: f64 = parse(toks.next(), "lambda")?;
    let seed: u64 = parse(toks.next(), "seed")?;
    let d = grid.dim();
    let mut faces = Vec::with_capacity(d);
    for k in 0..d {
        let vals = read_f64s(r, grid.faces(k).len() * d * d, &format!("face axis {k}"))?;
        faces.push(vals.into_iter().map(T::lit).collect());
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after field data".into()));
    }
    CoefficientField::from_faces(grid, T::lit(lambda), seed, faces).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_field<T: Real>(path: &Path, field: &CoefficientField<T>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load_field<T: Real>(path: &Path) -> Result<CoefficientField<T>> {
    read_field(&mut BufReader::new(std::fs::File::open(path)?))
}

/// Named flat arrays attached to a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub grid: Grid,
    pub entries: Vec<(String, Vec<f64>)>,
}

impl Bundle {
    pub fn new(grid: Grid) -> Self {
        Self { grid, entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.entries.push((name.into(), values));
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Format(format!("bundle has no entry {name:?}")))
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let g = &self.grid;
        writeln!(w, "{BUNDLE_MAGIC}")?;
        writeln!(w, "{} {} {} {} {}", g.dim(), g.n(), g.h(), g.topology().as_str(), self.entries.len())?;
        for (name, vals) in &self.entries {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("bad bundle entry name {name:?}")));
            }
            writeln!(w, "{name} {}", vals.len())?;
            write_f64s(w, vals.iter().copied())?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl BufRead) -> Result<Self> {
        if read_line(r, "bundle")? != BUNDLE_MAGIC {
            return Err(Error::Format(format!("missing {BUNDLE_MAGIC} magic")));
        }
        let header = read_line(r, "bundle header")?;
        let mut toks = header.split_whitespace();
        let grid = parse_grid(&mut toks)?;
        let count: usize = parse(toks.next(), "entry count")?;
        let mut out = Bundle::new(grid);
        for i in 0..count {
            let line = read_line(r, &format!("entry {i}"))?;
            let mut t = line.split_whitespace();
            let name: String = parse(t.next(), "entry name")?;
            let len: usize = parse(t.next(), "entry length")?;
            let vals = read_f64s(r, len, &name)?;
            out.push(name, vals);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut BufReader::new(std::fs::File::open(path)?))
    }
}
