//! CSV tables and the run manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
    Empty,
}

impl Cell {
    /// Finite values only; NaN and infinities become empty cells.
    pub fn num(x: f64) -> Self {
        if x.is_finite() { Self::Num(x) } else { Self::Empty }
    }

    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Self::Empty, Self::num)
    }

    fn render(&self) -> String {
        match self {
            Self::Num(x) => format!("{x:.16e}"),
            Self::Int(n) => n.to_string(),
            Self::Text(s) => s.clone(),
            Self::Flag(b) => b.to_string(),
            Self::Empty => String::new(),
        }
    }
}

/// `10·log10(x)`, empty for non-positive or vacuous values.
pub fn db(x: Option<f64>) -> Cell {
    Cell::opt(x.filter(|v| *v > 0.0).map(|v| 10.0 * v.log10()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<&'static str>) -> Self {
        Self { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        Ok(w.into_inner()?)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

pub const BUILD_ID: &str = env!("GABORMC_BUILD_ID");

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub build_id: &'a str,
    pub experiment: String,
    pub seed: u64,
    pub config: &'a serde_json::Value,
    pub files: Vec<String>,
    pub violations: &'a [String],
    pub created_unix_s: u64,
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    tables
        .iter()
        .map(|t| {
            let path = dir.join(t.file_name());
            std::fs::write(&path, t.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

pub fn write_manifest(dir: &Path, m: &Manifest<'_>) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
