//! CSV tables and JSON summaries. Every CSV row ends with the config hash
//! and the code version; floats are written with 17 significant digits so
//! that reruns can be compared byte for byte.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::I(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) if x.is_nan() => "nan".into(),
            Cell::F(x) => format!("{x:.17e}"),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// Row-by-row CSV writer that appends the provenance columns.
pub struct Table {
    writer: csv::Writer<File>,
    width: usize,
    hash: String,
    path: PathBuf,
}

impl Table {
    pub fn create(path: &Path, columns: &[&str], cfg: &ExperimentConfig) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = columns.to_vec();
        header.extend(["config_hash", "version"]);
        writer.write_record(&header)?;
        Ok(Self {
            writer,
            width: columns.len(),
            hash: cfg.hash(),
            path: path.to_path_buf(),
        })
    }

    pub fn row(&mut self, cells: Vec<Cell>) -> Result<()> {
        assert_eq!(cells.len(), self.width, "row width does not match the header of {}", self.path.display());
        let mut rec: Vec<String> = cells.iter().map(Cell::render).collect();
        rec.push(self.hash.clone());
        rec.push(VERSION.to_string());
        self.writer.write_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    experiment: &'a str,
    config_hash: String,
    version: &'a str,
    config: &'a ExperimentConfig,
    results: &'a T,
}

/// Writes `<name>.json` with the full configuration and `results`.
pub fn write_summary<T: Serialize>(dir: &Path, name: &str, cfg: &ExperimentConfig, results: &T) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.json"));
    let s = Summary {
        experiment: name,
        config_hash: cfg.hash(),
        version: VERSION,
        config: cfg,
        results,
    };
    std::fs::write(&path, serde_json::to_string_pretty(&s)? + "\n")?;
    Ok(path)
}
