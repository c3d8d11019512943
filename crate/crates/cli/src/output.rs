//! CSV and plot-data writers.
//!
//! Every file starts with `# config_hash=<sha256> seed=<u64> version=<semver>`.
//! Floats are written with `{:.16e}`, which round-trips every `f64`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Two columns for plotting, written as whitespace-separated text.
#[derive(Debug, Clone)]
pub struct PlotData {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct OutputDir {
    dir: PathBuf,
    header: String,
}

impl OutputDir {
    pub fn create(dir: &Path, config_hash: &str, seed: u64) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let header = format!(
            "# config_hash={config_hash} seed={seed} version={}",
            env!("CARGO_PKG_VERSION")
        );
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
        })
    }

    pub fn write_table(&self, t: &Table) -> io::Result<PathBuf> {
        let path = self.dir.join(format!("{}.csv", t.name));
        let mut file = io::BufWriter::new(fs::File::create(&path)?);
        writeln!(file, "{}", self.header)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&t.columns)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_plot(&self, p: &PlotData) -> io::Result<PathBuf> {
        let path = self.dir.join(format!("{}.dat", p.name));
        let mut w = io::BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "{}", self.header)?;
        writeln!(w, "# {} {}", p.x_label, p.y_label)?;
        for (x, y) in &p.points {
            writeln!(w, "{} {}", float(*x), float(*y))?;
        }
        w.flush()?;
        Ok(path)
    }
}
