//! Run directory with CSV tables and JSON reports.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Where a reported number comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Measured,
    PaperBound,
    Schedule,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::PaperBound => "paper-bound",
            Provenance::Schedule => "schedule",
        }
    }
}

/// Shortest round-trip formatting, so identical runs give identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Table whose last column is the provenance of the row's value.
#[derive(Clone, Debug)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(index: &[&str]) -> Self {
        let mut header: Vec<String> = index.iter().map(|s| s.to_string()).collect();
        header.push("provenance".into());
        Self { header, rows: vec![] }
    }

    pub fn push(&mut self, fields: Vec<String>, prov: Provenance) {
        debug_assert_eq!(fields.len() + 1, self.header.len());
        let mut row = fields;
        row.push(prov.as_str().into());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    /// Creates `<base>/<name>-<mode>-<timestamp>`, suffixed when it exists.
    pub fn create(base: &Path, name: &str, mode: &str) -> Result<Self> {
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
        let stem = format!("{name}-{mode}-{stamp}");
        let mut dir = base.join(&stem);
        let mut i = 1;
        while dir.exists() {
            dir = base.join(format!("{stem}-{i}"));
            i += 1;
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, files: vec![] })
    }

    pub fn table(&mut self, file: &str, table: &Table) -> Result<()> {
        let path = self.dir.join(file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.files.push(file.into());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let path = self.dir.join(file);
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        self.files.push(file.into());
        Ok(())
    }

    pub fn text(&mut self, file: &str, text: &str) -> Result<()> {
        let path = self.dir.join(file);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(file.into());
        Ok(())
    }
}
