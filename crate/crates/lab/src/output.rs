//! CSV and JSON writers. Floats are written as `{:.17e}` so reruns are byte identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{LabError, LabResult};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

/// Accumulates rows then writes them with a fixed header.
#[derive(Debug)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> LabResult<()> {
        let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))
    }
}

/// Output directory of one scenario run; records every file it writes.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    written: Vec<String>,
}

impl RunDir {
    pub fn create(out_dir: &Path, name: &str) -> LabResult<Self> {
        let root = out_dir.join(name);
        fs::create_dir_all(&root).map_err(|e| LabError::io(&root, e))?;
        Ok(Self { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&mut self, file: &str) -> PathBuf {
        self.written.push(file.to_string());
        self.root.join(file)
    }

    pub fn table(&mut self, file: &str, table: &Table) -> LabResult<()> {
        let path = self.path(file);
        table.write(&path)
    }

    pub fn json(&mut self, file: &str, value: &Value) -> LabResult<()> {
        let path = self.path(file);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| LabError::io(&path, e))
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip_through_text() {
        for x in [0.1, -1.0 / 3.0, 6.02e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn table_writes_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        let path = dir.path().join("t.csv");
        t.write(&path).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "a,b\n1,5.00000000000000000e-1\n");
    }
}
