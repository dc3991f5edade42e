//! CSV tables and the run manifest.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const CORR_TIMESERIES: [&str; 6] = ["t", "j", "re", "im", "abs", "stderr"];
pub const CORR_MATRIX: [&str; 6] = ["t", "i", "j", "re", "im", "abs"];
pub const STRUCTURE_FACTOR: [&str; 4] = ["t", "n", "qa", "value"];
pub const SPECTRUM: [&str; 2] = ["re", "im"];
pub const PROJECTION: [&str; 6] = ["block", "i", "j", "re", "im", "abs"];
pub const CONSERVED: [&str; 5] = ["t", "eta_pair", "n_up", "n_down", "s_z"];

pub const MANIFEST: &str = "manifest.json";

/// A CSV file with a fixed header; rows are serialized tuples.
pub struct Table {
    writer: csv::Writer<File>,
}

impl Table {
    pub fn row<R: Serialize>(&mut self, row: R) -> Result<()> {
        self.writer.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| HarnessError::io("csv table", e))
    }
}

/// Run directory; remembers every file written so the manifest can list them.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// `name` may contain one subdirectory, e.g. `floquet/corr_matrix.csv`.
    pub fn table(&mut self, name: &str, header: &[&str]) -> Result<Table> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        writer.write_record(header)?;
        self.files.push(name.to_string());
        Ok(Table { writer })
    }

    pub fn write_manifest(&self, manifest: &serde_json::Value) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST);
        let text = serde_json::to_string_pretty(manifest)?;
        std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}

/// JSON number, or the strings `"inf"` / `"-inf"` / `"nan"` that plain JSON
/// cannot hold.
pub fn json_f64(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else if x.is_nan() {
        serde_json::json!("nan")
    } else if x > 0.0 {
        serde_json::json!("inf")
    } else {
        serde_json::json!("-inf")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_written_even_without_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.table("spectrum.csv", &SPECTRUM).unwrap().finish().unwrap();
        let mut t = out.table("sub/conserved.csv", &CONSERVED).unwrap();
        t.row((0.5, 2.0, 2.0, 2.0, 0.0)).unwrap();
        t.finish().unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap(), "re,im\n");
        assert_eq!(
            std::fs::read_to_string(dir.path().join("sub/conserved.csv")).unwrap(),
            "t,eta_pair,n_up,n_down,s_z\n0.5,2.0,2.0,2.0,0.0\n"
        );
        assert_eq!(out.files(), ["spectrum.csv", "sub/conserved.csv"]);
    }

    #[test]
    fn infinities_survive_json() {
        assert_eq!(json_f64(f64::INFINITY), serde_json::json!("inf"));
        assert_eq!(json_f64(-1.5), serde_json::json!(-1.5));
    }
}
