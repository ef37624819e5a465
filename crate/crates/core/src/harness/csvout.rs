//! CSV and text emission with provenance headers.
//!
//! Every output file starts with a comment line embedding the artifact
//! version, the config hash and the seed, so a result file can always be
//! traced back to the run that produced it. Floats carry 17 significant
//! digits. Column order is fixed by the writers here and never varies.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::StudyConfig;
use crate::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance line placed at the top of CSV and text outputs.
pub fn provenance(cfg: &StudyConfig) -> String {
    format!(
        "# slab-mlmc v{VERSION} config_hash={:016x} seed={}",
        cfg.hash(),
        cfg.seed
    )
}

/// Buffered writer for one output file with the provenance header.
pub struct OutputFile {
    path: PathBuf,
    buf: String,
}

impl OutputFile {
    pub fn create(cfg: &StudyConfig, name: &str) -> Result<Self> {
        let path = cfg.out_dir.join(name);
        let mut buf = provenance(cfg);
        buf.push('\n');
        Ok(OutputFile { path, buf })
    }

    pub fn line(&mut self, line: &str) {
        self.buf.push_str(line);
        self.buf.push('\n');
    }

    /// Writes one CSV row, joining the fields with commas.
    pub fn row(&mut self, fields: &[String]) {
        self.line(&fields.join(","));
    }

    pub fn finish(self) -> Result<PathBuf> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(&self.path)?;
        f.write_all(self.buf.as_bytes())?;
        Ok(self.path)
    }
}

/// Writes `stats.json`-style summaries; provenance fields are embedded as
/// JSON keys since JSON has no comments.
pub fn write_json(cfg: &StudyConfig, name: &str, value: serde_json::Value) -> Result<PathBuf> {
    let mut object = serde_json::Map::new();
    object.insert("version".into(), serde_json::json!(VERSION));
    object.insert(
        "config_hash".into(),
        serde_json::json!(format!("{:016x}", cfg.hash())),
    );
    object.insert("seed".into(), serde_json::json!(cfg.seed));
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            object.insert(k, v);
        }
    }
    let path = cfg.out_dir.join(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(object))
        .expect("json serialisation cannot fail");
    fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Reads a CSV produced by [`OutputFile`], dropping the provenance line.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect())
}
