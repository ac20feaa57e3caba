//! Artifact writing: `summary.json`, CSVs, extra JSON and `manifest.json`.
//! Only the manifest carries timestamps and timings.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use glab_core::AuditSet;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct FileEntry {
    file: String,
    sha256: String,
    bytes: usize,
}

pub struct Writer {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Writer {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: vec![] })
    }

    pub fn write(&mut self, name: &str, body: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(FileEntry { file: name.into(), sha256: sha256_hex(body), bytes: body.len() });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, v: &Value) -> anyhow::Result<()> {
        let mut body = serde_json::to_vec_pretty(v)?;
        body.push(b'\n');
        self.write(name, &body)
    }

    /// Write the manifest last so it can list every other file.
    pub fn finish(self, inputs: Value, elapsed_s: f64, threads: usize) -> anyhow::Result<()> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "tool": "glab",
            "version": env!("CARGO_PKG_VERSION"),
            "created_unix": created,
            "elapsed_s": elapsed_s,
            "threads": threads,
            "command": std::env::args().collect::<Vec<_>>(),
            "inputs": inputs,
            "outputs": self.files,
        });
        let mut body = serde_json::to_vec_pretty(&manifest)?;
        body.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), body)?;
        Ok(())
    }
}

/// Summary rows in the fixed audit layout.
pub fn audit_rows(audits: &AuditSet) -> Value {
    Value::Array(
        audits
            .audits
            .iter()
            .map(|a| json!({ "name": a.name, "lhs": a.lhs, "rhs": a.rhs, "slack": a.slack, "pass": a.pass, "anchor": a.anchor }))
            .collect(),
    )
}
