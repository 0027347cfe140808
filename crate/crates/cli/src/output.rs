use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::Failure;

/// CSV table with a versioned header comment.
pub struct Table {
    text: String,
    width: usize,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        let mut text = format!("# qhplasma {kind} v1\n");
        text.push_str(&columns.join(","));
        text.push('\n');
        Table {
            text,
            width: columns.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.width);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        write_file(path, self.text.as_bytes())
    }
}

pub fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").unwrap();
    s
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub config: Value,
    pub status: &'static str,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub diagnostics: Value,
    pub constants: Value,
}

/// Results of a command, to be recorded in the manifest.
#[derive(Default)]
pub struct Artifacts {
    pub outputs: Vec<PathBuf>,
    pub diagnostics: Value,
    pub constants: Value,
}

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join(format!("{}.manifest.json", cfg.command))
}
