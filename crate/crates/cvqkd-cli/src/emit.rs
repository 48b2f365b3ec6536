//! Result rendering: fixed-precision numbers, CSV assembly, and the run
//! manifest written next to file outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

/// Formats with 12 significant digits. The printed decimal parses back to
/// a unique nearest f64, so reformatting the parsed value reproduces the
/// text.
pub fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// An optional cell: integers print plainly, absent values print empty.
pub fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

/// Every run that writes a file also records what produced it.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub tool_version: &'static str,
    pub outputs: Vec<String>,
    pub duration_ms: u64,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            outputs: Vec::new(),
            duration_ms: 0,
        }
    }
}

/// Prints to stdout, or writes to `out` with the manifest in a sibling
/// `<out>.manifest.json`.
pub fn deliver(
    out: Option<&Path>,
    body: &str,
    mut manifest: RunManifest,
    started: Instant,
) -> Result<(), String> {
    match out {
        None => {
            print!("{body}");
            Ok(())
        }
        Some(path) => {
            write_text(path, body)?;
            manifest.outputs.push(path.display().to_string());
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            let manifest_path = sibling_manifest(path);
            write_json(&manifest_path, &manifest)
        }
    }
}

pub fn sibling_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

pub fn write_text(path: &Path, body: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| format!("creating {parent:?}: {e}"))?;
        }
    }
    fs::write(path, body).map_err(|e| format!("writing {path:?}: {e}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    body.push('\n');
    write_text(path, &body)
}
