//! Run directories: result files, summary and manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::RunError;

/// Everything a subcommand produces before it touches the disk.
#[derive(Debug, Default)]
pub struct RunOutput {
    /// `results/<name>` bodies without the provenance header.
    pub files: Vec<(String, String)>,
    pub summary: serde_json::Value,
    /// Seeds of the parallel tasks, keyed by task family.
    pub task_seeds: BTreeMap<String, Vec<u64>>,
    /// Set when the run finished but its result check failed.
    pub failure: Option<String>,
}

impl RunOutput {
    pub fn csv(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: String,
    pub task_seeds: BTreeMap<String, Vec<u64>>,
    pub files: Vec<FileEntry>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_dir(root: &Path, subcommand: &str, cfg: &ExperimentConfig) -> PathBuf {
    root.join(format!("{subcommand}-{}", &cfg.hash()[..12]))
}

fn header(subcommand: &str, cfg: &ExperimentConfig) -> String {
    format!(
        "# rqw {} {subcommand}\n# config_hash {}\n# master_seed {}\n# config {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        cfg.seed,
        cfg.canonical_json()
    )
}

fn write(dir: &Path, rel: &str, contents: &[u8], inventory: &mut Vec<FileEntry>) -> Result<(), RunError> {
    let path = dir.join(rel);
    fs::write(&path, contents).map_err(|e| RunError::Io(format!("cannot write {}: {e}", path.display())))?;
    inventory.push(FileEntry {
        path: rel.to_string(),
        bytes: contents.len() as u64,
        sha256: sha256_hex(contents),
    });
    Ok(())
}

/// Writes `results/*.csv`, `summary.json` and `manifest.json` under `dir`.
pub fn write_run(
    dir: &Path,
    subcommand: &str,
    cfg: &ExperimentConfig,
    threads: usize,
    started: f64,
    out: &RunOutput,
) -> Result<RunManifest, RunError> {
    let results = dir.join("results");
    fs::create_dir_all(&results).map_err(|e| RunError::Io(format!("cannot create {}: {e}", results.display())))?;
    let mut inventory = Vec::new();
    let head = header(subcommand, cfg);
    for (name, body) in &out.files {
        let text = format!("{head}{body}");
        write(dir, &format!("results/{name}"), text.as_bytes(), &mut inventory)?;
    }
    let summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes") + "\n";
    write(dir, "summary.json", summary.as_bytes(), &mut inventory)?;
    let manifest = RunManifest {
        tool: "rqw".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        config_hash: cfg.hash(),
        master_seed: cfg.seed,
        config: serde_json::from_str(&cfg.canonical_json()).expect("canonical config is JSON"),
        threads,
        started_unix: started,
        finished_unix: unix_now(),
        status: if out.failure.is_some() { "check-failed" } else { "ok" }.into(),
        task_seeds: out.task_seeds.clone(),
        files: inventory,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(dir.join("manifest.json"), text)
        .map_err(|e| RunError::Io(format!("cannot write manifest: {e}")))?;
    Ok(manifest)
}
