//! Run manifests: every subcommand writes exactly one `manifest.json`
//! into its output directory, recording the effective configuration,
//! input hashes, and every artifact produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use adam_core::Result;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
}

/// Collects inputs/outputs during a run and writes the manifest last.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    seed: Option<u64>,
    started: Instant,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    pub fn new(command: &str, out_dir: &Path, config: serde_json::Value) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(ManifestBuilder {
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed: None,
            started: Instant::now(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let hash: String = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Writes an artifact into the output directory and records it.
    pub fn write_output(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    /// Records an artifact produced by other means (binary writers).
    pub fn note_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.outputs.push("manifest.json".to_string());
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            input_hashes: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        std::fs::write(
            self.out_dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(manifest)
    }
}
