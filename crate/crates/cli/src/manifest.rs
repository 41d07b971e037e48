//! Run manifests: every artifact-producing command writes one next to its
//! output, recording the command, a hash of its resolved arguments, the
//! effective seed, SHA-256 digests of all inputs, the tool version, and
//! wall time. Outputs themselves are deterministic for identical flags,
//! seed, and inputs; the manifest is the attestation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::err::{CliError, Ctx};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of the resolved command arguments serialized as JSON.
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Input path -> SHA-256 of file bytes.
    pub inputs: BTreeMap<String, String>,
    pub wall_time_ms: u64,
}

pub struct ManifestBuilder {
    command: String,
    config_sha256: String,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, args: &impl Serialize) -> Self {
        let canonical = serde_json::to_vec(args).unwrap_or_default();
        Self {
            command: command.to_string(),
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            seed: None,
            inputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input_file(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
        self.inputs.insert(
            path.display().to_string(),
            hex::encode(Sha256::digest(&bytes)),
        );
        Ok(self)
    }

    /// Digest a directory input: SHA-256 over `(file name, file digest)`
    /// pairs in name order, so any content or membership change shows.
    pub fn input_dir(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let io_err = |e: std::io::Error| CliError::msg("io", format!("{}: {e}", path.display()));
        let mut names: Vec<String> = Vec::new();
        for entry in std::fs::read_dir(path).map_err(io_err)? {
            let entry = entry.map_err(io_err)?;
            if entry.file_type().map_err(io_err)?.is_file() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        let mut hasher = Sha256::new();
        for name in &names {
            let bytes = std::fs::read(path.join(name)).map_err(io_err)?;
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(Sha256::digest(&bytes));
        }
        self.inputs
            .insert(path.display().to_string(), hex::encode(hasher.finalize()));
        Ok(self)
    }

    /// Write the manifest next to `out`: `<stem>.manifest.json` for file
    /// outputs, `manifest.json` inside directory outputs.
    pub fn write_for_output(self, out: &Path) -> Result<PathBuf, CliError> {
        let path = manifest_path(out);
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config_sha256,
            seed: self.seed,
            inputs: self.inputs,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        };
        let text = serde_json::to_string_pretty(&manifest).ctx("json")?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        out.with_extension("manifest.json")
    }
}
