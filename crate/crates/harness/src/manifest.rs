//! `manifest.txt`: what was run, with which configuration, and the SHA-256
//! of every result file. Wall-clock timings live only here, so the result
//! files themselves stay byte-reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.txt";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::file(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub execution: String,
    /// Output file name (relative to the manifest) to its digest.
    pub outputs: BTreeMap<String, String>,
    /// Named phase to seconds.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, master_seed: u64, execution: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            master_seed,
            execution: execution.to_string(),
            ..Default::default()
        }
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| HarnessError::file(path, "not a file name"))?
            .to_string();
        self.outputs.insert(name, file_sha256(path)?);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "config = {RESOLVED_CONFIG}");
        let _ = writeln!(s, "config_sha256 = {}", self.config_sha256);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "execution = {}", self.execution);
        for (name, digest) in &self.outputs {
            let _ = writeln!(s, "output.{name} = {digest}");
        }
        for (phase, secs) in &self.timings {
            let _ = writeln!(s, "wall_seconds.{phase} = {secs:.3}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| HarnessError::config("manifest", format!("line {}: expected `key = value`", i + 1)))?;
            let bad = |what: &str| HarnessError::config("manifest", format!("line {}: bad {what} `{value}`", i + 1));
            match key {
                "command" => m.command = value.to_string(),
                "version" => m.version = value.to_string(),
                "config" => {}
                "config_sha256" => m.config_sha256 = value.to_string(),
                "master_seed" => m.master_seed = value.parse().map_err(|_| bad("seed"))?,
                "execution" => m.execution = value.to_string(),
                _ => {
                    if let Some(name) = key.strip_prefix("output.") {
                        m.outputs.insert(name.to_string(), value.to_string());
                    } else if let Some(phase) = key.strip_prefix("wall_seconds.") {
                        m.timings.insert(phase.to_string(), value.parse().map_err(|_| bad("timing"))?);
                    } else {
                        return Err(HarnessError::config("manifest", format!("line {}: unknown key `{key}`", i + 1)));
                    }
                }
            }
        }
        if m.command.is_empty() {
            return Err(HarnessError::config("manifest", "missing `command`"));
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST);
        std::fs::write(&path, self.render()).map_err(|e| HarnessError::file(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config("manifest", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Output names whose digest differs from (or is missing in) `other`.
    pub fn mismatched_outputs(&self, other: &Self) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|(name, digest)| other.outputs.get(*name) != Some(*digest))
            .map(|(name, _)| name.clone())
            .collect()
    }
}
