//! Artifact bookkeeping: every command writes its outputs under one
//! directory together with a `manifest.json` naming each artifact and the
//! SHA-256 of the resolved configuration (the effective settings after
//! merging CLI flags over the config file). The manifest carries no
//! timestamps, so identical inputs produce identical bytes.

use dg_core::error::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Accumulates artifact names for one command invocation.
#[derive(Debug, Serialize)]
pub struct Manifest {
    /// Which subcommand produced this directory.
    pub command: String,
    /// SHA-256 (hex) of the canonical JSON of the resolved configuration.
    pub config_sha256: String,
    /// Artifact file names relative to the output directory, in the order
    /// they were written.
    pub artifacts: Vec<String>,
    #[serde(skip)]
    out_dir: PathBuf,
}

impl Manifest {
    /// Start a manifest for `command` with the resolved settings hashed.
    ///
    /// Creates the output directory if needed.
    pub fn create<C: Serialize>(out_dir: &Path, command: &str, resolved: &C) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let canonical = serde_json::to_vec(resolved).map_err(io_like)?;
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        let config_sha256 = format!("{:x}", hasher.finalize());
        Ok(Self {
            command: command.to_string(),
            config_sha256,
            artifacts: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    /// The directory artifacts are written into.
    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Write `content` to `name` under the output directory and record it.
    pub fn write_text(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, content)?;
        self.artifacts.push(name.to_string());
        Ok(path)
    }

    /// Record a file some other writer already produced under the
    /// output directory.
    pub fn record(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    /// Write `manifest.json` itself.
    pub fn finish(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io_like)?;
        std::fs::write(self.out_dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn io_like(e: serde_json::Error) -> dg_core::error::DgError {
    dg_core::error::DgError::Io(std::io::Error::other(e))
}

/// Pretty-print any serializable result to stdout.
pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io_like)?;
    println!("{text}");
    Ok(())
}
