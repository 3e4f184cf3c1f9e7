//! Output directory bookkeeping and the per-run manifest.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    /// As given on the command line; `-` for standard input.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

impl InputFile {
    pub fn new(path: String, content: &[u8]) -> Self {
        Self {
            path,
            bytes: content.len(),
            sha256: sha256_hex(content),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    /// Digest of the file, or of its timestamp-free form when the file
    /// carries a timestamp.
    pub sha256: String,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub timestamp_excluded: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    /// Arguments after the program name; replaying them reproduces the run.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<OutputFile>,
    pub started_at_unix: u64,
    pub wall_clock_ms: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Collects inputs and outputs of one run. Files are only written when an
/// output directory was requested.
#[derive(Debug)]
pub struct Run {
    dir: Option<PathBuf>,
    started: Instant,
    started_at_unix: u64,
    inputs: Vec<InputFile>,
    outputs: Vec<OutputFile>,
}

impl Run {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)
                .with_context(|| format!("cannot create output directory {}", d.display()))?;
        }
        Ok(Self {
            dir,
            started: Instant::now(),
            started_at_unix: unix_now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn writes_files(&self) -> bool {
        self.dir.is_some()
    }

    pub fn add_input(&mut self, input: InputFile) {
        self.inputs.push(input);
    }

    pub fn write(&mut self, name: &str, content: &[u8]) -> Result<()> {
        self.write_with_digest(name, content, sha256_hex(content), false)
    }

    /// Writes `content` but records `digest` in the manifest, for files whose
    /// bytes include a timestamp.
    pub fn write_stamped(&mut self, name: &str, content: &[u8], digest: String) -> Result<()> {
        self.write_with_digest(name, content, digest, true)
    }

    fn write_with_digest(
        &mut self,
        name: &str,
        content: &[u8],
        sha256: String,
        timestamp_excluded: bool,
    ) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(name);
        std::fs::write(&path, content)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256,
            timestamp_excluded,
        });
        Ok(())
    }

    /// Writes `manifest.json` when an output directory is in use.
    pub fn finish(
        self,
        subcommand: &str,
        argv: Vec<String>,
        config: serde_json::Value,
        seed: u64,
    ) -> Result<Option<PathBuf>> {
        let Some(dir) = self.dir else {
            return Ok(None);
        };
        let manifest = RunManifest {
            tool: "inrclass",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv,
            config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            started_at_unix: self.started_at_unix,
            wall_clock_ms: self.started.elapsed().as_millis() as u64,
        };
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(Some(path))
    }
}

/// Reads a named file, or standard input for `None` and `-`.
pub fn read_input(path: Option<&Path>) -> Result<(Vec<u8>, InputFile)> {
    use std::io::Read;
    match path {
        Some(p) if p != Path::new("-") => {
            let bytes = std::fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
            let info = InputFile::new(p.display().to_string(), &bytes);
            Ok((bytes, info))
        }
        _ => {
            let mut bytes = Vec::new();
            std::io::stdin()
                .read_to_end(&mut bytes)
                .context("cannot read standard input")?;
            let info = InputFile::new("-".to_string(), &bytes);
            Ok((bytes, info))
        }
    }
}
