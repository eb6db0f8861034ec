//! Atomic artifact writes and the run manifest emitted beside each output.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use tempfile::NamedTempFile;

/// Writes `path` through a temporary file in the same directory, renamed into
/// place only once `fill` has succeeded.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("{}: cannot create directory", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("{}: cannot create temporary file", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)
            .and_then(|()| w.flush())
            .with_context(|| format!("{}: write failed", path.display()))?;
    }
    tmp.persist(path)
        .with_context(|| format!("{}: cannot move output into place", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Provenance record of one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub summary: Value,
    pub duration_ms: f64,
}

/// Collects manifest fields while a command runs.
pub struct Run {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    summary: Value,
}

impl Run {
    pub fn start(command: &'static str, config: &impl Serialize) -> Self {
        Run {
            command,
            config: serde_json::to_value(config).expect("arguments serialize"),
            seed: None,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_owned());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_owned());
        self
    }

    pub fn summary(&mut self, summary: Value) -> &mut Self {
        self.summary = summary;
        self
    }

    /// Writes the manifest next to the first registered output.
    pub fn finish(self) -> Result<()> {
        let Some(primary) = self.outputs.first() else {
            return Ok(());
        };
        let path = manifest_path(primary);
        let manifest = RunManifest {
            command: self.command.to_owned(),
            version: podintro::VERSION,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            summary: self.summary,
            duration_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        write_json(&path, &manifest)
    }
}
