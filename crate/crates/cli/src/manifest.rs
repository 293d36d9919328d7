//! Run manifests: what was run, with which seeds and inputs, and every file
//! it wrote.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use csocnn_core::derive_seed;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Written at start; left behind by a run that never finished.
    Running,
    Complete,
    Interrupted,
    Failed,
}

/// Per-stage seeds, all derived from `global`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub global: u64,
    pub data: u64,
    pub split: u64,
    pub network: u64,
    pub shuffle: u64,
    pub swarm: u64,
    /// False when `global` was drawn at random.
    pub from_flag: bool,
}

impl Seeds {
    pub fn new(flag: Option<u64>) -> Self {
        let global = flag.unwrap_or_else(rand::random);
        let s = |i| derive_seed(global, &[i]);
        Seeds {
            global,
            data: s(1),
            split: s(2),
            network: s(3),
            shuffle: s(4),
            swarm: s(5),
            from_flag: flag.is_some(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(path: &Path, display: PathBuf) -> CliResult<Self> {
        let mut f = fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 16];
        let mut bytes = 0u64;
        loop {
            let n = f.read(&mut buf).map_err(|e| CliError::io(path.display(), e))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(FileEntry { path: display, bytes, sha256: hex::encode(hasher.finalize()) })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub status: RunStatus,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Option<Seeds>,
    pub inputs: Vec<FileEntry>,
    pub output_dir: PathBuf,
    pub duration_secs: f64,
    #[serde(default)]
    pub metrics: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<serde_json::Value>,
    /// Paths relative to `output_dir`.
    pub artifacts: Vec<FileEntry>,
}

pub fn manifest_file_name(command: &str) -> String {
    format!("{command}-manifest.json")
}

/// Shared handle so the signal handler can finalise the manifest.
#[derive(Clone)]
pub struct ManifestHandle {
    inner: Arc<Mutex<RunManifest>>,
    path: PathBuf,
    started: Instant,
}

static ACTIVE: OnceLock<Mutex<Option<ManifestHandle>>> = OnceLock::new();

fn active() -> &'static Mutex<Option<ManifestHandle>> {
    ACTIVE.get_or_init(|| Mutex::new(None))
}

impl ManifestHandle {
    /// Creates the output directory and writes a `running` manifest.
    pub fn start(command: &str, out: &Path, config: serde_json::Value, seeds: Option<Seeds>) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
        let manifest = RunManifest {
            tool: format!("csocnn {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            status: RunStatus::Running,
            argv: std::env::args().collect(),
            config,
            seeds,
            inputs: Vec::new(),
            output_dir: out.to_path_buf(),
            duration_secs: 0.0,
            metrics: serde_json::Value::Null,
            error: None,
            artifacts: Vec::new(),
        };
        let handle = ManifestHandle {
            inner: Arc::new(Mutex::new(manifest)),
            path: out.join(manifest_file_name(command)),
            started: Instant::now(),
        };
        handle.write()?;
        *active().lock().unwrap() = Some(handle.clone());
        Ok(handle)
    }

    #[cfg(test)]
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn add_input(&self, path: &Path) -> CliResult<()> {
        let entry = FileEntry::of(path, path.to_path_buf())?;
        self.inner.lock().unwrap().inputs.push(entry);
        Ok(())
    }

    /// Records a file written under the output directory.
    pub fn add_artifact(&self, path: &Path) -> CliResult<()> {
        let mut m = self.inner.lock().unwrap();
        let rel = path.strip_prefix(&m.output_dir).unwrap_or(path).to_path_buf();
        let entry = FileEntry::of(path, rel)?;
        m.artifacts.retain(|a| a.path != entry.path);
        m.artifacts.push(entry);
        Ok(())
    }

    /// Records every file below `dir`, sorted by path.
    pub fn add_artifact_dir(&self, dir: &Path) -> CliResult<()> {
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        files.sort();
        for f in files {
            self.add_artifact(&f)?;
        }
        Ok(())
    }

    pub fn set_metrics(&self, metrics: serde_json::Value) {
        self.inner.lock().unwrap().metrics = metrics;
    }

    pub fn update(&self, f: impl FnOnce(&mut RunManifest)) {
        f(&mut self.inner.lock().unwrap());
    }

    fn write(&self) -> CliResult<()> {
        let m = self.inner.lock().unwrap();
        let text = serde_json::to_string_pretty(&*m).map_err(|e| CliError::Core(e.into()))?;
        // write-then-rename so a signal never leaves half a manifest
        let tmp = self.path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| CliError::io(tmp.display(), e))?;
        fs::rename(&tmp, &self.path).map_err(|e| CliError::io(self.path.display(), e))
    }

    pub fn finish(&self, status: RunStatus, error: Option<serde_json::Value>) -> CliResult<()> {
        {
            let mut m = self.inner.lock().unwrap();
            m.status = status;
            m.error = error;
            m.duration_secs = self.started.elapsed().as_secs_f64();
        }
        let r = self.write();
        let mut slot = active().lock().unwrap();
        if slot.as_ref().is_some_and(|h| h.path == self.path) {
            *slot = None;
        }
        r
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir.display(), e))? {
        let p = entry.map_err(|e| CliError::io(dir.display(), e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Marks the active manifest as interrupted. Called from the signal handler.
pub fn interrupt_active() {
    let handle = active().lock().ok().and_then(|s| s.clone());
    if let Some(h) = handle {
        let _ = h.finish(RunStatus::Interrupted, None);
    }
}
