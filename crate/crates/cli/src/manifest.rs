//! Run manifests: resolved config, seeds, and SHA-256 of every input and output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Keys;
use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a Keys,
    seeds: &'a BTreeMap<String, u64>,
    inputs: Vec<FileHash>,
    artifacts: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects artifacts written under `root` during one command.
pub struct Recorder {
    root: PathBuf,
    command: String,
    artifacts: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
}

impl Recorder {
    pub fn new(root: &Path, command: &str) -> Self {
        Recorder {
            root: root.to_path_buf(),
            command: command.to_string(),
            artifacts: Vec::new(),
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes `bytes` to `root/rel`, creating parent directories.
    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.root.join(rel.as_ref());
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(rel.as_ref().to_path_buf());
        Ok(path)
    }

    /// Absolute path for `rel`, with parent directories created. Call
    /// [`Recorder::register`] once the file is written.
    pub fn path_for(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.root.join(rel.as_ref());
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        }
        Ok(path)
    }

    pub fn register(&mut self, rel: impl AsRef<Path>) {
        self.artifacts.push(rel.as_ref().to_path_buf());
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    /// Writes `manifests/<name>.json` and returns its path.
    pub fn finish(self, name: &str, config: &Keys) -> Result<PathBuf> {
        let hash_all = |paths: &[PathBuf], base: Option<&Path>| -> Result<Vec<FileHash>> {
            let mut v: Vec<FileHash> = paths
                .iter()
                .map(|p| {
                    let full = base.map_or_else(|| p.clone(), |b| b.join(p));
                    Ok(FileHash {
                        path: p.to_string_lossy().replace('\\', "/"),
                        sha256: sha256_file(&full)?,
                    })
                })
                .collect::<Result<_>>()?;
            v.sort_by(|a, b| a.path.cmp(&b.path));
            v.dedup_by(|a, b| a.path == b.path);
            Ok(v)
        };
        let manifest = Manifest {
            tool: "gaitlrp",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config,
            seeds: &self.seeds,
            inputs: hash_all(&self.inputs, None)?,
            artifacts: hash_all(&self.artifacts, Some(&self.root))?,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let rel = PathBuf::from("manifests").join(format!("{name}.json"));
        let path = self.root.join(&rel);
        fs::create_dir_all(path.parent().expect("has parent"))
            .map_err(|e| CliError::Io(format!("cannot create manifest directory: {e}")))?;
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
