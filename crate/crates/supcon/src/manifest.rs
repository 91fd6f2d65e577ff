//! Per-directory `manifest.json` files.
//!
//! Each stage directory holds one manifest: a JSON object keyed by command
//! name, so commands sharing a directory (`synth` and `split` both write
//! `data/`) keep separate entries. Paths are relative to the run's output
//! directory. A directory tree is recorded with a trailing `/` and the
//! digest from [`sha256_tree`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, sha256_file, sha256_tree, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Unix seconds. The only field that differs between identical reruns.
    pub timestamp: u64,
}

pub type DirManifest = BTreeMap<String, CommandEntry>;

pub fn read_manifest(dir: &Path) -> Result<DirManifest> {
    let path = dir.join(MANIFEST_FILE);
    if path.exists() {
        read_json(&path)
    } else {
        Ok(DirManifest::new())
    }
}

/// Fails with [`Error::MissingArtifact`] naming `path` when it does not exist.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::missing(path, format!("{what} not found")))
    }
}

fn key_for(outdir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(outdir).unwrap_or(path);
    let mut key = rel.to_string_lossy().replace('\\', "/");
    if path.is_dir() && !key.ends_with('/') {
        key.push('/');
    }
    key
}

fn digest(path: &Path) -> Result<String> {
    if path.is_dir() {
        sha256_tree(path)
    } else {
        sha256_file(path)
    }
}

/// Checks that `path` exists and, if some manifest under `outdir` recorded
/// it as an output, that its content still has the recorded hash.
pub fn verify_input(outdir: &Path, path: &Path, what: &str) -> Result<String> {
    require(path, what)?;
    let hash = digest(path)?;
    let key = key_for(outdir, path);
    let stage_dir = path.strip_prefix(outdir).ok().and_then(|rel| rel.components().next()).map(|c| outdir.join(c));
    if let Some(dir) = stage_dir {
        for (command, entry) in read_manifest(&dir)? {
            if let Some(recorded) = entry.outputs.get(&key) {
                if *recorded != hash {
                    return Err(Error::ManifestMismatch {
                        path: path.to_path_buf(),
                        reason: format!("content differs from what `{command}` recorded; rerun it"),
                    });
                }
            }
        }
    }
    Ok(hash)
}

/// Collects the inputs and outputs of one command and writes its entry.
#[derive(Debug)]
pub struct Recorder {
    outdir: PathBuf,
    dir: PathBuf,
    command: String,
    entry: CommandEntry,
}

impl Recorder {
    pub fn new(outdir: &Path, stage: &str, command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            outdir: outdir.to_path_buf(),
            dir: outdir.join(stage),
            command: command.into(),
            entry: CommandEntry { config_hash, seed, inputs: BTreeMap::new(), outputs: BTreeMap::new(), timestamp: 0 },
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Verifies an input against the manifests (see [`verify_input`]) and
    /// records its hash.
    pub fn input(&mut self, path: &Path, what: &str) -> Result<()> {
        let hash = verify_input(&self.outdir, path, what)?;
        self.entry.inputs.insert(key_for(&self.outdir, path), hash);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let hash = digest(path)?;
        self.entry.outputs.insert(key_for(&self.outdir, path), hash);
        Ok(())
    }

    /// Read-modify-writes `<stage>/manifest.json`.
    pub fn finish(mut self) -> Result<CommandEntry> {
        self.entry.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut manifest = read_manifest(&self.dir)?;
        manifest.insert(self.command, self.entry.clone());
        write_json(&self.dir.join(MANIFEST_FILE), &manifest)?;
        Ok(self.entry)
    }
}
