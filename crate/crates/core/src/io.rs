//! File helpers: JSON-lines, staged directories promoted atomically, and
//! content manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    fs::write(path, to_jsonl(items)?)?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// A directory built next to its final location and renamed into place on
/// [`Staged::commit`]. Dropping without committing removes it.
pub struct Staged {
    target: PathBuf,
    staging: PathBuf,
    committed: bool,
}

fn sibling(target: &Path, suffix: &str) -> Result<PathBuf> {
    let name = target
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no final component", target.display())))?;
    let mut sib = name.to_os_string();
    sib.push(suffix);
    Ok(target.with_file_name(sib))
}

impl Staged {
    pub fn new(target: &Path) -> Result<Self> {
        let staging = sibling(target, ".partial")?;
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Replaces `target` with the staged directory.
    pub fn commit(mut self) -> Result<PathBuf> {
        let old = sibling(&self.target, ".old")?;
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        if self.target.exists() {
            fs::rename(&self.target, &old)?;
        }
        fs::rename(&self.staging, &self.target)?;
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of every file below `root` (except `skip`), keyed by `/`-separated
/// relative path, in sorted order.
pub fn hash_tree(root: &Path, skip: &str) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, skip: &str, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            if e.file_type()?.is_dir() {
                walk(root, &path, skip, out)?;
            } else {
                let rel: Vec<String> = path
                    .strip_prefix(root)
                    .expect("below root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                let rel = rel.join("/");
                if rel != skip {
                    out.insert(rel, sha256_hex(&fs::read(&path)?));
                }
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, skip, &mut out)?;
    Ok(out)
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every command's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub formats: BTreeMap<String, u32>,
    pub parameters: BTreeMap<String, String>,
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: &str) -> Self {
        Self {
            tool: "privcode".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash: config_hash.into(),
            formats: BTreeMap::from([
                ("checkpoint".to_owned(), crate::model::CHECKPOINT_FORMAT_VERSION),
                ("report".to_owned(), 1),
            ]),
            parameters: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn with_parameter(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.to_owned(), value.to_string());
        self
    }

    /// Hashes everything in `dir` and writes the manifest there.
    pub fn write_into(mut self, dir: &Path) -> Result<()> {
        self.files = hash_tree(dir, MANIFEST_FILE)?;
        write_json(&dir.join(MANIFEST_FILE), &self)
    }
}
