//! Stage records chained by content hashes, and the output-directory lock.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".topicforge.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upstream {
    pub stage: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub inputs: Vec<FileHash>,
    pub upstream: Vec<Upstream>,
    /// Hash of everything the stage consumed; equal keys mean equal outputs.
    pub key: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileHash>,
    /// Hash of `key` and the outputs; downstream keys include it.
    pub hash: String,
    pub completed_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: Vec<StageRecord>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// Hash over length-prefixed parts, so part boundaries cannot collide.
pub fn hash_parts<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    hex(&hasher.finalize())
}

pub fn stage_key(
    stage: &str,
    config_hash: &str,
    inputs: &[FileHash],
    upstream: &[Upstream],
) -> String {
    let mut parts = vec![stage, config_hash];
    for i in inputs {
        parts.push(&i.path);
        parts.push(&i.sha256);
    }
    for u in upstream {
        parts.push(&u.stage);
        parts.push(&u.hash);
    }
    hash_parts(parts)
}

pub fn record_hash(key: &str, outputs: &[FileHash]) -> String {
    let mut parts = vec![key];
    for o in outputs {
        parts.push(&o.path);
        parts.push(&o.sha256);
    }
    hash_parts(parts)
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text =
            fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("corrupt manifest {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        fs::rename(&tmp, &path).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn get(&self, stage: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Replaces the stage's record, keeping `order` for the record list.
    pub fn put(&mut self, record: StageRecord, order: &[&str]) {
        self.stages.retain(|r| r.stage != record.stage);
        self.stages.push(record);
        let rank = |s: &str| order.iter().position(|o| *o == s).unwrap_or(usize::MAX);
        self.stages.sort_by_key(|r| rank(&r.stage));
    }
}

/// True when every recorded output still exists with its recorded hash.
pub fn outputs_intact(dir: &Path, record: &StageRecord) -> Result<bool> {
    for o in &record.outputs {
        let path = dir.join(&o.path);
        if !path.is_file() || hash_file(&path)? != o.sha256 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<DirLock> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is in use by another run (delete {} if that run is gone)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("cannot create {}", path.display())),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            hex(&Sha256::digest(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn part_boundaries_matter() {
        assert_ne!(hash_parts(["ab", "c"]), hash_parts(["a", "bc"]));
    }

    #[test]
    fn lock_is_exclusive_until_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        let err = DirLock::acquire(dir.path()).unwrap_err();
        assert!(err.to_string().contains("in use"));
        drop(lock);
        assert!(DirLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn manifest_round_trip_keeps_stage_order() {
        let dir = tempfile::tempdir().unwrap();
        let record = |stage: &str| StageRecord {
            stage: stage.into(),
            config_hash: "c".into(),
            inputs: vec![],
            upstream: vec![],
            key: "k".into(),
            outputs: vec![],
            hash: "h".into(),
            completed_at: "t".into(),
        };
        let order = ["a", "b", "c"];
        let mut m = Manifest::default();
        m.put(record("c"), &order);
        m.put(record("a"), &order);
        m.put(record("c"), &order);
        m.save(dir.path()).unwrap();
        let back = Manifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        let names: Vec<&str> = back.stages.iter().map(|r| r.stage.as_str()).collect();
        assert_eq!(names, ["a", "c"]);
    }

    #[test]
    fn tampered_output_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.csv"), "1").unwrap();
        let record = StageRecord {
            stage: "s".into(),
            config_hash: String::new(),
            inputs: vec![],
            upstream: vec![],
            key: String::new(),
            outputs: vec![FileHash {
                path: "x.csv".into(),
                sha256: hash_file(&dir.path().join("x.csv")).unwrap(),
            }],
            hash: String::new(),
            completed_at: String::new(),
        };
        assert!(outputs_intact(dir.path(), &record).unwrap());
        fs::write(dir.path().join("x.csv"), "2").unwrap();
        assert!(!outputs_intact(dir.path(), &record).unwrap());
        fs::remove_file(dir.path().join("x.csv")).unwrap();
        assert!(!outputs_intact(dir.path(), &record).unwrap());
    }
}
