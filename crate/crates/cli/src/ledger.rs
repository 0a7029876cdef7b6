//! Append-only run ledger, one JSON object per line.
//!
//! Every entry stores the SHA-256 of its predecessor and its own hash over
//! the predecessor hash plus its serialized body, so editing or dropping a
//! line breaks the chain. Before a stage runs, its inputs are compared with
//! the hashes recorded when an earlier stage wrote them.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError};

pub const LEDGER_FILE: &str = "ledger.jsonl";
const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// A file, or a named set of files, and its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    /// Path relative to the ledger directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub index: u64,
    pub stage: String,
    pub status: Status,
    pub params: BTreeMap<String, String>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Milliseconds since the Unix epoch.
    pub started_unix_ms: u64,
    pub wall_ms: u64,
    pub prev_hash: String,
    pub hash: String,
}

impl LedgerEntry {
    // integers and strings only, so a reloaded entry reserializes to the
    // same bytes
    fn compute_hash(&self) -> String {
        let body = LedgerEntry {
            hash: String::new(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&body).expect("entry serializes");
        hex::encode(Sha256::new().chain_update(self.prev_hash.as_bytes()).chain_update(json).finalize())
    }
}

/// What a finished stage reports to the ledger.
#[derive(Clone, Debug, Default)]
pub struct StageRecord {
    pub stage: String,
    pub params: BTreeMap<String, String>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

impl StageRecord {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.into(),
            ..Default::default()
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }
}

#[derive(Debug)]
pub struct RunLedger {
    path: PathBuf,
    root: PathBuf,
    entries: Vec<LedgerEntry>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    Ok(hash_bytes(&fs::read(path).map_err(|e| io_error(path, e))?))
}

impl RunLedger {
    /// Opens (or starts) the ledger in `dir` and verifies its chain.
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(LEDGER_FILE);
        let mut entries = Vec::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: LedgerEntry = serde_json::from_str(line)
                    .map_err(|e| CliError::Runtime(format!("{} line {}: {e}", path.display(), n + 1)))?;
                entries.push(entry);
            }
        }
        let ledger = Self {
            path,
            root: dir.to_path_buf(),
            entries,
        };
        ledger.verify()?;
        Ok(ledger)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Checks indices, back-links and entry hashes.
    pub fn verify(&self) -> Result<(), CliError> {
        let mut prev = GENESIS.to_string();
        for (i, e) in self.entries.iter().enumerate() {
            if e.index != i as u64 || e.prev_hash != prev || e.compute_hash() != e.hash {
                return Err(CliError::Runtime(format!(
                    "{}: hash chain broken at entry {i} ({})",
                    self.path.display(),
                    e.stage
                )));
            }
            prev = e.hash.clone();
        }
        Ok(())
    }

    /// Path of `p` relative to the ledger directory when possible.
    pub fn relative(&self, p: &Path) -> String {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        rel.to_string_lossy().replace('\\', "/")
    }

    pub fn file_artifact(&self, p: &Path) -> Result<Artifact, CliError> {
        Ok(Artifact {
            path: self.relative(p),
            sha256: hash_file(p)?,
        })
    }

    /// One hash over a set of files, keyed by `name`.
    pub fn set_artifact(&self, name: &str, files: &[PathBuf]) -> Result<Artifact, CliError> {
        let mut sorted: Vec<&PathBuf> = files.iter().collect();
        sorted.sort();
        let mut h = Sha256::new();
        for f in sorted {
            h.update(self.relative(f).as_bytes());
            h.update([0u8]);
            h.update(hash_file(f)?.as_bytes());
        }
        Ok(Artifact {
            path: name.into(),
            sha256: hex::encode(h.finalize()),
        })
    }

    /// Fails if an input differs from what the latest stage that produced
    /// it recorded.
    pub fn check_inputs(&self, inputs: &[Artifact]) -> Result<(), CliError> {
        for a in inputs {
            let produced = self
                .entries
                .iter()
                .rev()
                .filter(|e| e.status == Status::Ok)
                .find_map(|e| e.outputs.iter().find(|o| o.path == a.path).map(|o| (e, o)));
            if let Some((e, o)) = produced {
                if o.sha256 != a.sha256 {
                    return Err(CliError::Validation(format!(
                        "{} changed since stage {} (entry {}) wrote it; rerun that stage",
                        a.path, e.stage, e.index
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn append(&mut self, record: StageRecord, status: Status, started: Started) -> Result<&LedgerEntry, CliError> {
        let mut entry = LedgerEntry {
            index: self.entries.len() as u64,
            stage: record.stage,
            status,
            params: record.params,
            inputs: record.inputs,
            outputs: record.outputs,
            started_unix_ms: started.unix_ms,
            wall_ms: started.clock.elapsed().as_millis() as u64,
            prev_hash: self.entries.last().map_or_else(|| GENESIS.to_string(), |e| e.hash.clone()),
            hash: String::new(),
        };
        entry.hash = entry.compute_hash();
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| io_error(&self.path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| io_error(&self.path, e))?;
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Number of successful entries for `stage`.
    pub fn count(&self, stage: &str) -> usize {
        self.entries.iter().filter(|e| e.stage == stage && e.status == Status::Ok).count()
    }
}

/// Wall-clock start of a stage.
#[derive(Clone, Copy, Debug)]
pub struct Started {
    unix_ms: u64,
    clock: Instant,
}

impl Started {
    pub fn now() -> Self {
        Self {
            unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
            clock: Instant::now(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_verifies_and_detects_edits() {
        let dir = tempfile::tempdir().unwrap();
        let mut l = RunLedger::open(dir.path()).unwrap();
        let file = dir.path().join("a.txt");
        fs::write(&file, "one").unwrap();
        let art = l.file_artifact(&file).unwrap();
        assert_eq!(art.path, "a.txt");
        l.append(
            StageRecord {
                outputs: vec![art.clone()],
                ..StageRecord::new("generate")
            },
            Status::Ok,
            Started::now(),
        )
        .unwrap();
        l.append(StageRecord::new("purify").param("t", 0.5), Status::Ok, Started::now()).unwrap();
        let reopened = RunLedger::open(dir.path()).unwrap();
        assert_eq!(reopened.entries().len(), 2);
        assert_eq!(reopened.count("generate"), 1);
        reopened.check_inputs(&[art]).unwrap();

        fs::write(&file, "two").unwrap();
        let changed = reopened.file_artifact(&file).unwrap();
        assert!(matches!(reopened.check_inputs(&[changed]), Err(CliError::Validation(_))));

        let text = fs::read_to_string(dir.path().join(LEDGER_FILE)).unwrap();
        fs::write(dir.path().join(LEDGER_FILE), text.replace("\"t\":\"0.5\"", "\"t\":\"0.6\"")).unwrap();
        assert!(RunLedger::open(dir.path()).is_err());
    }

    #[test]
    fn set_hash_ignores_listing_order() {
        let dir = tempfile::tempdir().unwrap();
        let l = RunLedger::open(dir.path()).unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        fs::write(&a, "x").unwrap();
        fs::write(&b, "y").unwrap();
        let one = l.set_artifact("set", &[a.clone(), b.clone()]).unwrap();
        let two = l.set_artifact("set", &[b, a]).unwrap();
        assert_eq!(one, two);
    }
}
