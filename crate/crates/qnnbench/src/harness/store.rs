//! Append-only line-delimited record store. Reruns recompute
//! deterministically and deduplicate per coordinate, so a killed run and its
//! rerun converge to the identical final record set; a value mismatch on an
//! existing key is reported as a determinism violation rather than silently
//! overwritten.

use super::{HarnessError, ResultRecord};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct RecordStore {
    path: PathBuf,
    by_key: BTreeMap<String, ResultRecord>,
}

impl RecordStore {
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        let mut by_key = BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: ResultRecord = serde_json::from_str(line).map_err(|e| {
                    HarnessError::Store(format!("line {}: {e}", lineno + 1))
                })?;
                by_key.insert(rec.key(), rec);
            }
        } else if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            by_key,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ResultRecord> {
        self.by_key.values()
    }

    pub fn get(&self, key: &str) -> Option<&ResultRecord> {
        self.by_key.get(key)
    }

    /// True when a record with this scenario/metric/coords already exists.
    pub fn contains(&self, rec: &ResultRecord) -> bool {
        self.by_key.contains_key(&rec.key())
    }

    /// Append one record; a duplicate key with an identical value is a no-op,
    /// a duplicate key with a different value is an error.
    pub fn append(&mut self, rec: ResultRecord) -> Result<bool, HarnessError> {
        let key = rec.key();
        if let Some(existing) = self.by_key.get(&key) {
            if (existing.value - rec.value).abs() > 0.0 && existing.value != rec.value {
                return Err(HarnessError::Determinism {
                    key,
                    old: existing.value,
                    new: rec.value,
                });
            }
            return Ok(false);
        }
        let line = serde_json::to_string(&rec).expect("record serializes");
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| HarnessError::Io {
                path: self.path.display().to_string(),
                source: e,
            })?;
        writeln!(f, "{line}").map_err(|e| HarnessError::Io {
            path: self.path.display().to_string(),
            source: e,
        })?;
        self.by_key.insert(key, rec);
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{coords, Scenario};

    fn rec(metric: &str, value: f64) -> ResultRecord {
        ResultRecord {
            config_hash: "abcd".into(),
            revision: "test".into(),
            scenario: Scenario::Clean,
            metric: metric.into(),
            value,
            coords: coords(&[("epoch", serde_json::json!(1))]),
            wall_ms: 5,
            seed: 1,
        }
    }

    #[test]
    fn append_load_dedup_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut store = RecordStore::open(&path).unwrap();
        assert!(store.append(rec("acc", 0.9)).unwrap());
        assert!(!store.append(rec("acc", 0.9)).unwrap(), "idempotent");
        assert!(store.append(rec("loss", 0.3)).unwrap());
        drop(store);

        let store = RecordStore::open(&path).unwrap();
        assert_eq!(store.len(), 2);
        let again = RecordStore::open(&path).unwrap();
        assert_eq!(
            again.records().map(|r| r.key()).collect::<Vec<_>>(),
            store.records().map(|r| r.key()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn conflicting_value_is_a_determinism_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut store = RecordStore::open(&path).unwrap();
        store.append(rec("acc", 0.9)).unwrap();
        assert!(matches!(
            store.append(rec("acc", 0.91)),
            Err(HarnessError::Determinism { .. })
        ));
    }
}
