//! On-disk cache of fitted pipelines and tuning studies for `--resume`.
//!
//! Entries live in `<out>/cache/<kind>-<key>.json`; the key is a SHA-256 over
//! the pipeline config, the task and a fingerprint of the training rows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Hash over sample ids and feature values.
pub fn fingerprint(ids: &[String], x: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update([0]);
    }
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    x.iter().for_each(|v| h.update(v.to_le_bytes()));
    hex(&h.finalize())
}

pub fn key(parts: &[&str]) -> String {
    sha256_hex(parts.join("\u{1f}").as_bytes())
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
    enabled: bool,
}

impl Cache {
    pub fn new(out: &Path, enabled: bool) -> Self {
        Self { dir: out.join("cache"), enabled }
    }

    pub fn disabled() -> Self {
        Self { dir: PathBuf::new(), enabled: false }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    fn path(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.json"))
    }

    /// A cached value; unreadable entries count as misses.
    pub fn get<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Option<T> {
        if !self.enabled {
            return None;
        }
        let text = std::fs::read_to_string(self.path(kind, key)).ok()?;
        match serde_json::from_str(&text) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {kind}-{key}: {e}");
                None
            }
        }
    }

    pub fn put<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> CliResult<()> {
        if !self.enabled {
            return Ok(());
        }
        std::fs::create_dir_all(&self.dir).map_err(CliError::write(&self.dir))?;
        let path = self.path(kind, key);
        // Write then rename so a concurrent reader never sees a partial file.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(value)?).map_err(CliError::write(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(CliError::write(&path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn fingerprint_sees_ids_and_values() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let ids = vec!["a".to_string(), "b".to_string()];
        let base = fingerprint(&ids, &x);
        assert_eq!(base, fingerprint(&ids, &x));
        assert_ne!(base, fingerprint(&["a".into(), "c".into()], &x));
        let mut y = x.clone();
        y[(1, 1)] = 4.5;
        assert_ne!(base, fingerprint(&ids, &y));
        assert_ne!(key(&["ab", "c"]), key(&["a", "bc"]));
    }

    #[test]
    fn disabled_cache_neither_reads_nor_writes() {
        let dir = tempfile::tempdir().unwrap();
        let off = Cache::new(dir.path(), false);
        off.put("k", "1", &5u32).unwrap();
        assert!(!dir.path().join("cache").exists());
        let on = Cache::new(dir.path(), true);
        assert_eq!(on.get::<u32>("k", "1"), None);
        on.put("k", "1", &5u32).unwrap();
        assert_eq!(on.get::<u32>("k", "1"), Some(5));
        assert_eq!(off.get::<u32>("k", "1"), None);
    }
}
