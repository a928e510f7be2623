//! Append-only on-disk memo for potential evaluations.
//!
//! Each line is `key value stderr`, the key being a SHA-256 digest of
//! whatever identifies the evaluation (word, parameters, policy, seed).
//! Later records win when a key repeats.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CACHE_DIR_ENV: &str = "TRAPWALK_CACHE_DIR";

pub struct PhiCache {
    path: PathBuf,
    map: HashMap<String, (f64, f64)>,
    file: File,
}

impl PhiCache {
    pub fn open(dir: &Path, namespace: &str) -> Result<PhiCache> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{namespace}.cache"));
        let mut map = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                let mut it = line.split_whitespace();
                let (Some(k), Some(v), Some(e)) = (it.next(), it.next(), it.next()) else {
                    return Err(Error::Parse { line: i + 1, msg: format!("bad cache record in {}", path.display()) });
                };
                let parse = |s: &str| {
                    s.parse::<f64>().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })
                };
                map.insert(k.to_string(), (parse(v)?, parse(e)?));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(PhiCache { path, map, file })
    }

    /// Cache under `$TRAPWALK_CACHE_DIR`, if that variable is set.
    pub fn from_env(namespace: &str) -> Result<Option<PhiCache>> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Ok(Some(PhiCache::open(Path::new(&dir), namespace)?)),
            _ => Ok(None),
        }
    }

    pub fn key(parts: &[&str]) -> String {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<(f64, f64)> {
        self.map.get(key).copied()
    }

    pub fn insert(&mut self, key: &str, value: f64, stderr: f64) -> Result<()> {
        writeln!(self.file, "{key} {value} {stderr}")?;
        self.map.insert(key.to_string(), (value, stderr));
        Ok(())
    }
}
