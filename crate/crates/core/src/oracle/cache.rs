//! On-disk cache of solved roots.
//!
//! The cache is a flat append-only binary file; see FORMATS.md for the
//! record layout.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SampleConfig};

const MAGIC: &[u8; 8] = b"TLQEXV1\0";
pub const CACHE_FILE: &str = "qexact.idx";

/// First eight bytes (little endian) of the SHA-256 of the parameters' JSON.
pub fn params_hash(p: &ModelParams) -> u64 {
    let json = serde_json::to_vec(p).expect("parameters serialise");
    let digest = Sha256::digest(&json);
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

fn config_counts(cfg: &SampleConfig) -> Vec<u16> {
    cfg.a
        .iter()
        .chain(&cfg.b)
        .chain(cfg.c.iter().flatten())
        .map(|&x| x as u16)
        .collect()
}

pub struct ExactCache {
    path: PathBuf,
    entries: HashMap<(u64, u8, u8, Vec<u16>), f64>,
    writer: Option<BufWriter<File>>,
}

impl ExactCache {
    /// Open (creating if needed) the cache file inside `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            let mut bytes = Vec::new();
            BufReader::new(File::open(&path)?).read_to_end(&mut bytes)?;
            if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
                return Err(Error::InvalidArgument(format!(
                    "{} is not a cache file",
                    path.display()
                )));
            }
            let mut pos = MAGIC.len();
            while pos < bytes.len() {
                let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
                    let s = bytes
                        .get(*pos..*pos + n)
                        .ok_or_else(|| Error::InvalidArgument("truncated cache record".into()))?;
                    *pos += n;
                    Ok(s)
                };
                let hash = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
                let k = take(&mut pos, 1)?[0];
                let l = take(&mut pos, 1)?[0];
                let len = k as usize + l as usize + k as usize * l as usize;
                let counts: Vec<u16> = take(&mut pos, 2 * len)?
                    .chunks(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect();
                let value = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
                entries.insert((hash, k, l, counts), value);
            }
        }
        Ok(ExactCache {
            path,
            entries,
            writer: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, p: &ModelParams, cfg: &SampleConfig) -> Option<f64> {
        self.entries
            .get(&(params_hash(p), p.k as u8, p.l as u8, config_counts(cfg)))
            .copied()
    }

    pub fn insert(&mut self, p: &ModelParams, cfg: &SampleConfig, value: f64) -> Result<()> {
        let key = (params_hash(p), p.k as u8, p.l as u8, config_counts(cfg));
        if self.entries.contains_key(&key) {
            return Ok(());
        }
        if self.writer.is_none() {
            let fresh = !self.path.exists();
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)?;
            let mut w = BufWriter::new(file);
            if fresh {
                w.write_all(MAGIC)?;
            }
            self.writer = Some(w);
        }
        let w = self.writer.as_mut().expect("writer opened");
        w.write_all(&key.0.to_le_bytes())?;
        w.write_all(&[key.1, key.2])?;
        for c in &key.3 {
            w.write_all(&c.to_le_bytes())?;
        }
        w.write_all(&value.to_le_bytes())?;
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

impl Drop for ExactCache {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
