//! Append-only on-disk embedding cache, one file per backend.
//!
//! Layout (little-endian):
//!
//! ```text
//! header:  b"TECACHE1" | backend_id: u32 len + UTF-8 | dim: u32
//! record:  key: [u8; 32] (SHA-256 of the column text) | dim: u32 | dim x f32
//! ```
//!
//! Vectors are stored as `f32`. Callers insert vectors that are already
//! rounded to `f32` precision, so a hit reproduces the original exactly.
//! A torn record at the tail (interrupted append) is dropped on open.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use crate::codec::{sha256, short_hex, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TECACHE1";

#[derive(Debug, Clone, PartialEq)]
pub struct CacheFile {
    pub backend_id: String,
    pub dim: usize,
    pub records: Vec<([u8; 32], Vec<f32>)>,
    /// Byte length of the well-formed prefix.
    pub valid_len: usize,
}

pub fn decode_cache_file(bytes: &[u8]) -> Result<CacheFile> {
    let mut r = ByteReader::new(bytes, "embedding cache");
    r.expect_magic(MAGIC)?;
    let backend_id = r.str()?;
    let dim = r.u32()? as usize;
    let record_len = 32 + 4 + 4 * dim;
    let mut records = Vec::new();
    let mut valid_len = r.position();
    while r.remaining() >= record_len {
        let key = r.array::<32>()?;
        let d = r.u32()? as usize;
        if d != dim {
            return Err(Error::format(format!(
                "embedding cache: record at offset {valid_len} has dimension {d}, header says {dim}"
            )));
        }
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(r.f32()?);
        }
        records.push((key, v));
        valid_len = r.position();
    }
    Ok(CacheFile {
        backend_id,
        dim,
        records,
        valid_len,
    })
}

pub struct EmbeddingCache {
    backend_id: String,
    dim: usize,
    path: Option<PathBuf>,
    map: RwLock<HashMap<[u8; 32], Vec<f32>>>,
    file: Mutex<Option<File>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

fn file_name(backend_id: &str) -> String {
    let safe: String = backend_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}-{}.embcache", short_hex(&sha256(backend_id.as_bytes())))
}

impl EmbeddingCache {
    pub fn in_memory(backend_id: &str, dim: usize) -> Self {
        Self {
            backend_id: backend_id.to_string(),
            dim,
            path: None,
            map: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    /// Opens (or creates) the cache file for `backend_id` inside `dir`.
    pub fn open(dir: &Path, backend_id: &str, dim: usize) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(file_name(backend_id));
        let mut map = HashMap::new();
        let file = if path.exists() {
            let bytes = fs::read(&path)?;
            let decoded = decode_cache_file(&bytes)?;
            if decoded.backend_id != backend_id || decoded.dim != dim {
                return Err(Error::format(format!(
                    "{}: cache belongs to {} (d={}), not {backend_id} (d={dim})",
                    path.display(),
                    decoded.backend_id,
                    decoded.dim
                )));
            }
            if decoded.valid_len < bytes.len() {
                tracing::warn!(
                    path = %path.display(),
                    dropped = bytes.len() - decoded.valid_len,
                    "dropping torn tail record from embedding cache"
                );
            }
            map.extend(decoded.records);
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(decoded.valid_len as u64)?;
            drop(f);
            OpenOptions::new().append(true).open(&path)?
        } else {
            let mut w = ByteWriter::new();
            w.bytes(MAGIC);
            w.str(backend_id);
            w.u32(dim as u32);
            let mut f = File::create(&path)?;
            f.write_all(&w.into_inner())?;
            f.flush()?;
            drop(f);
            OpenOptions::new().append(true).open(&path)?
        };
        Ok(Self {
            backend_id: backend_id.to_string(),
            dim,
            path: Some(path),
            map: RwLock::new(map),
            file: Mutex::new(Some(file)),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (hits, misses) since the cache was opened.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }

    pub fn get(&self, text: &str) -> Option<Vec<f64>> {
        let key = sha256(text.as_bytes());
        let found = self
            .map
            .read()
            .unwrap()
            .get(&key)
            .map(|v| v.iter().map(|&x| x as f64).collect());
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    pub fn insert(&self, text: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(format!(
                "cache for {} holds {}-d vectors, got {}",
                self.backend_id,
                self.dim,
                vector.len()
            )));
        }
        let key = sha256(text.as_bytes());
        if self.map.read().unwrap().contains_key(&key) {
            return Ok(());
        }
        let stored: Vec<f32> = vector.iter().map(|&x| x as f32).collect();
        if let Some(file) = self.file.lock().unwrap().as_mut() {
            let mut w = ByteWriter::new();
            w.bytes(&key);
            w.u32(self.dim as u32);
            stored.iter().for_each(|&x| w.f32(x));
            file.write_all(&w.into_inner())?;
            file.flush()?;
        }
        self.map.write().unwrap().insert(key, stored);
        Ok(())
    }
}
