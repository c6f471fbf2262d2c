//! Initial column embeddings from a frozen, pluggable encoder.
//!
//! A column is turned into text by sampling up to `m` non-null cells and
//! joining them with [`VALUE_SEPARATOR`]. The text is handed to an
//! [`EmbeddingBackend`]; vectors are quantized to `f32` precision before they
//! enter the pipeline so that a value read back from the on-disk
//! [`EmbeddingCache`] is bit-identical to a freshly computed one.

mod cache;
mod local;
mod remote;

pub use cache::{decode_cache_file, CacheFile, EmbeddingCache};
pub use local::{fnv1a64, LocalHashBackend};
pub use remote::{parse_embeddings_response, RemoteBackend, RemoteConfig, API_KEY_ENV};

use crate::error::{Error, Result};
use crate::table::{sample_column_values, Table};

pub const VALUE_SEPARATOR: &str = " | ";
pub const MAX_SERIALIZED_CHARS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    LocalDeterministic,
    RemoteService,
}

/// A frozen text encoder. Identical text must always map to the identical vector.
pub trait EmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn kind(&self) -> BackendKind;
    /// Embeds each text; the result is order-preserving.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initial,
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnEmbedding {
    pub values: Vec<f64>,
    pub stage: Stage,
}

impl ColumnEmbedding {
    pub fn initial(values: Vec<f64>) -> Self {
        Self {
            values,
            stage: Stage::Initial,
        }
    }

    pub fn refined(values: Vec<f64>) -> Self {
        Self {
            values,
            stage: Stage::Refined,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Joins trimmed values with `" | "`, dropping trailing values that would push
/// the text past [`MAX_SERIALIZED_CHARS`]. A single oversized first value is
/// cut at the character limit.
pub fn serialize_column<S: AsRef<str>>(values: &[S]) -> Result<String> {
    if values.is_empty() {
        return Err(Error::invalid("cannot serialize an empty value list"));
    }
    let sep_len = VALUE_SEPARATOR.chars().count();
    let mut out = String::new();
    let mut len = 0usize;
    for (i, v) in values.iter().enumerate() {
        let v = v.as_ref().trim();
        let vlen = v.chars().count();
        let extra = if i == 0 { vlen } else { sep_len + vlen };
        if len + extra > MAX_SERIALIZED_CHARS {
            if i == 0 {
                out.extend(v.chars().take(MAX_SERIALIZED_CHARS));
            }
            break;
        }
        if i > 0 {
            out.push_str(VALUE_SEPARATOR);
        }
        out.push_str(v);
        len += extra;
    }
    Ok(out)
}

fn check_vector(backend: &dyn EmbeddingBackend, v: &[f64]) -> Result<()> {
    if v.len() != backend.dim() {
        return Err(Error::Embedding {
            column: None,
            message: format!(
                "backend {} returned {} dimensions, expected {}",
                backend.backend_id(),
                v.len(),
                backend.dim()
            ),
            retryable: false,
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Embedding {
            column: None,
            message: format!("backend {} returned a non-finite value", backend.backend_id()),
            retryable: false,
        });
    }
    Ok(())
}

/// Embeds one text with full backend precision.
pub fn embed_text(backend: &dyn EmbeddingBackend, text: &str) -> Result<ColumnEmbedding> {
    if text.is_empty() {
        return Err(Error::invalid("cannot embed empty text"));
    }
    let mut out = backend.embed_batch(&[text])?;
    if out.len() != 1 {
        return Err(Error::Embedding {
            column: None,
            message: format!("backend returned {} vectors for 1 input", out.len()),
            retryable: false,
        });
    }
    let v = out.pop().unwrap();
    check_vector(backend, &v)?;
    Ok(ColumnEmbedding::initial(v))
}

pub(crate) fn quantize(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

/// Serialized text for every column, in column order.
pub fn column_texts(table: &Table, m: usize, seed: u64) -> Result<Vec<String>> {
    table
        .columns()
        .iter()
        .map(|c| serialize_column(&sample_column_values(c, m, seed)?))
        .collect()
}

/// ψ⁽⁰⁾ for every column of `table`: sample, serialize, then embed, consulting
/// the cache first. Misses are sent to the backend in one batch per table.
pub fn column_embeddings(
    table: &Table,
    backend: &dyn EmbeddingBackend,
    m: usize,
    seed: u64,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<ColumnEmbedding>> {
    let texts = column_texts(table, m, seed)?;
    let mut vectors: Vec<Option<Vec<f64>>> = texts
        .iter()
        .map(|t| cache.and_then(|c| c.get(t)))
        .collect();

    // distinct missing texts, remembering the first column that needs each
    let mut missing: Vec<(usize, &str)> = Vec::new();
    for (i, t) in texts.iter().enumerate() {
        if vectors[i].is_none() && !missing.iter().any(|(_, m)| *m == t.as_str()) {
            missing.push((i, t.as_str()));
        }
    }
    if !missing.is_empty() {
        let batch: Vec<&str> = missing.iter().map(|(_, t)| *t).collect();
        let fresh = backend
            .embed_batch(&batch)
            .map_err(|e| e.with_column(missing[0].0))?;
        if fresh.len() != batch.len() {
            return Err(Error::Embedding {
                column: Some(missing[0].0),
                message: format!("backend returned {} vectors for {} inputs", fresh.len(), batch.len()),
                retryable: false,
            });
        }
        for ((col, text), v) in missing.iter().zip(fresh) {
            check_vector(backend, &v).map_err(|e| e.with_column(*col))?;
            let v = quantize(&v);
            if let Some(c) = cache {
                c.insert(text, &v)?;
            }
            for (i, t) in texts.iter().enumerate() {
                if vectors[i].is_none() && t == text {
                    vectors[i] = Some(v.clone());
                }
            }
        }
    }
    Ok(vectors
        .into_iter()
        .map(|v| ColumnEmbedding::initial(v.expect("every column resolved")))
        .collect())
}
