use super::{BackendKind, EmbeddingBackend, VALUE_SEPARATOR};
use crate::error::{Error, Result};

/// Number of trailing dimensions reserved for column statistics.
const STAT_DIMS: usize = 4;
const STAT_WEIGHT: f64 = 0.5;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic, dependency-free column encoder.
///
/// Character trigrams of every value (padded with `^`/`$`) are hashed into
/// `dim - 4` buckets; the bucket counts are unit-normalized and followed by
/// four statistics: mean value length, digit fraction, alphabetic fraction and
/// value count (lengths and counts squashed as `x / (x + 8)`). The full vector
/// is L2-normalized. Trigrams never cross value boundaries, so the embedding
/// depends only on the multiset of values.
#[derive(Debug, Clone)]
pub struct LocalHashBackend {
    dim: usize,
    id: String,
}

impl LocalHashBackend {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::invalid(format!("embedding dimension must be at least 8, got {dim}")));
        }
        Ok(Self {
            dim,
            id: format!("local-hash3-d{dim}"),
        })
    }

    /// Rebuilds the backend named by a recorded backend id, if it is one of ours.
    pub fn from_backend_id(id: &str) -> Option<Self> {
        let dim = id.strip_prefix("local-hash3-d")?.parse().ok()?;
        Self::new(dim).ok()
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let buckets = self.dim - STAT_DIMS;
        let mut v = vec![0.0; self.dim];
        let mut n_values = 0usize;
        let mut n_chars = 0usize;
        let mut n_digit = 0usize;
        let mut n_alpha = 0usize;
        let mut gram = [0u8; 12];

        for value in text.split(VALUE_SEPARATOR) {
            n_values += 1;
            let chars: Vec<char> = std::iter::once('^')
                .chain(value.chars())
                .chain(std::iter::once('$'))
                .collect();
            for c in &chars[1..chars.len() - 1] {
                n_chars += 1;
                n_digit += c.is_ascii_digit() as usize;
                n_alpha += c.is_alphabetic() as usize;
            }
            for w in chars.windows(3) {
                let mut len = 0;
                for c in w {
                    len += c.encode_utf8(&mut gram[len..]).len();
                }
                let b = (fnv1a64(&gram[..len]) % buckets as u64) as usize;
                v[b] += 1.0;
            }
        }

        let gram_norm = v[..buckets].iter().map(|x| x * x).sum::<f64>().sqrt();
        if gram_norm > 0.0 {
            v[..buckets].iter_mut().for_each(|x| *x /= gram_norm);
        }
        let squash = |x: f64| x / (x + 8.0);
        let mean_len = n_chars as f64 / n_values as f64;
        let total = n_chars.max(1) as f64;
        v[buckets] = STAT_WEIGHT * squash(mean_len);
        v[buckets + 1] = STAT_WEIGHT * n_digit as f64 / total;
        v[buckets + 2] = STAT_WEIGHT * n_alpha as f64 / total;
        v[buckets + 3] = STAT_WEIGHT * squash(n_values as f64);

        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl EmbeddingBackend for LocalHashBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> BackendKind {
        BackendKind::LocalDeterministic
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_text;
    use proptest::prelude::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn too_small_dimension_is_rejected() {
        assert!(LocalHashBackend::new(7).is_err());
        assert!(LocalHashBackend::new(8).is_ok());
    }

    #[test]
    fn backend_id_round_trips() {
        let b = LocalHashBackend::new(48).unwrap();
        assert_eq!(LocalHashBackend::from_backend_id(b.backend_id()).unwrap().dim(), 48);
        assert!(LocalHashBackend::from_backend_id("remote:x:d48").is_none());
        assert!(LocalHashBackend::from_backend_id("local-hash3-d4").is_none());
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let b = LocalHashBackend::new(64).unwrap();
        let x = embed_text(&b, "Paris | Lyon").unwrap();
        let y = embed_text(&b, "Paris | Lyon").unwrap();
        assert_eq!(x, y);
        assert!((x.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distinct_strings_are_dissimilar() {
        let b = LocalHashBackend::new(64).unwrap();
        let a = b.embed_one("aaaa");
        let z = b.embed_one("zzzz");
        assert!(cosine(&a, &z) < 0.9, "cos = {}", cosine(&a, &z));
    }

    #[test]
    fn value_order_does_not_matter() {
        let b = LocalHashBackend::new(64).unwrap();
        assert_eq!(b.embed_one("1999 | 2001 | abc"), b.embed_one("abc | 1999 | 2001"));
    }

    proptest! {
        #[test]
        fn always_unit_norm_and_finite(text in "\\PC{1,200}", dim in 8usize..200) {
            let b = LocalHashBackend::new(dim).unwrap();
            let v = b.embed_one(&text);
            prop_assert_eq!(v.len(), dim);
            prop_assert!(v.iter().all(|x| x.is_finite()));
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
