//! Document embeddings: the `EMB1` binary file and a seeded fallback embedder.
//!
//! `EMB1` layout, all integers little-endian:
//!
//! ```text
//! offset  size          field
//! 0       4             magic b"EMB1"
//! 4       4             n_docs (u32)
//! 8       4             dim (u32)
//! 12      1             normalized flag (0 or 1)
//! 13      4*n_docs*dim  f32 values, row-major
//! ...     rest          n_docs doc ids, each terminated by '\n'
//!                       optional trailing lines starting with '#'
//! ```
//!
//! A 1x2 file with values `[1.0, 0.0]`, normalized, id `a`:
//!
//! ```text
//! 45 4d 42 31 01 00 00 00 02 00 00 00 01 00 00 80 3f 00 00 00 00 61 0a
//! ```

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 13;
/// Hashed vocabulary size of the fallback embedder.
pub const HASH_BUCKETS: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub n_docs: usize,
    pub dim: usize,
    /// Row-major `n_docs * dim` values.
    pub values: Vec<f32>,
    pub doc_ids: Vec<String>,
    pub normalized: bool,
    /// `#`-prefixed trailer lines, e.g. the encoder checkpoint name.
    pub comments: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows widened to f64 for downstream numerics.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_docs)
            .map(|i| self.row(i).iter().map(|&x| x as f64).collect())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_docs as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.push(self.normalized as u8);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.doc_ids {
            out.extend_from_slice(id.as_bytes());
            out.push(b'\n');
        }
        for c in &self.comments {
            out.extend_from_slice(c.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingMatrix> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Embedding(format!(
                "header truncated: expected {HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Embedding(format!("bad magic {:?}", &bytes[..4])));
        }
        let n_docs = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let normalized = match bytes[12] {
            0 => false,
            1 => true,
            b => return Err(Error::Embedding(format!("bad normalized flag {b}"))),
        };
        let payload = n_docs
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Embedding("payload size overflows".into()))?;
        let available = bytes.len() - HEADER_LEN;
        if available < payload {
            return Err(Error::Embedding(format!(
                "payload truncated: expected {payload} bytes, got {available}"
            )));
        }
        let values: Vec<f32> = bytes[HEADER_LEN..HEADER_LEN + payload]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Embedding(format!(
                "non-finite value in row {} (column {})",
                i / dim.max(1),
                i % dim.max(1)
            )));
        }
        let trailer = std::str::from_utf8(&bytes[HEADER_LEN + payload..])
            .map_err(|e| Error::Embedding(format!("doc ids are not UTF-8: {e}")))?;
        let mut lines: Vec<&str> = trailer.split('\n').collect();
        if lines.last() == Some(&"") {
            lines.pop();
        }
        if lines.len() < n_docs {
            return Err(Error::Embedding(format!(
                "expected {n_docs} doc ids, found {}",
                lines.len()
            )));
        }
        let doc_ids: Vec<String> = lines[..n_docs].iter().map(|s| s.to_string()).collect();
        let comments: Vec<String> = lines[n_docs..].iter().map(|s| s.to_string()).collect();
        if let Some(c) = comments.iter().find(|c| !c.starts_with('#')) {
            return Err(Error::Embedding(format!("unexpected trailer line `{c}`")));
        }
        if normalized {
            for i in 0..n_docs {
                let norm = values[i * dim..(i + 1) * dim]
                    .iter()
                    .map(|&x| (x as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if (norm - 1.0).abs() > 1e-5 {
                    return Err(Error::Embedding(format!(
                        "row {i} flagged normalized but has norm {norm}"
                    )));
                }
            }
        }
        Ok(EmbeddingMatrix {
            n_docs,
            dim,
            values,
            doc_ids,
            normalized,
            comments,
        })
    }

    /// Reorders rows to follow `corpus_ids`; the two id sets must be equal.
    pub fn aligned_to(&self, corpus_ids: &[String]) -> Result<EmbeddingMatrix> {
        let index: HashMap<&str, usize> = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        if index.len() != self.doc_ids.len() {
            return Err(Error::Embedding("duplicate doc ids".into()));
        }
        let corpus: HashSet<&str> = corpus_ids.iter().map(String::as_str).collect();
        let missing: Vec<&str> = corpus_ids
            .iter()
            .map(String::as_str)
            .filter(|id| !index.contains_key(id))
            .take(5)
            .collect();
        let extra: Vec<&str> = self
            .doc_ids
            .iter()
            .map(String::as_str)
            .filter(|id| !corpus.contains(id))
            .take(5)
            .collect();
        if !missing.is_empty() || !extra.is_empty() || corpus.len() != corpus_ids.len() {
            return Err(Error::Embedding(format!(
                "doc ids do not match corpus: missing {missing:?}, unexpected {extra:?}"
            )));
        }
        let mut values = Vec::with_capacity(self.values.len());
        for id in corpus_ids {
            values.extend_from_slice(self.row(index[id.as_str()]));
        }
        Ok(EmbeddingMatrix {
            values,
            doc_ids: corpus_ids.to_vec(),
            ..self.clone()
        })
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fallback_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed TF-IDF bag of words, projected to `dim` by a seeded ±1 matrix and
/// L2-normalized. A document without tokens maps to the first basis vector.
pub fn fallback_embed(
    corpus: &[String],
    ids: &[String],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot embed an empty corpus".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidInput(
            "embedding dim must be at least 2".into(),
        ));
    }
    if ids.len() != corpus.len() {
        return Err(Error::LengthMismatch {
            left: corpus.len(),
            right: ids.len(),
        });
    }
    // (bucket, sign) counts per document
    let docs: Vec<Vec<(u64, f64)>> = corpus
        .iter()
        .map(|text| {
            let mut counts: HashMap<u64, f64> = HashMap::new();
            for tok in fallback_tokens(text) {
                let h = fnv1a(tok.as_bytes());
                let bucket = h % HASH_BUCKETS;
                let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
                *counts.entry(bucket).or_insert(0.0) += sign;
            }
            let mut v: Vec<(u64, f64)> = counts.into_iter().filter(|(_, c)| *c != 0.0).collect();
            v.sort_by_key(|(b, _)| *b);
            v
        })
        .collect();
    let mut df: HashMap<u64, usize> = HashMap::new();
    for d in &docs {
        for (b, _) in d {
            *df.entry(*b).or_insert(0) += 1;
        }
    }
    let n = corpus.len() as f64;
    let mut values = Vec::with_capacity(corpus.len() * dim);
    for d in &docs {
        let mut row = vec![0.0f64; dim];
        for &(bucket, tf) in d {
            let idf = ((1.0 + n) / (1.0 + df[&bucket] as f64)).ln() + 1.0;
            let w = tf * idf;
            let base = splitmix64(seed ^ splitmix64(bucket));
            for (j, r) in row.iter_mut().enumerate() {
                let bits = splitmix64(base.wrapping_add(j as u64));
                *r += if bits & 1 == 0 { w } else { -w };
            }
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.extend(row.iter().map(|x| (x / norm) as f32));
        } else {
            values.push(1.0);
            values.extend(std::iter::repeat(0.0).take(dim - 1));
        }
    }
    Ok(EmbeddingMatrix {
        n_docs: corpus.len(),
        dim,
        values,
        doc_ids: ids.to_vec(),
        normalized: true,
        comments: vec!["# fallback hashed tf-idf".to_string()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: usize, dim: usize, values: Vec<f32>) -> EmbeddingMatrix {
        EmbeddingMatrix {
            n_docs: n,
            dim,
            values,
            doc_ids: (0..n).map(|i| format!("d{i}")).collect(),
            normalized: false,
            comments: vec![],
        }
    }

    #[test]
    fn documented_hex_example() {
        let e = EmbeddingMatrix {
            n_docs: 1,
            dim: 2,
            values: vec![1.0, 0.0],
            doc_ids: vec!["a".into()],
            normalized: true,
            comments: vec![],
        };
        let hex: Vec<String> = e.to_bytes().iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(
            hex.join(" "),
            "45 4d 42 31 01 00 00 00 02 00 00 00 01 00 00 80 3f 00 00 00 00 61 0a"
        );
    }

    #[test]
    fn two_by_three() {
        let e = m(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let back = EmbeddingMatrix::from_bytes(&e.to_bytes()).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn truncated_payload() {
        let e = m(2, 3, vec![1.0; 6]);
        let bytes = e.to_bytes();
        let err = EmbeddingMatrix::from_bytes(&bytes[..HEADER_LEN + 20]).unwrap_err();
        assert!(
            err.to_string().contains("expected 24 bytes, got 20"),
            "{err}"
        );
    }

    #[test]
    fn nan_entry() {
        let e = m(2, 3, vec![1.0, 2.0, 3.0, 4.0, f32::NAN, 6.0]);
        let err = EmbeddingMatrix::from_bytes(&e.to_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = m(1, 2, vec![0.0, 1.0]).to_bytes();
        bytes[0] = b'X';
        assert!(EmbeddingMatrix::from_bytes(&bytes).is_err());
    }

    #[test]
    fn trailer_comment_is_kept() {
        let mut e = m(1, 2, vec![0.0, 1.0]);
        e.comments.push("# checkpoint all-MiniLM-L6-v2".into());
        assert_eq!(EmbeddingMatrix::from_bytes(&e.to_bytes()).unwrap(), e);
    }

    #[test]
    fn id_mismatch() {
        let e = m(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        assert!(e.aligned_to(&["d0".into(), "zz".into()]).is_err());
        let swapped = e.aligned_to(&["d1".into(), "d0".into()]).unwrap();
        assert_eq!(swapped.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn fallback_properties() {
        let corpus: Vec<String> = ["buy the dip", "buy the dip", "sell everything now"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let a = fallback_embed(&corpus, &ids, 32, 7).unwrap();
        assert_eq!(a.row(0), a.row(1));
        for i in 0..3 {
            let n: f64 = a.row(i).iter().map(|&x| (x as f64).powi(2)).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-6);
        }
        let b = fallback_embed(&corpus, &ids, 32, 8).unwrap();
        assert_ne!(a.values, b.values);
        assert_eq!(a, fallback_embed(&corpus, &ids, 32, 7).unwrap());
        assert!(fallback_embed(&[], &[], 32, 7).is_err());
        assert!(fallback_embed(&corpus, &ids, 1, 7).is_err());
    }
}
