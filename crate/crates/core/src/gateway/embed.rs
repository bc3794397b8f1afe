//! Embedding providers. The hash embedder is the deterministic test/desk
//! provider: token counts are hashed into a fixed number of buckets, so equal
//! texts always embed identically and no network or model is involved.

use sha2::{Digest, Sha256};

use super::{EmbeddingVector, GatewayError};

pub trait Embedder: Send + Sync {
    /// Stable identifier persisted with a store; load rejects mismatches.
    fn provider_id(&self) -> String;

    fn dim(&self) -> usize;

    /// One vector per text, all of [`Embedder::dim`]. Texts must be non-empty.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

/// Deterministic bag-of-tokens embedder.
///
/// Each lowercase alphanumeric token is hashed with SHA-256; the first 8
/// bytes select a bucket and a sign, and the token's count is accumulated
/// there. Cosine over these vectors is a plain term-overlap similarity.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashEmbedder { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(64)
    }
}

impl Embedder for HashEmbedder {
    fn provider_id(&self) -> String {
        format!("hash-v1-d{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        texts
            .iter()
            .map(|text| {
                if text.trim().is_empty() {
                    return Err(GatewayError::InvalidRequest(
                        "cannot embed empty text".into(),
                    ));
                }
                Ok(embed_one(text, self.dim))
            })
            .collect()
    }
}

fn embed_one(text: &str, dim: usize) -> EmbeddingVector {
    let mut values = vec![0.0f64; dim];
    for token in tokens(text) {
        let digest = Sha256::digest(token.as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
    EmbeddingVector { values }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::cosine;

    #[test]
    fn equal_texts_embed_identically() {
        let e = HashEmbedder::default();
        let vs = e.embed(&["a", "a"]).unwrap();
        assert_eq!(vs[0], vs[1]);
    }

    #[test]
    fn all_vectors_share_dim() {
        let e = HashEmbedder::default();
        let vs = e.embed(&["a", "b"]).unwrap();
        assert_eq!(vs[0].dim(), e.dim());
        assert_eq!(vs[1].dim(), e.dim());
    }

    #[test]
    fn empty_text_rejected() {
        let e = HashEmbedder::default();
        assert!(e.embed(&[""]).is_err());
    }

    #[test]
    fn self_similarity_is_one() {
        let e = HashEmbedder::default();
        let vs = e.embed(&["uart serial transmitter"]).unwrap();
        assert!((cosine(&vs[0], &vs[0]) - 1.0).abs() < 1e-9);
    }
}
