//! Vector store with corpus management, chunking, exact cosine search, and a
//! bounded multi-hop retrieval loop.
//!
//! Search is exact (flat) cosine over every chunk in scope. Corpora are a few
//! thousand chunks at most, so determinism wins over indexing tricks.

mod chunk;
mod multihop;
mod persist;

pub use chunk::{chunk_spans, ChunkPolicy};
pub use multihop::{multi_hop_query, MultiHopAnswer};
pub use persist::{load_store, persist_store};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{cosine, Embedder, EmbeddingVector, GatewayError};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("corpus `{0}` does not exist or is empty")]
    CorpusMissing(String),
    #[error("embedding dim mismatch: store is {store}, provider returned {got}")]
    DimMismatch { store: usize, got: usize },
    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("store was built with provider `{found}`, loaded with `{expected}`")]
    ProviderMismatch { expected: String, found: String },
    #[error("retrieval hop limit reached after {0} hops")]
    HopLimit(usize),
    #[error("gateway: {0}")]
    Provider(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("store data malformed: {0}")]
    Malformed(String),
}

/// Corpus tag. The three standing corpora get stable names; anything else is
/// `custom:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CorpusName {
    Errors,
    Ips,
    Docs,
    Custom(String),
}

impl fmt::Display for CorpusName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusName::Errors => f.write_str("errors"),
            CorpusName::Ips => f.write_str("ips"),
            CorpusName::Docs => f.write_str("docs"),
            CorpusName::Custom(name) => write!(f, "custom:{name}"),
        }
    }
}

impl From<CorpusName> for String {
    fn from(c: CorpusName) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for CorpusName {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        Ok(match s.as_str() {
            "errors" => CorpusName::Errors,
            "ips" => CorpusName::Ips,
            "docs" => CorpusName::Docs,
            other => match other.strip_prefix("custom:") {
                Some(name) if !name.is_empty() => CorpusName::Custom(name.to_string()),
                _ => return Err(format!("unknown corpus name `{other}`")),
            },
        })
    }
}

/// A source document before chunking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// An embedded fragment of a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub corpus: CorpusName,
    pub text: String,
    pub embedding: EmbeddingVector,
    /// Byte span within the parent body.
    pub char_span: (usize, usize),
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// One search result.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub chunk: Chunk,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub docs: usize,
    pub chunks: usize,
    /// (doc_id, reason) for documents skipped on embed failure.
    pub skipped: Vec<(String, String)>,
}

/// Search scope: one corpus or everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Corpus(CorpusName),
    All,
}

pub struct VectorStore {
    embedder: Arc<dyn Embedder>,
    /// corpus -> doc_id -> chunks (in document order).
    corpora: BTreeMap<CorpusName, BTreeMap<String, Vec<Chunk>>>,
    policy: ChunkPolicy,
}

impl fmt::Debug for VectorStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorStore")
            .field("provider_id", &self.provider_id())
            .field("corpora", &self.corpora.len())
            .finish()
    }
}

impl VectorStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        VectorStore {
            embedder,
            corpora: BTreeMap::new(),
            policy: ChunkPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: ChunkPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn provider_id(&self) -> String {
        self.embedder.provider_id()
    }

    pub fn policy(&self) -> &ChunkPolicy {
        &self.policy
    }

    pub fn corpus_names(&self) -> Vec<CorpusName> {
        self.corpora.keys().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.corpora.values().all(|docs| docs.is_empty())
    }

    /// Chunk, embed, and index documents. Re-ingesting a doc_id replaces its
    /// chunks, so ingest is idempotent per document.
    pub fn ingest(&mut self, corpus: CorpusName, documents: &[Document]) -> Result<IngestReport, KbError> {
        let mut report = IngestReport::default();
        for doc in documents {
            if doc.body.is_empty() {
                report.skipped.push((doc.doc_id.clone(), "empty body".into()));
                continue;
            }
            let spans = chunk_spans(&doc.body, &self.policy);
            let texts: Vec<&str> = spans.iter().map(|&(s, e)| &doc.body[s..e]).collect();
            let embeddings = match self.embedder.embed(&texts) {
                Ok(e) => e,
                Err(e) => {
                    report.skipped.push((doc.doc_id.clone(), e.to_string()));
                    continue;
                }
            };
            let mut chunks = Vec::with_capacity(spans.len());
            let mut ok = true;
            for (i, (&span, embedding)) in spans.iter().zip(embeddings).enumerate() {
                if embedding.dim() != self.embedder.dim() {
                    return Err(KbError::DimMismatch {
                        store: self.embedder.dim(),
                        got: embedding.dim(),
                    });
                }
                if embedding.is_zero() {
                    // cosine is undefined for zero vectors
                    report
                        .skipped
                        .push((doc.doc_id.clone(), "zero-vector embedding".into()));
                    ok = false;
                    break;
                }
                chunks.push(Chunk {
                    chunk_id: format!("{}:{i:04}", doc.doc_id),
                    doc_id: doc.doc_id.clone(),
                    corpus: corpus.clone(),
                    text: texts[i].to_string(),
                    embedding,
                    char_span: span,
                    metadata: doc.metadata.clone(),
                });
            }
            if !ok {
                continue;
            }
            report.docs += 1;
            report.chunks += chunks.len();
            self.corpora
                .entry(corpus.clone())
                .or_default()
                .insert(doc.doc_id.clone(), chunks);
        }
        Ok(report)
    }

    fn chunks_in_scope(&self, scope: &Scope) -> Result<Vec<&Chunk>, KbError> {
        let mut out = Vec::new();
        match scope {
            Scope::Corpus(name) => {
                let docs = self
                    .corpora
                    .get(name)
                    .filter(|d| !d.is_empty())
                    .ok_or_else(|| KbError::CorpusMissing(name.to_string()))?;
                for chunks in docs.values() {
                    out.extend(chunks.iter());
                }
            }
            Scope::All => {
                for docs in self.corpora.values() {
                    for chunks in docs.values() {
                        out.extend(chunks.iter());
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact top-k cosine search. Ties break by ascending chunk_id.
    pub fn search(&self, scope: &Scope, query: &str, k: usize) -> Result<Vec<RetrievalHit>, KbError> {
        let candidates = self.chunks_in_scope(scope)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let query_vec = self
            .embedder
            .embed(&[query])?
            .pop()
            .expect("one vector per text");
        let mut scored: Vec<(&Chunk, f64)> = candidates
            .into_iter()
            .map(|c| (c, cosine(&c.embedding, &query_vec)))
            .collect();
        scored.sort_by(|(ca, sa), (cb, sb)| {
            sb.partial_cmp(sa)
                .expect("finite scores")
                .then_with(|| ca.chunk_id.cmp(&cb.chunk_id))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (chunk, score))| RetrievalHit {
                chunk: chunk.clone(),
                score,
                rank: i + 1,
            })
            .collect())
    }

    /// Look up one chunk by id, across all corpora.
    pub fn get_chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.corpora
            .values()
            .flat_map(|docs| docs.values())
            .flatten()
            .find(|c| c.chunk_id == chunk_id)
    }

    /// All chunks in deterministic (corpus, doc, index) order.
    pub fn all_chunks(&self) -> Vec<&Chunk> {
        self.chunks_in_scope(&Scope::All).expect("ALL never missing")
    }

    pub(crate) fn insert_raw_chunk(&mut self, chunk: Chunk) {
        self.corpora
            .entry(chunk.corpus.clone())
            .or_default()
            .entry(chunk.doc_id.clone())
            .or_default()
            .push(chunk);
    }
}

/// Rebuild a document body from its chunks by dropping each chunk's overlap
/// with its predecessor.
pub fn reconstruct_body(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    let mut prev_end = 0usize;
    for chunk in chunks {
        let (start, end) = chunk.char_span;
        let skip = prev_end.saturating_sub(start);
        out.push_str(&chunk.text[skip..]);
        prev_end = end;
    }
    out
}
