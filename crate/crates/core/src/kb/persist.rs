//! On-disk store layout: `meta.json` (schema version, dim, provider id) plus
//! `chunks.jsonl` with one chunk per line in deterministic order. Loading
//! rejects a store built with a different embedding provider.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::Embedder;

use super::{Chunk, KbError, VectorStore};

pub const SCHEMA_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const CHUNKS_FILE: &str = "chunks.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct StoreMeta {
    schema_version: u32,
    dim: usize,
    provider_id: String,
}

/// Write the store to a directory. Byte-stable for equal stores.
pub fn persist_store(store: &VectorStore, dir: &Path) -> Result<(), KbError> {
    fs::create_dir_all(dir)?;
    let meta = StoreMeta {
        schema_version: SCHEMA_VERSION,
        dim: store.dim(),
        provider_id: store.provider_id(),
    };
    fs::write(
        dir.join(META_FILE),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    let mut lines = String::new();
    for chunk in store.all_chunks() {
        lines.push_str(&serde_json::to_string(chunk).expect("chunk serializes"));
        lines.push('\n');
    }
    fs::write(dir.join(CHUNKS_FILE), lines)?;
    Ok(())
}

/// Load a store persisted by [`persist_store`], verifying provider identity.
pub fn load_store(dir: &Path, embedder: Arc<dyn Embedder>) -> Result<VectorStore, KbError> {
    let meta_text = fs::read_to_string(dir.join(META_FILE))?;
    let meta: StoreMeta =
        serde_json::from_str(&meta_text).map_err(|e| KbError::Malformed(e.to_string()))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(KbError::SchemaVersionMismatch {
            expected: SCHEMA_VERSION,
            found: meta.schema_version,
        });
    }
    if meta.provider_id != embedder.provider_id() {
        return Err(KbError::ProviderMismatch {
            expected: embedder.provider_id(),
            found: meta.provider_id,
        });
    }
    let mut store = VectorStore::new(embedder);
    let chunks_text = fs::read_to_string(dir.join(CHUNKS_FILE))?;
    for (i, line) in chunks_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let chunk: Chunk = serde_json::from_str(line)
            .map_err(|e| KbError::Malformed(format!("chunk line {}: {e}", i + 1)))?;
        if chunk.embedding.dim() != store.dim() {
            return Err(KbError::DimMismatch {
                store: store.dim(),
                got: chunk.embedding.dim(),
            });
        }
        store.insert_raw_chunk(chunk);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::HashEmbedder;
    use crate::kb::{CorpusName, Document, Scope};
    use tempfile::TempDir;

    fn seeded() -> VectorStore {
        let mut store = VectorStore::new(Arc::new(HashEmbedder::default()));
        let docs: Vec<Document> = (0..5)
            .map(|i| Document {
                doc_id: format!("d{i}"),
                title: format!("doc {i}"),
                body: format!("document number {i} about topic {}", i * 7),
                metadata: Default::default(),
            })
            .collect();
        store.ingest(CorpusName::Docs, &docs).unwrap();
        store
    }

    #[test]
    fn round_trip_preserves_search_results() {
        let store = seeded();
        let tmp = TempDir::new().unwrap();
        persist_store(&store, tmp.path()).unwrap();
        let loaded = load_store(tmp.path(), Arc::new(HashEmbedder::default())).unwrap();
        for query in ["topic 7", "document number 3", "unrelated text"] {
            let a = store.search(&Scope::All, query, 5).unwrap();
            let b = loaded.search(&Scope::All, query, 5).unwrap();
            assert_eq!(a, b, "query {query:?}");
        }
    }

    #[test]
    fn provider_mismatch_rejected() {
        let store = seeded();
        let tmp = TempDir::new().unwrap();
        persist_store(&store, tmp.path()).unwrap();
        let err = load_store(tmp.path(), Arc::new(HashEmbedder::new(16))).unwrap_err();
        assert!(matches!(err, KbError::ProviderMismatch { .. }));
    }

    #[test]
    fn empty_store_round_trips() {
        let store = VectorStore::new(Arc::new(HashEmbedder::default()));
        let tmp = TempDir::new().unwrap();
        persist_store(&store, tmp.path()).unwrap();
        let loaded = load_store(tmp.path(), Arc::new(HashEmbedder::default())).unwrap();
        assert!(loaded.is_empty());
        assert!(loaded.search(&Scope::All, "anything", 3).unwrap().is_empty());
    }
}
