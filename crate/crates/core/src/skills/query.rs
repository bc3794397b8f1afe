//! Knowledge-base query skills: IP catalog search and documentation search
//! with optional answer synthesis.

use crate::gateway::{chat, ChatBackend, ChatMessage, DecodeParams, ModelProfile};
use crate::kb::{CorpusName, RetrievalHit, Scope, VectorStore};

use super::SkillError;

/// One IP catalog match.
#[derive(Debug, Clone, PartialEq)]
pub struct IpMatch {
    pub name: String,
    pub description: String,
    pub source_url: Option<String>,
    pub score: f64,
}

/// Search the IP catalog corpus. IP documents carry their display name and
/// source URL in metadata (`name`, `source_url`), falling back to doc_id.
pub fn query_opensource_ips(
    store: &VectorStore,
    query: &str,
    k: usize,
) -> Result<Vec<IpMatch>, SkillError> {
    let hits = store.search(&Scope::Corpus(CorpusName::Ips), query, k)?;
    Ok(hits
        .into_iter()
        .map(|hit| IpMatch {
            name: hit
                .chunk
                .metadata
                .get("name")
                .cloned()
                .unwrap_or_else(|| hit.chunk.doc_id.clone()),
            description: hit.chunk.text.clone(),
            source_url: hit.chunk.metadata.get("source_url").cloned(),
            score: hit.score,
        })
        .collect())
}

/// Documentation search result: ranked passages, plus a synthesized answer
/// when a gateway was available and responsive.
#[derive(Debug, Clone, PartialEq)]
pub struct DocsAnswer {
    pub passages: Vec<RetrievalHit>,
    pub answer: Option<String>,
}

/// Search the docs corpus; with a gateway, synthesize a grounded answer
/// citing the retrieved passages. Provider failure degrades to
/// passages-only rather than erroring.
pub fn query_docs(
    store: &VectorStore,
    query: &str,
    k: usize,
    gateway: Option<(&ModelProfile, &dyn ChatBackend)>,
) -> Result<DocsAnswer, SkillError> {
    let passages = store.search(&Scope::Corpus(CorpusName::Docs), query, k)?;
    let answer = gateway.and_then(|(profile, backend)| {
        let context: String = passages
            .iter()
            .map(|h| format!("[{}] {}\n", h.chunk.chunk_id, h.chunk.text))
            .collect();
        let prompt = format!(
            "Answer the question using only the passages below, citing them as [chunk_id].\n\n\
             Question: {query}\n\nPassages:\n{context}"
        );
        chat(
            profile,
            backend,
            &[ChatMessage::user(prompt)],
            &DecodeParams::default(),
        )
        .ok()
        .map(|exchange| exchange.response)
    });
    Ok(DocsAnswer { passages, answer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GatewayError, HashEmbedder, ReplayBackend, ReplayEntry};
    use crate::kb::Document;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn ip_doc(id: &str, name: &str, body: &str) -> Document {
        let mut metadata = BTreeMap::new();
        metadata.insert("name".to_string(), name.to_string());
        metadata.insert(
            "source_url".to_string(),
            format!("https://example.org/ip/{id}"),
        );
        Document {
            doc_id: id.into(),
            title: name.into(),
            body: body.into(),
            metadata,
        }
    }

    fn seeded_store() -> VectorStore {
        let mut store = VectorStore::new(Arc::new(HashEmbedder::default()));
        store
            .ingest(
                CorpusName::Ips,
                &[
                    ip_doc("uart16550", "UART 16550", "uart serial transmitter receiver fifo"),
                    ip_doc("spi_master", "SPI Master", "spi master controller block"),
                    ip_doc("axi_xbar", "AXI Crossbar", "axi interconnect crossbar fabric"),
                ],
            )
            .unwrap();
        store
            .ingest(
                CorpusName::Docs,
                &[Document {
                    doc_id: "cocotb_guide".into(),
                    title: "cocotb guide".into(),
                    body: "cocotb testbench best practices use coroutines and RisingEdge triggers"
                        .into(),
                    metadata: BTreeMap::new(),
                }],
            )
            .unwrap();
        store
    }

    fn profile() -> ModelProfile {
        ModelProfile {
            model_id: "replay".into(),
            input_cost_per_1k_tokens: 0.into(),
            output_cost_per_1k_tokens: 0.into(),
            max_context_tokens: 100_000,
        }
    }

    #[test]
    fn uart_query_ranks_uart_first() {
        let store = seeded_store();
        let matches = query_opensource_ips(&store, "uart serial fifo", 3).unwrap();
        assert_eq!(matches.len(), 3);
        assert_eq!(matches[0].name, "UART 16550");
        assert_eq!(
            matches[0].source_url.as_deref(),
            Some("https://example.org/ip/uart16550")
        );
        assert!(matches[0].score > matches[1].score);
    }

    #[test]
    fn k_zero_and_missing_corpus() {
        let store = seeded_store();
        assert!(query_opensource_ips(&store, "uart", 0).unwrap().is_empty());
        let empty = VectorStore::new(Arc::new(HashEmbedder::default()));
        assert!(matches!(
            query_opensource_ips(&empty, "uart", 3),
            Err(SkillError::CorpusMissing(_))
        ));
    }

    #[test]
    fn docs_with_gateway_synthesizes() {
        let store = seeded_store();
        let backend = ReplayBackend::new(vec![ReplayEntry::text(
            "Use coroutines with RisingEdge [cocotb_guide:0000]",
        )]);
        let answer = query_docs(
            &store,
            "cocotb testbench best practices",
            3,
            Some((&profile(), &backend)),
        )
        .unwrap();
        assert!(!answer.passages.is_empty());
        assert!(answer.answer.unwrap().contains("cocotb_guide:0000"));
    }

    #[test]
    fn docs_without_gateway_is_passages_only() {
        let store = seeded_store();
        let answer = query_docs(&store, "cocotb", 2, None).unwrap();
        assert!(answer.answer.is_none());
        assert!(!answer.passages.is_empty());
    }

    #[test]
    fn provider_failure_degrades_to_passages() {
        let store = seeded_store();
        // exhausted script: every completion errors
        let backend = ReplayBackend::new(vec![]);
        let answer = query_docs(&store, "cocotb", 2, Some((&profile(), &backend))).unwrap();
        assert!(answer.answer.is_none());
        assert!(!answer.passages.is_empty());
        // the backend did see (and fail) the synthesis attempt
        assert!(matches!(
            backend.complete(&[], &DecodeParams::default()),
            Err(GatewayError::ScriptExhausted(_))
        ));
    }
}
