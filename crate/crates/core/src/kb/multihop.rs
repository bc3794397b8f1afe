//! Bounded retrieve-assess-requery loop.
//!
//! The model is given retrieved context and must reply in a two-token control
//! grammar: `NEED: <follow-up query>` to retrieve again, or
//! `ANSWER: <text citing [chunk_id]>` to finish. Anything else ends the loop
//! with the partial flag set.

use regex::Regex;

use crate::gateway::{chat, ChatBackend, ChatMessage, DecodeParams, ModelProfile};

use super::{KbError, Scope, VectorStore};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHopAnswer {
    pub answer: String,
    /// Chunk ids cited in the answer and verified to exist in the store.
    pub citations: Vec<String>,
    pub hops_used: usize,
    /// True when the hop limit was hit or control output was unparseable.
    pub partial: bool,
}

const HITS_PER_HOP: usize = 5;

fn control_prompt(question: &str, context: &str) -> String {
    format!(
        "Answer the question from the retrieved context below.\n\
         Reply with exactly one line starting with either:\n\
         NEED: <follow-up search query>   (if the context is insufficient)\n\
         ANSWER: <answer citing supporting chunks as [chunk_id]>\n\n\
         Question: {question}\n\nRetrieved context:\n{context}"
    )
}

/// Run the multi-hop loop. Provider failures surface as errors; hitting the
/// hop limit returns the last model text flagged partial.
pub fn multi_hop_query(
    store: &VectorStore,
    question: &str,
    profile: &ModelProfile,
    backend: &dyn ChatBackend,
    max_hops: usize,
) -> Result<MultiHopAnswer, KbError> {
    if store.is_empty() {
        return Err(KbError::CorpusMissing("ALL".into()));
    }
    let citation_re = Regex::new(r"\[([A-Za-z0-9_.:-]+)\]").expect("citation regex");
    let mut query = question.to_string();
    let mut last_text = String::new();
    for hop in 1..=max_hops.max(1) {
        let hits = store.search(&Scope::All, &query, HITS_PER_HOP)?;
        let context: String = hits
            .iter()
            .map(|h| format!("[{}] {}\n", h.chunk.chunk_id, h.chunk.text))
            .collect();
        let messages = [ChatMessage::user(control_prompt(question, &context))];
        let exchange = chat(profile, backend, &messages, &DecodeParams::default())?;
        let text = exchange.response.trim().to_string();
        last_text = text.clone();

        if let Some(follow_up) = text.strip_prefix("NEED:") {
            query = follow_up.trim().to_string();
            continue;
        }
        if let Some(answer) = text.strip_prefix("ANSWER:") {
            let answer = answer.trim().to_string();
            let citations: Vec<String> = citation_re
                .captures_iter(&answer)
                .map(|c| c[1].to_string())
                .filter(|id| store.get_chunk(id).is_some())
                .collect();
            return Ok(MultiHopAnswer {
                answer,
                citations,
                hops_used: hop,
                partial: false,
            });
        }
        // unparseable control output ends the loop
        return Ok(MultiHopAnswer {
            answer: text,
            citations: Vec::new(),
            hops_used: hop,
            partial: true,
        });
    }
    Ok(MultiHopAnswer {
        answer: last_text,
        citations: Vec::new(),
        hops_used: max_hops.max(1),
        partial: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HashEmbedder, ReplayBackend, ReplayEntry};
    use crate::kb::{CorpusName, Document};
    use std::sync::Arc;

    fn seeded_store() -> VectorStore {
        let mut store = VectorStore::new(Arc::new(HashEmbedder::default()));
        let docs: Vec<Document> = [
            ("dens", "placement density too high causes routing congestion"),
            ("ant", "antenna violations fixed by inserting diodes"),
        ]
        .iter()
        .map(|(id, body)| Document {
            doc_id: (*id).to_string(),
            title: (*id).to_string(),
            body: (*body).to_string(),
            metadata: Default::default(),
        })
        .collect();
        store.ingest(CorpusName::Errors, &docs).unwrap();
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
    fn two_hop_answer_with_verified_citations() {
        let store = seeded_store();
        let backend = ReplayBackend::new(vec![
            ReplayEntry::text("NEED: antenna diode insertion"),
            ReplayEntry::text("ANSWER: lower density [dens:0000] and add diodes [ant:0000]"),
        ]);
        let out = multi_hop_query(&store, "why did routing fail?", &profile(), &backend, 3).unwrap();
        assert_eq!(out.hops_used, 2);
        assert!(!out.partial);
        assert_eq!(out.citations, vec!["dens:0000", "ant:0000"]);
    }

    #[test]
    fn immediate_answer_is_one_hop() {
        let store = seeded_store();
        let backend = ReplayBackend::new(vec![ReplayEntry::text("ANSWER: add diodes [ant:0000]")]);
        let out = multi_hop_query(&store, "antenna fix?", &profile(), &backend, 3).unwrap();
        assert_eq!(out.hops_used, 1);
        assert_eq!(out.citations, vec!["ant:0000"]);
    }

    #[test]
    fn never_satisfied_hits_hop_limit_as_partial() {
        let store = seeded_store();
        let backend = ReplayBackend::new(vec![
            ReplayEntry::text("NEED: one"),
            ReplayEntry::text("NEED: two"),
            ReplayEntry::text("NEED: three"),
        ]);
        let out = multi_hop_query(&store, "q", &profile(), &backend, 3).unwrap();
        assert_eq!(out.hops_used, 3);
        assert!(out.partial);
    }

    #[test]
    fn fabricated_citations_are_dropped() {
        let store = seeded_store();
        let backend =
            ReplayBackend::new(vec![ReplayEntry::text("ANSWER: see [nonexistent:9999]")]);
        let out = multi_hop_query(&store, "q", &profile(), &backend, 3).unwrap();
        assert!(out.citations.is_empty());
        assert!(!out.partial);
    }
}
