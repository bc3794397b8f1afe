//! Overlapping chunking with a paragraph-boundary preference.

use serde::{Deserialize, Serialize};

/// Named chunking policy: target size, overlap, and how far back to look for
/// a paragraph break. All sizes in bytes, snapped to char boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    pub target: usize,
    pub overlap: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy {
            target: 1000,
            overlap: 200,
        }
    }
}

fn snap_back(body: &str, mut idx: usize) -> usize {
    while idx > 0 && !body.is_char_boundary(idx) {
        idx -= 1;
    }
    idx
}

/// Compute chunk byte spans for a body.
///
/// Spans start at 0, end at `body.len()`, and each consecutive pair overlaps
/// by `policy.overlap` bytes (less when a paragraph break shortens a chunk).
/// When the window `[start, start+target]` contains a `\n\n` in its second
/// half, the chunk ends just after that break.
pub fn chunk_spans(body: &str, policy: &ChunkPolicy) -> Vec<(usize, usize)> {
    assert!(policy.target > policy.overlap, "target must exceed overlap");
    let n = body.len();
    if n == 0 {
        return Vec::new();
    }
    let mut spans = Vec::new();
    let mut start = 0usize;
    loop {
        if n - start <= policy.target {
            spans.push((start, n));
            break;
        }
        let mut end = snap_back(body, start + policy.target);
        // prefer ending on a paragraph break in the second half of the window
        let half = start + (end - start) / 2;
        if let Some(pos) = body[half..end].rfind("\n\n") {
            end = half + pos + 2;
        }
        spans.push((start, end));
        let next = snap_back(body, end.saturating_sub(policy.overlap));
        start = next.max(start + 1);
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_body_is_one_span() {
        let policy = ChunkPolicy::default();
        assert_eq!(chunk_spans("hello", &policy), vec![(0, 5)]);
    }

    #[test]
    fn stated_policy_arithmetic() {
        // 2500 chars, no paragraph breaks: 0..1000, 800..1800, 1600..2500
        let body = "x".repeat(2500);
        let spans = chunk_spans(&body, &ChunkPolicy::default());
        assert_eq!(spans, vec![(0, 1000), (800, 1800), (1600, 2500)]);
    }

    #[test]
    fn spans_cover_body_with_overlap() {
        let body = "paragraph one.\n\n".repeat(200);
        let policy = ChunkPolicy::default();
        let spans = chunk_spans(&body, &policy);
        assert_eq!(spans.first().unwrap().0, 0);
        assert_eq!(spans.last().unwrap().1, body.len());
        for pair in spans.windows(2) {
            assert!(pair[1].0 < pair[0].1, "consecutive spans must overlap");
            assert!(pair[1].0 > pair[0].0, "spans must make progress");
        }
    }

    #[test]
    fn paragraph_boundary_preferred() {
        let mut body = "a".repeat(700);
        body.push_str("\n\n");
        body.push_str(&"b".repeat(900));
        let spans = chunk_spans(&body, &ChunkPolicy::default());
        // first chunk ends right after the break at 702, not at 1000
        assert_eq!(spans[0], (0, 702));
    }

    #[test]
    fn multibyte_boundaries_are_respected() {
        let body = "é".repeat(1500); // 2 bytes each
        let spans = chunk_spans(&body, &ChunkPolicy::default());
        for (s, e) in spans {
            assert!(body.is_char_boundary(s) && body.is_char_boundary(e));
        }
    }
}
