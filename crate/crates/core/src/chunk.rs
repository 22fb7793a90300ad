//! Sentence splitting and token-bounded passage construction.
//!
//! Two chunkers share the sentence splitter: [`chunk_around_answer`] builds
//! one answer-centric passage per record (training positives), and
//! [`chunk_for_index`] packs every sentence of a context into non-overlapping
//! passages (index-time full coverage). All offsets are char offsets
//! (Unicode scalar values) into the source context, and chunk boundaries
//! always coincide with sentence boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrc::MrcRecord;
use crate::util::{find_chars, slice_chars};
use crate::vocab::count_tokens;

/// Default token budget per chunk.
pub const DEFAULT_MAX_CHUNK_TOKENS: usize = 512;

/// One sentence of a context, as a char-offset span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub index: usize,
    pub char_start: usize,
    pub char_end: usize,
}

/// A token-bounded passage cut from a source context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub category: String,
    pub token_count: usize,
    /// (start, end) char offsets into the source context.
    pub char_span: (usize, usize),
}

const TERMINATORS: [char; 6] = ['.', '!', '?', '\u{3002}', '\u{FF01}', '\u{FF1F}'];

/// Split text into sentence spans. A sentence ends at a terminator (`.`,
/// `!`, `?`, or their full-width equivalents) followed by whitespace or
/// end-of-text; a `.` between two digits never terminates (decimal guard).
/// Text without terminators yields a single span. Spans are ordered,
/// non-overlapping, and cover all non-whitespace text.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut pos = 0usize;

    while pos < chars.len() {
        // Skip inter-sentence whitespace.
        while pos < chars.len() && chars[pos].is_whitespace() {
            pos += 1;
        }
        if pos >= chars.len() {
            break;
        }
        let start = pos;
        let mut end = None;
        while pos < chars.len() {
            let ch = chars[pos];
            if TERMINATORS.contains(&ch) {
                let next = chars.get(pos + 1);
                let decimal = ch == '.'
                    && pos > 0
                    && chars[pos - 1].is_ascii_digit()
                    && next.is_some_and(|c| c.is_ascii_digit());
                let boundary = next.is_none_or(|c| c.is_whitespace());
                if boundary && !decimal {
                    end = Some(pos + 1);
                    pos += 1;
                    break;
                }
            }
            pos += 1;
        }
        let char_end = end.unwrap_or_else(|| {
            // Unterminated tail: end after its last non-whitespace char.
            let mut tail_end = chars.len();
            while tail_end > start && chars[tail_end - 1].is_whitespace() {
                tail_end -= 1;
            }
            tail_end
        });
        if char_end > start {
            spans.push(SentenceSpan {
                index: spans.len(),
                char_start: start,
                char_end,
            });
        }
    }
    spans
}

fn span_text<'a>(context: &'a str, span: &SentenceSpan) -> &'a str {
    slice_chars(context, span.char_start, span.char_end)
}

fn make_chunk(
    chunk_id: String,
    doc_id: &str,
    category: &str,
    context: &str,
    first: &SentenceSpan,
    last: &SentenceSpan,
) -> Chunk {
    let text = slice_chars(context, first.char_start, last.char_end).to_string();
    let token_count = count_tokens(&text);
    Chunk {
        chunk_id,
        doc_id: doc_id.to_string(),
        text,
        category: category.to_string(),
        token_count,
        char_span: (first.char_start, last.char_end),
    }
}

/// Build the answer-centric chunk for a record: locate the sentence holding
/// the answer, then grow the window with whole neighboring sentences,
/// right first and then left, alternating, while the token budget holds.
/// A side that cannot extend (exhausted, or its next sentence would
/// overflow) stays closed; growth continues on the other side.
pub fn chunk_around_answer(record: &MrcRecord, max_tokens: usize) -> Result<Chunk> {
    let context = &record.context;
    let spans = split_sentences(context);
    let answer_pos = match record.answer_char_start {
        Some(start) => start,
        None => find_chars(context, &record.answer_text).ok_or_else(|| {
            Error::AnswerNotInContext {
                id: record.id.clone(),
            }
        })?,
    };
    let answer_idx = spans
        .iter()
        .position(|s| s.char_end > answer_pos)
        .ok_or_else(|| Error::AnswerNotInContext {
            id: record.id.clone(),
        })?;

    let token_counts: Vec<usize> = spans.iter().map(|s| count_tokens(span_text(context, s))).collect();
    let mut total = token_counts[answer_idx];
    if total > max_tokens {
        return Err(Error::AnswerSentenceTooLong {
            id: record.id.clone(),
            tokens: total,
            max: max_tokens,
        });
    }

    let (mut left, mut right) = (answer_idx, answer_idx);
    let (mut left_open, mut right_open) = (true, true);
    while left_open || right_open {
        if right_open {
            match token_counts.get(right + 1) {
                Some(&count) if total + count <= max_tokens => {
                    right += 1;
                    total += count;
                }
                _ => right_open = false,
            }
        }
        if left_open {
            if left == 0 {
                left_open = false;
            } else {
                let count = token_counts[left - 1];
                if total + count <= max_tokens {
                    left -= 1;
                    total += count;
                } else {
                    left_open = false;
                }
            }
        }
    }

    Ok(make_chunk(
        format!("{}-ans", record.id),
        &record.id,
        &record.category,
        context,
        &spans[left],
        &spans[right],
    ))
}

/// Pack all sentences of a context into consecutive chunks of at most
/// `max_tokens` tokens. Every sentence lands in exactly one chunk, in order.
pub fn chunk_for_index(
    doc_id: &str,
    context: &str,
    category: &str,
    max_tokens: usize,
) -> Result<Vec<Chunk>> {
    if context.trim().is_empty() {
        return Err(Error::EmptyText {
            id: doc_id.to_string(),
            field: "context".to_string(),
        });
    }
    let spans = split_sentences(context);
    let mut chunks = Vec::new();
    let mut window: Option<(usize, usize, usize)> = None; // (first, last, tokens)

    for (i, span) in spans.iter().enumerate() {
        let count = count_tokens(span_text(context, span));
        if count > max_tokens {
            return Err(Error::SentenceTooLong {
                doc_id: doc_id.to_string(),
                sentence: i,
                tokens: count,
                max: max_tokens,
            });
        }
        window = match window {
            Some((first, _, tokens)) if tokens + count <= max_tokens => {
                Some((first, i, tokens + count))
            }
            Some((first, last, _)) => {
                chunks.push(make_chunk(
                    format!("{doc_id}-c{}", chunks.len()),
                    doc_id,
                    category,
                    context,
                    &spans[first],
                    &spans[last],
                ));
                Some((i, i, count))
            }
            None => Some((i, i, count)),
        };
    }
    if let Some((first, last, _)) = window {
        chunks.push(make_chunk(
            format!("{doc_id}-c{}", chunks.len()),
            doc_id,
            category,
            context,
            &spans[first],
            &spans[last],
        ));
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(context: &str, answer: &str) -> MrcRecord {
        MrcRecord {
            id: "r1".into(),
            question: "q".into(),
            context: context.into(),
            answer_text: answer.into(),
            answer_char_start: None,
            category: "science".into(),
        }
    }

    /// Independent oracle used to freeze span expectations: reconstruct the
    /// sentence texts a span set implies and compare against hand-segmented
    /// sentences.
    fn span_texts(text: &str) -> Vec<String> {
        split_sentences(text)
            .iter()
            .map(|s| slice_chars(text, s.char_start, s.char_end).to_string())
            .collect()
    }

    #[test]
    fn splits_two_simple_sentences() {
        // Hand-counted offsets on "A cat. A dog.": first sentence covers
        // chars [0,6), the second [7,13).
        let spans = split_sentences("A cat. A dog.");
        assert_eq!(spans.len(), 2);
        assert_eq!((spans[0].char_start, spans[0].char_end), (0, 6));
        assert_eq!((spans[1].char_start, spans[1].char_end), (7, 13));
        assert_eq!(span_texts("A cat. A dog."), vec!["A cat.", "A dog."]);
    }

    #[test]
    fn no_terminator_yields_one_span() {
        let spans = split_sentences("No terminator here");
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].char_start, spans[0].char_end), (0, 18));
    }

    #[test]
    fn decimal_number_does_not_split() {
        assert_eq!(
            span_texts("Pi is 3.14. Done."),
            vec!["Pi is 3.14.", "Done."]
        );
        let spans = split_sentences("Pi is 3.14. Done.");
        assert_eq!((spans[0].char_start, spans[0].char_end), (0, 11));
        assert_eq!((spans[1].char_start, spans[1].char_end), (12, 17));
    }

    #[test]
    fn fullwidth_terminators_split() {
        // Hangul with full-width stop and exclamation, whitespace-separated:
        // spans hand-counted as [0,3) and [4,7).
        let text = "\u{c548}\u{b155}\u{3002} \u{b2e4}\u{c74c}\u{ff01}";
        let spans = split_sentences(text);
        assert_eq!(spans.len(), 2);
        assert_eq!((spans[0].char_start, spans[0].char_end), (0, 3));
        assert_eq!((spans[1].char_start, spans[1].char_end), (4, 7));
    }

    #[test]
    fn repeated_terminators_stay_in_one_sentence() {
        assert_eq!(span_texts("Wow!! Next."), vec!["Wow!!", "Next."]);
    }

    #[test]
    fn spans_cover_all_non_whitespace() {
        let text = "  One. Two!  Three  ";
        let spans = split_sentences(text);
        let chars: Vec<char> = text.chars().collect();
        let mut covered = vec![false; chars.len()];
        for s in &spans {
            for c in covered.iter_mut().take(s.char_end).skip(s.char_start) {
                *c = true;
            }
        }
        for (i, ch) in chars.iter().enumerate() {
            if !ch.is_whitespace() {
                assert!(covered[i], "char {i} ({ch}) uncovered");
            }
        }
        // Ordered, non-overlapping.
        for w in spans.windows(2) {
            assert!(w[0].char_end <= w[1].char_start);
        }
    }

    #[test]
    fn resplitting_a_sentence_is_idempotent() {
        let text = "First one. Second two! Third?";
        for span in split_sentences(text) {
            let sentence = slice_chars(text, span.char_start, span.char_end);
            let inner = split_sentences(sentence);
            assert_eq!(inner.len(), 1, "sentence {sentence:?} re-split");
            assert_eq!(inner[0].char_start, 0);
            assert_eq!(inner[0].char_end, sentence.chars().count());
        }
    }

    #[test]
    fn single_sentence_answer_chunk_is_that_sentence() {
        let r = record("Only sentence with tax.", "tax");
        let chunk = chunk_around_answer(&r, 512).unwrap();
        assert_eq!(chunk.text, "Only sentence with tax.");
        assert_eq!(chunk.char_span, (0, 23));
        assert!(chunk.text.contains("tax"));
    }

    #[test]
    fn alternating_expansion_covers_right_then_left() {
        // Five sentences of 2 tokens each; answer in the middle sentence;
        // budget of 6 tokens fits exactly 3 sentences. Simulating the
        // right-first alternation by hand: take s2 (answer), add s3 (right),
        // add s1 (left) -> sentences 1..=3.
        let context = "t0 a0. t1 a1. t2 answer. t3 a3. t4 a4.";
        let r = record(context, "answer");
        let chunk = chunk_around_answer(&r, 6).unwrap();
        assert_eq!(chunk.text, "t1 a1. t2 answer. t3 a3.");
        assert_eq!(chunk.token_count, 6);
    }

    #[test]
    fn budget_fitting_everything_covers_whole_context() {
        let context = "t0 a0. t1 a1. t2 answer. t3 a3. t4 a4.";
        let r = record(context, "answer");
        let chunk = chunk_around_answer(&r, 512).unwrap();
        assert_eq!(chunk.text, context);
    }

    #[test]
    fn expansion_continues_left_when_right_is_exhausted() {
        let context = "t0 a0. t1 a1. t2 answer.";
        let r = record(context, "answer");
        let chunk = chunk_around_answer(&r, 4).unwrap();
        // Right side has nothing; left adds one sentence before the budget
        // (4 tokens) blocks the second.
        assert_eq!(chunk.text, "t1 a1. t2 answer.");
    }

    #[test]
    fn answer_sentence_over_budget_errors() {
        let r = record("one two three four five.", "three");
        let err = chunk_around_answer(&r, 3).unwrap_err();
        assert!(matches!(err, Error::AnswerSentenceTooLong { .. }));
    }

    #[test]
    fn answer_char_start_selects_occurrence() {
        // "x" occurs in both sentences; the offset points at the second.
        let context = "x first. x second.";
        let mut r = record(context, "x");
        r.answer_char_start = Some(9);
        let chunk = chunk_around_answer(&r, 2).unwrap();
        assert_eq!(chunk.text, "x second.");
    }

    #[test]
    fn index_chunks_pack_greedily() {
        // Four sentences of 3 tokens each with a 6-token budget pack into
        // two chunks of two sentences (hand-packed fixture).
        let context = "a b c. d e f. g h i. j k l.";
        let chunks = chunk_for_index("doc1", context, "science", 6).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].text, "a b c. d e f.");
        assert_eq!(chunks[1].text, "g h i. j k l.");
        assert_eq!(chunks[0].chunk_id, "doc1-c0");
        assert_eq!(chunks[1].chunk_id, "doc1-c1");
        assert!(chunks.iter().all(|c| c.token_count <= 6));
    }

    #[test]
    fn one_short_sentence_is_one_chunk() {
        let chunks = chunk_for_index("d", "Just one.", "land", 512).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, "Just one.");
    }

    #[test]
    fn empty_context_is_rejected() {
        let err = chunk_for_index("d", "   ", "land", 512).unwrap_err();
        assert!(matches!(err, Error::EmptyText { .. }));
    }

    #[test]
    fn oversized_sentence_reports_index() {
        let context = "ok ok. one two three four. ok.";
        let err = chunk_for_index("d", context, "land", 3).unwrap_err();
        match err {
            Error::SentenceTooLong { sentence, .. } => assert_eq!(sentence, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn index_chunks_cover_every_sentence_once() {
        let context = "s one. s two. s three. s four. s five.";
        let chunks = chunk_for_index("d", context, "c", 4).unwrap();
        let rebuilt: Vec<String> = chunks.iter().flat_map(|c| span_texts(&c.text)).collect();
        assert_eq!(rebuilt, span_texts(context));
    }
}
