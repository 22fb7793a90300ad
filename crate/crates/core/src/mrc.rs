//! MRC-format records: one (question, context, answer, category) row per
//! JSONL line. Loading is fail-fast: the first invalid line aborts the load
//! with an error naming the line, and no records are returned.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::slice_chars;

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcRecord {
    pub id: String,
    pub question: String,
    pub context: String,
    pub answer_text: String,
    /// Char offset (Unicode scalar values) of the answer in `context`, when
    /// the corpus provides it. Absent means "first occurrence".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_char_start: Option<usize>,
    pub category: String,
}

/// Mirror of the wire format with every field optional, so missing keys can
/// be reported by name instead of through serde's generic error text.
#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    question: Option<String>,
    context: Option<String>,
    answer_text: Option<String>,
    #[serde(default)]
    answer_char_start: Option<usize>,
    category: Option<String>,
}

fn require<T>(value: Option<T>, line: usize, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::MissingField {
        line,
        field: field.to_string(),
    })
}

/// Validate one record's invariants: non-empty text fields and a locatable
/// answer. Exposed so generated corpora can assert round-trip validity.
pub fn validate_record(record: &MrcRecord) -> Result<()> {
    let empty = |field: &str| Error::EmptyText {
        id: record.id.clone(),
        field: field.to_string(),
    };
    if record.id.trim().is_empty() {
        return Err(empty("id"));
    }
    if record.question.trim().is_empty() {
        return Err(empty("question"));
    }
    if record.context.trim().is_empty() {
        return Err(empty("context"));
    }
    if record.answer_text.trim().is_empty() {
        return Err(empty("answer_text"));
    }
    if record.category.trim().is_empty() {
        return Err(empty("category"));
    }
    match record.answer_char_start {
        Some(start) => {
            let total = record.context.chars().count();
            let tail = if start <= total {
                slice_chars(&record.context, start, total)
            } else {
                ""
            };
            if !tail.starts_with(&record.answer_text) {
                return Err(Error::AnswerNotInContext {
                    id: record.id.clone(),
                });
            }
        }
        None => {
            if !record.context.contains(&record.answer_text) {
                return Err(Error::AnswerNotInContext {
                    id: record.id.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Parse and validate a whole JSONL corpus. Records come back in file order;
/// blank lines are permitted and skipped; any malformed or invalid line
/// aborts the load.
pub fn load_mrc_jsonl(path: &Path) -> Result<Vec<MrcRecord>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_mrc_jsonl(&content)
}

/// Same as [`load_mrc_jsonl`] but over in-memory text.
pub fn parse_mrc_jsonl(content: &str) -> Result<Vec<MrcRecord>> {
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: line_no,
            detail: e.to_string(),
        })?;
        let record = MrcRecord {
            id: require(raw.id, line_no, "id")?,
            question: require(raw.question, line_no, "question")?,
            context: require(raw.context, line_no, "context")?,
            answer_text: require(raw.answer_text, line_no, "answer_text")?,
            answer_char_start: raw.answer_char_start,
            category: require(raw.category, line_no, "category")?,
        };
        validate_record(&record)?;
        records.push(record);
    }
    Ok(records)
}

/// Serialize records to the same JSONL wire format the loader accepts.
pub fn records_to_jsonl(records: &[MrcRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}
