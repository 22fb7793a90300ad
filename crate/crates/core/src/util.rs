//! Shared helpers: content hashing, char-offset slicing, JSON file i/o.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// FNV-1a over the given bytes, rendered as fixed-width hex. Used to bind
/// artifacts together (vocab -> checkpoint -> index) so stage mismatches
/// fail fast instead of producing silently wrong numbers.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Slice `text` by char offsets (Unicode scalar values), the offset unit
/// used by sentence spans and chunk spans.
pub fn slice_chars(text: &str, start: usize, end: usize) -> &str {
    debug_assert!(start <= end);
    let mut byte_start = text.len();
    let mut byte_end = text.len();
    for (count, (byte_idx, _)) in text.char_indices().enumerate() {
        if count == start {
            byte_start = byte_idx;
        }
        if count == end {
            byte_end = byte_idx;
            break;
        }
    }
    if start == end {
        return "";
    }
    &text[byte_start..byte_end]
}

/// Char offset of the first occurrence of `needle` in `haystack`.
pub fn find_chars(haystack: &str, needle: &str) -> Option<usize> {
    haystack
        .find(needle)
        .map(|byte_idx| haystack[..byte_idx].chars().count())
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    bytes.push(b'\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}
