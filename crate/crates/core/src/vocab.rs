//! Corpus vocabulary, control-token registry, and text encoding.
//!
//! Tokenization is word-level: NFC-normalized, lowercased maximal runs of
//! alphanumeric characters. Control tokens (`###<class>`) and the CT
//! fallback (`[unk]`) are atomic vocabulary entries that plain text can never
//! produce, because `#`, `[` and `]` are stripped as punctuation; they enter
//! a sequence only through [`Vocab::compose_ct_input`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::util::{self, fnv1a_hex};

/// Surface form of the word-level unknown entry.
pub const WORD_UNK: &str = "<unk>";
/// Surface form of the control-token fallback.
pub const CT_UNKNOWN: &str = "[unk]";
/// Prefix marking a registered class as a control token.
pub const CT_PREFIX: &str = "###";

const VOCAB_VERSION: u32 = 1;

/// Control token attached to a query or passage: either a registered class
/// or the below-threshold fallback.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ControlToken {
    Class(String),
    Unknown,
}

impl ControlToken {
    /// Vocabulary surface form: `###<class>` or `[unk]`.
    pub fn surface(&self) -> String {
        match self {
            ControlToken::Class(label) => format!("{CT_PREFIX}{label}"),
            ControlToken::Unknown => CT_UNKNOWN.to_string(),
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            ControlToken::Class(label) => Some(label),
            ControlToken::Unknown => None,
        }
    }
}

impl Serialize for ControlToken {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ControlToken::Class(label) => s.serialize_str(label),
            ControlToken::Unknown => s.serialize_str(CT_UNKNOWN),
        }
    }
}

impl<'de> Deserialize<'de> for ControlToken {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == CT_UNKNOWN {
            Ok(ControlToken::Unknown)
        } else {
            Ok(ControlToken::Class(raw))
        }
    }
}

/// Encoded token-id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub truncated: bool,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Word tokenization shared by the vocabulary builder, the encoders, and the
/// chunk token counter: NFC, then lowercased maximal alphanumeric runs.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect();
    let mut words = Vec::new();
    let mut current = String::new();
    for ch in normalized.chars() {
        if ch.is_alphanumeric() {
            for lower in ch.to_lowercase() {
                current.push(lower);
            }
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Number of word tokens `text` encodes to.
pub fn count_tokens(text: &str) -> usize {
    tokenize_words(text).len()
}

/// Token/id bijection with a control-token registry. Immutable once built;
/// registration returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    unk_id: u32,
    ct_ids: BTreeMap<String, u32>,
    ct_unknown_id: Option<u32>,
}

/// On-disk vocabulary container. `tokens` is the full id-ordered entry list,
/// so position i is token id i; `ct_classes` lists the registered classes.
#[derive(Debug, Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    tokens: Vec<String>,
    ct_classes: Vec<String>,
}

impl Vocab {
    /// Build a vocabulary from corpus texts. Words occurring fewer than
    /// `min_count` times are dropped (they encode to the unknown id). Ids are
    /// assigned by descending frequency, then lexicographic order, after the
    /// `<unk>` special at id 0. `max_size` caps the total entry count.
    pub fn build<S: AsRef<str>>(
        corpus_texts: &[S],
        min_count: usize,
        max_size: Option<usize>,
    ) -> Result<Vocab> {
        if corpus_texts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus_texts {
            for word in tokenize_words(text.as_ref()) {
                *counts.entry(word).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        ranked.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));

        let mut id_to_token = vec![WORD_UNK.to_string()];
        let cap = max_size.unwrap_or(usize::MAX);
        for (word, _) in ranked {
            if id_to_token.len() >= cap {
                break;
            }
            id_to_token.push(word);
        }
        Vocab::from_entries(id_to_token, Vec::new())
    }

    fn from_entries(id_to_token: Vec<String>, ct_classes: Vec<String>) -> Result<Vocab> {
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, token) in id_to_token.iter().enumerate() {
            if token_to_id.insert(token.clone(), id as u32).is_some() {
                return Err(Error::Parse {
                    path: "<vocab>".into(),
                    detail: format!("duplicate token entry `{token}`"),
                });
            }
        }
        let unk_id = *token_to_id.get(WORD_UNK).ok_or_else(|| Error::Parse {
            path: "<vocab>".into(),
            detail: format!("missing `{WORD_UNK}` entry"),
        })?;
        let mut ct_ids = BTreeMap::new();
        for class in &ct_classes {
            let surface = format!("{CT_PREFIX}{class}");
            let id = *token_to_id.get(&surface).ok_or_else(|| Error::Parse {
                path: "<vocab>".into(),
                detail: format!("missing control token `{surface}`"),
            })?;
            ct_ids.insert(class.clone(), id);
        }
        let ct_unknown_id = if ct_classes.is_empty() {
            None
        } else {
            Some(*token_to_id.get(CT_UNKNOWN).ok_or_else(|| Error::Parse {
                path: "<vocab>".into(),
                detail: format!("missing `{CT_UNKNOWN}` entry"),
            })?)
        };
        Ok(Vocab {
            token_to_id,
            id_to_token,
            unk_id,
            ct_ids,
            ct_unknown_id,
        })
    }

    /// Register one atomic `###<class>` entry per class plus the `[unk]`
    /// fallback. Classes are sorted before id assignment, so registration is
    /// order-insensitive; existing ids are unchanged. Re-registering the same
    /// class set is a no-op returning an identical vocabulary.
    pub fn register_control_tokens<S: AsRef<str>>(&self, classes: &[S]) -> Result<Vocab> {
        if classes.is_empty() {
            return Err(Error::ConfigInvalid(
                "control-token class list must be non-empty".into(),
            ));
        }
        let mut sorted: Vec<String> = Vec::with_capacity(classes.len());
        for class in classes {
            let label = class.as_ref();
            if label.is_empty() || label == CT_UNKNOWN || label.starts_with(CT_PREFIX) {
                return Err(Error::InvalidClass(label.to_string()));
            }
            sorted.push(label.to_string());
        }
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateClass(w[0].clone()));
        }

        if !self.ct_ids.is_empty() {
            let existing: Vec<&String> = self.ct_ids.keys().collect();
            if existing
                .iter()
                .map(|s| s.as_str())
                .eq(sorted.iter().map(|s| s.as_str()))
            {
                return Ok(self.clone());
            }
            return Err(Error::ConfigInvalid(
                "control tokens already registered with a different class set".into(),
            ));
        }

        let mut id_to_token = self.id_to_token.clone();
        for class in &sorted {
            id_to_token.push(format!("{CT_PREFIX}{class}"));
        }
        id_to_token.push(CT_UNKNOWN.to_string());
        Vocab::from_entries(id_to_token, sorted)
    }

    /// Encode text into word-token ids, mapping out-of-vocabulary words to
    /// the unknown id and truncating at `max_tokens`. Text that is non-empty
    /// after trimming but contains no word characters encodes to a single
    /// unknown id, so downstream encoders never see an empty sequence for
    /// real input.
    pub fn encode_text(&self, text: &str, max_tokens: usize) -> TokenSeq {
        let words = tokenize_words(text);
        let mut ids: Vec<u32> = words
            .iter()
            .map(|w| self.token_to_id.get(w).copied().unwrap_or(self.unk_id))
            .collect();
        if ids.is_empty() && !text.trim().is_empty() {
            ids.push(self.unk_id);
        }
        let truncated = ids.len() > max_tokens;
        if truncated {
            ids.truncate(max_tokens);
        }
        TokenSeq { ids, truncated }
    }

    /// Prepend a control-token id to an encoded body; the body is unchanged.
    pub fn compose_ct_input(&self, ct: &ControlToken, body: &TokenSeq) -> Result<TokenSeq> {
        let ct_id = match ct {
            ControlToken::Class(label) => self
                .ct_ids
                .get(label)
                .copied()
                .ok_or_else(|| Error::UnknownClass(label.clone()))?,
            ControlToken::Unknown => self
                .ct_unknown_id
                .ok_or_else(|| Error::UnknownClass(CT_UNKNOWN.to_string()))?,
        };
        let mut ids = Vec::with_capacity(body.ids.len() + 1);
        ids.push(ct_id);
        ids.extend_from_slice(&body.ids);
        Ok(TokenSeq {
            ids,
            truncated: body.truncated,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn ct_unknown_id(&self) -> Option<u32> {
        self.ct_unknown_id
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Registered class labels in id order (sorted).
    pub fn ct_classes(&self) -> Vec<String> {
        self.ct_ids.keys().cloned().collect()
    }

    pub fn ct_id(&self, class: &str) -> Option<u32> {
        self.ct_ids.get(class).copied()
    }

    pub fn has_control_tokens(&self) -> bool {
        !self.ct_ids.is_empty()
    }

    fn to_file(&self) -> VocabFile {
        VocabFile {
            version: VOCAB_VERSION,
            tokens: self.id_to_token.clone(),
            ct_classes: self.ct_classes(),
        }
    }

    /// Canonical serialized bytes; the same vocabulary always produces the
    /// same bytes, which is what the content hash and determinism tests rely
    /// on.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_file()).expect("vocab serialization cannot fail")
    }

    /// Content hash binding downstream artifacts to this vocabulary.
    pub fn content_hash(&self) -> String {
        fnv1a_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json_file(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let file: VocabFile = util::read_json_file(path)?;
        if file.version != VOCAB_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "vocab".into(),
                found: file.version,
                expected: VOCAB_VERSION,
            });
        }
        Vocab::from_entries(file.tokens, file.ct_classes)
    }
}
