//! Deterministic synthetic MRC corpus with controllable cross-domain
//! ambiguity.
//!
//! Structure: a domain x topic grid. Every domain owns a private vocabulary
//! (Zipf-weighted, so some domain words are common and some rare); every
//! topic owns a small pool from the shared vocabulary, reused by the
//! matching document of *every* domain. A query mixes topic tokens (drawn
//! with probability `ambiguity_rate`) with evidence tokens of its own
//! domain, so at high ambiguity the lexical surface of a query pins down the
//! topic but barely hints at the domain - exactly the failure mode a correct
//! domain control token repairs.
//!
//! Evidence comes in two kinds. Private tokens belong to one domain
//! outright. Collision tokens act like shared entity names: each one
//! appears in exactly two documents that live in *different* domains and
//! cover *different* topics. A question carrying a collision token splits a
//! bag-of-words classifier between the two owning domains (moderate
//! confidence, frequent errors), while exact retrieval can still resolve the
//! right document from the topic tokens once no misleading control token is
//! attached. Those queries are what make a higher classification threshold
//! productive: their wrong, medium-confidence CTs get replaced by the
//! neutral fallback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrc::MrcRecord;
use crate::rng::Rng;
use crate::util::find_chars;

/// Tokens per generated question.
const QUERY_TOKENS: usize = 12;
/// Tokens per document sentence (the answer sentence gets one more).
const SENTENCE_TOKENS: usize = 3;
/// Document token-source mix: topic pool, then collision entities, rest
/// private vocabulary.
const DOC_TOPIC_RATE: f64 = 1.0 / 3.0;
const DOC_COLLISION_RATE: f64 = 0.15;
/// Fraction of queries phrased entity-style: their content-evidence tokens
/// are collision entities instead of domain-private words.
const QUERY_COLLISION_RATE: f64 = 0.25;
/// Probability an evidence slot holds a question-style token instead of
/// content evidence. Style tokens are domain-pure but appear only in
/// questions, never in documents: a category classifier reads them as clean
/// votes, while similarity search gets almost nothing from them - the
/// population where a correct control token pays off most.
const QUERY_STYLE_RATE: f64 = 0.5;
/// Distinct question-style variants per domain; kept large so each variant
/// stays individually rare.
const STYLE_VARIANTS: usize = 30;

/// Eleven plausible administrative-document categories; domains beyond the
/// list get synthetic labels.
const CATEGORY_NAMES: [&str; 11] = [
    "administration",
    "culture",
    "economy",
    "education",
    "environment",
    "health",
    "land",
    "law",
    "science",
    "transport",
    "welfare",
];

/// Generator settings. `ambiguity_rate` is the probability that a query
/// token comes from the shared (cross-domain) vocabulary rather than the
/// query domain's private vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_domains: usize,
    pub docs_per_domain: usize,
    pub sentences_per_doc: usize,
    pub queries_per_domain: usize,
    pub shared_vocab_size: usize,
    pub domain_vocab_size: usize,
    pub ambiguity_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_domains: 11,
            docs_per_domain: 10,
            sentences_per_doc: 8,
            queries_per_domain: 90,
            shared_vocab_size: 80,
            domain_vocab_size: 12,
            ambiguity_rate: 0.8,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_domains", self.n_domains),
            ("docs_per_domain", self.docs_per_domain),
            ("sentences_per_doc", self.sentences_per_doc),
            ("queries_per_domain", self.queries_per_domain),
            ("shared_vocab_size", self.shared_vocab_size),
            ("domain_vocab_size", self.domain_vocab_size),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::ConfigInvalid(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.ambiguity_rate) {
            return Err(Error::ConfigInvalid(
                "ambiguity_rate must be in [0, 1]".into(),
            ));
        }
        if self.n_domains < 2 {
            return Err(Error::ConfigInvalid(
                "n_domains must be >= 2 (cross-domain ambiguity needs neighbors)".into(),
            ));
        }
        Ok(())
    }
}

/// Manifest written next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub categories: Vec<String>,
    pub n_records: usize,
    pub corpus_hash: String,
}

/// Sorted category labels for `n` domains.
pub fn category_labels(n: usize) -> Vec<String> {
    let mut labels: Vec<String> = CATEGORY_NAMES
        .iter()
        .take(n)
        .map(|s| s.to_string())
        .collect();
    for i in labels.len()..n {
        labels.push(format!("domain{i:02}"));
    }
    labels.sort();
    labels
}

fn private_token(domain: usize, word: usize) -> String {
    format!("p{domain:02}w{word:03}")
}

fn style_token(domain: usize, variant: usize) -> String {
    format!("y{domain:02}v{variant:03}")
}

fn shared_token(idx: usize) -> String {
    format!("s{idx:03}")
}

fn answer_token(domain: usize, topic: usize) -> String {
    format!("a{domain:02}x{topic:04}")
}

/// Collision entity anchored at document (domain, topic); it also appears in
/// that document's partner, which sits in the next domain under a shifted
/// topic.
fn collision_token(domain: usize, topic: usize) -> String {
    format!("c{domain:02}x{topic:04}")
}

/// Partner document hosting the collision entity anchored at (domain,
/// topic): adjacent domain, shifted topic.
fn collision_partner(config: &SynthConfig, domain: usize, topic: usize) -> (usize, usize) {
    let shift = (config.docs_per_domain / 2).max(1);
    (
        (domain + 1) % config.n_domains,
        (topic + shift) % config.docs_per_domain,
    )
}

/// The two collision entities a document hosts: its own anchor and the one
/// anchored at the document it partners.
fn hosted_collisions(config: &SynthConfig, domain: usize, topic: usize) -> Vec<String> {
    let mut hosted = vec![collision_token(domain, topic)];
    let shift = (config.docs_per_domain / 2).max(1);
    let src_domain = (domain + config.n_domains - 1) % config.n_domains;
    let src_topic = (topic + config.docs_per_domain - shift) % config.docs_per_domain;
    if collision_partner(config, src_domain, src_topic) == (domain, topic) {
        hosted.push(collision_token(src_domain, src_topic));
    }
    hosted
}

/// Zipf-style weights 1/(rank+1) over a vocabulary of the given size.
fn zipf_weights(size: usize) -> Vec<f64> {
    (0..size).map(|i| 1.0 / (i as f64 + 1.0)).collect()
}

fn topic_pool(config: &SynthConfig, topic: usize) -> Vec<String> {
    let per_topic = tokens_per_topic(config);
    (0..per_topic)
        .map(|j| shared_token((topic * per_topic + j) % config.shared_vocab_size))
        .collect()
}

fn tokens_per_topic(config: &SynthConfig) -> usize {
    (config.shared_vocab_size / config.docs_per_domain).max(1)
}

/// Multiset of `n` private words with counts proportional to the Zipf
/// weights (largest-remainder rounding), so every document of a domain
/// carries the same private profile.
fn private_allocation(n: usize, weights: &[f64], domain: usize) -> Vec<String> {
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = shares
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s - s.floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut cursor = 0;
    while assigned < n {
        counts[remainders[cursor % remainders.len()].0] += 1;
        assigned += 1;
        cursor += 1;
    }
    let mut out = Vec::with_capacity(n);
    for (word, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            out.push(private_token(domain, word));
        }
    }
    out
}

/// Document text is compositionally deterministic: fixed counts of topic,
/// collision, and private tokens (only their arrangement is random), with
/// topic tokens cycling the pool and private tokens allocated proportionally
/// to the Zipf profile. Same-topic documents in different domains therefore
/// present near-identical topic mass, and ranking within a topic cohort is
/// decided by evidence tokens rather than sampling noise.
fn build_doc(
    config: &SynthConfig,
    rng: &mut Rng,
    domain: usize,
    topic: usize,
    private_weights: &[f64],
) -> (String, String) {
    let mut pool = topic_pool(config, topic);
    rng.shuffle(&mut pool);
    let collisions = hosted_collisions(config, domain, topic);
    let answer = answer_token(domain, topic);

    let total = config.sentences_per_doc * SENTENCE_TOKENS;
    let n_topic = (total as f64 * DOC_TOPIC_RATE).round() as usize;
    let n_collision = (total as f64 * DOC_COLLISION_RATE).round() as usize;
    let n_private = total - n_topic - n_collision;

    let mut words = Vec::with_capacity(total);
    for i in 0..n_topic {
        words.push(pool[i % pool.len()].clone());
    }
    for i in 0..n_collision {
        words.push(collisions[i % collisions.len()].clone());
    }
    words.extend(private_allocation(n_private, private_weights, domain));
    rng.shuffle(&mut words);

    let answer_sentence = rng.below(config.sentences_per_doc);
    let mut sentences = Vec::with_capacity(config.sentences_per_doc);
    for (s, chunk_words) in words.chunks(SENTENCE_TOKENS).enumerate() {
        let mut sentence_words: Vec<String> = chunk_words.to_vec();
        if s == answer_sentence {
            sentence_words.insert(SENTENCE_TOKENS / 2, answer.clone());
        }
        sentences.push(format!("{}.", sentence_words.join(" ")));
    }
    (sentences.join(" "), answer)
}

fn build_question(
    config: &SynthConfig,
    rng: &mut Rng,
    domain: usize,
    topic: usize,
    private_weights: &[f64],
) -> String {
    let pool = topic_pool(config, topic);
    let collisions = hosted_collisions(config, domain, topic);
    // Entity-style questions name a shared entity instead of using the
    // domain's own content words; decided once per question.
    let entity_style = rng.chance(QUERY_COLLISION_RATE);
    let words: Vec<String> = (0..QUERY_TOKENS)
        .map(|_| {
            if rng.chance(config.ambiguity_rate) {
                pool[rng.below(pool.len())].clone()
            } else if rng.chance(QUERY_STYLE_RATE) {
                style_token(domain, rng.below(STYLE_VARIANTS))
            } else if entity_style {
                collisions[rng.below(collisions.len())].clone()
            } else {
                private_token(domain, rng.weighted(private_weights))
            }
        })
        .collect();
    words.join(" ")
}

/// Generate the corpus: `queries_per_domain` records per domain, query i of
/// every domain targeting topic `i % docs_per_domain` (synchronized across
/// domains, so each realized topic exists in every domain and cross-domain
/// collisions are guaranteed). Each record carries the full text of its
/// target document as context; records sharing a target share the context
/// verbatim. Fully deterministic under the seed.
pub fn generate(config: &SynthConfig) -> Result<(Vec<MrcRecord>, Vec<String>)> {
    config.validate()?;
    let categories = category_labels(config.n_domains);
    let private_weights = zipf_weights(config.domain_vocab_size);
    let root = Rng::new(config.seed);

    let mut records = Vec::with_capacity(config.n_domains * config.queries_per_domain);
    let mut docs: std::collections::HashMap<(usize, usize), (String, String)> =
        std::collections::HashMap::new();

    for domain in 0..config.n_domains {
        for query_idx in 0..config.queries_per_domain {
            let topic = query_idx % config.docs_per_domain;
            let (context, answer) = docs
                .entry((domain, topic))
                .or_insert_with(|| {
                    let mut rng = root.derive(&format!("doc-{domain}-{topic}"));
                    build_doc(config, &mut rng, domain, topic, &private_weights)
                })
                .clone();
            let mut rng = root.derive(&format!("query-{domain}-{query_idx}"));
            let question = build_question(config, &mut rng, domain, topic, &private_weights);
            let answer_char_start = find_chars(&context, &answer)
                .expect("answer token is inserted into its document");
            records.push(MrcRecord {
                id: format!("q{domain:02}t{topic:04}n{query_idx:03}"),
                question,
                context,
                answer_text: answer,
                answer_char_start: Some(answer_char_start),
                category: categories[domain].clone(),
            });
        }
    }
    Ok((records, categories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrc::{parse_mrc_jsonl, records_to_jsonl, validate_record};
    use std::collections::{BTreeMap, HashSet};

    fn small_config() -> SynthConfig {
        SynthConfig {
            n_domains: 4,
            docs_per_domain: 6,
            sentences_per_doc: 5,
            queries_per_domain: 8,
            shared_vocab_size: 30,
            domain_vocab_size: 12,
            ambiguity_rate: 0.8,
            seed: 42,
        }
    }

    #[test]
    fn same_seed_gives_identical_corpora() {
        let (a, cats_a) = generate(&small_config()).unwrap();
        let (b, cats_b) = generate(&small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(cats_a, cats_b);
        let mut other = small_config();
        other.seed = 43;
        let (c, _) = generate(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn every_record_passes_loader_validation_round_trip() {
        let (records, _) = generate(&small_config()).unwrap();
        for r in &records {
            validate_record(r).unwrap();
        }
        let jsonl = records_to_jsonl(&records);
        let reparsed = parse_mrc_jsonl(&jsonl).unwrap();
        assert_eq!(records, reparsed);
    }

    #[test]
    fn answers_are_unique_to_one_document() {
        let (records, _) = generate(&small_config()).unwrap();
        // Collect distinct documents.
        let mut contexts: Vec<&str> = records.iter().map(|r| r.context.as_str()).collect();
        contexts.sort_unstable();
        contexts.dedup();
        for r in &records {
            let holders = contexts
                .iter()
                .filter(|c| c.contains(&r.answer_text))
                .count();
            assert_eq!(holders, 1, "answer {} found in {holders} docs", r.answer_text);
        }
    }

    #[test]
    fn category_distribution_is_uniform() {
        let config = small_config();
        let (records, categories) = generate(&config).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *counts.entry(r.category.as_str()).or_default() += 1;
        }
        assert_eq!(counts.len(), categories.len());
        for (_, count) in counts {
            assert_eq!(count, config.queries_per_domain);
        }
    }

    #[test]
    fn zero_ambiguity_queries_avoid_shared_vocabulary() {
        let mut config = small_config();
        config.ambiguity_rate = 0.0;
        let (records, _) = generate(&config).unwrap();
        for r in &records {
            for word in r.question.split_whitespace() {
                assert!(
                    word.starts_with('p') || word.starts_with('c') || word.starts_with('y'),
                    "expected only domain-evidence tokens, got {word}"
                );
            }
        }
    }

    #[test]
    fn full_ambiguity_queries_draw_only_from_topic_pools() {
        let mut config = small_config();
        config.ambiguity_rate = 1.0;
        let (records, _) = generate(&config).unwrap();
        for r in &records {
            for word in r.question.split_whitespace() {
                assert!(
                    word.starts_with('s'),
                    "non-pool token {word} in fully ambiguous query"
                );
            }
        }
    }

    #[test]
    fn collision_entities_span_two_domains() {
        let config = small_config();
        let (records, _) = generate(&config).unwrap();
        // The collision token anchored at (domain 0, topic 0) must appear in
        // documents of exactly two distinct categories.
        let token = collision_token(0, 0);
        let mut cats: Vec<&str> = records
            .iter()
            .filter(|r| r.context.contains(&token))
            .map(|r| r.category.as_str())
            .collect();
        cats.sort_unstable();
        cats.dedup();
        assert_eq!(cats.len(), 2, "collision token should span two domains");
    }

    #[test]
    fn topics_are_synchronized_across_domains() {
        let config = small_config();
        let (records, categories) = generate(&config).unwrap();
        // Every domain realizes topic 1, and each of those documents shows
        // at least one token from topic 1's shared pool.
        let per_topic = tokens_per_topic(&config);
        let pool: Vec<String> = (0..per_topic)
            .map(|j| shared_token((per_topic + j) % config.shared_vocab_size))
            .collect();
        let mut domains_seen = HashSet::new();
        for r in &records {
            if r.id.contains("t0001") && pool.iter().any(|t| r.context.contains(t)) {
                domains_seen.insert(r.category.clone());
            }
        }
        assert_eq!(domains_seen.len(), categories.len());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = small_config();
        config.ambiguity_rate = 1.5;
        assert!(generate(&config).is_err());
        let mut config = small_config();
        config.n_domains = 1;
        assert!(generate(&config).is_err());
        let mut config = small_config();
        config.sentences_per_doc = 0;
        assert!(generate(&config).is_err());
    }

    #[test]
    fn category_labels_extend_past_builtins() {
        let labels = category_labels(13);
        assert_eq!(labels.len(), 13);
        assert!(labels.contains(&"science".to_string()));
        assert!(labels.contains(&"domain11".to_string()));
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
    }
}
