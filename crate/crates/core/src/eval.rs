//! Top-N answer-containment evaluation, base-vs-CT comparison, and the
//! classification-threshold sweep.
//!
//! A query counts as a hit at rank r when the r-th retrieved chunk contains
//! the gold answer string after normalization (NFC, lowercase, whitespace
//! collapsed). Top-N accuracy is the fraction of queries with a hit at rank
//! <= N. Containment is judged per chunk, matching what the index stores.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::index::RetrievalResult;
use crate::mrc::MrcRecord;
use crate::pipeline::{self, ExperimentConfig};

/// One evaluation query with its gold answer and category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query_id: String,
    pub question: String,
    pub answer_text: String,
    pub gold_category: String,
}

/// Which retrieval condition a report measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Trained and queried without control tokens anywhere.
    DprBase,
    /// CT-trained; query CT from the thresholded classifier.
    Cdpr,
    /// CT-trained; query CT forced to the gold category (upper bound).
    CdprOracleCt,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::DprBase => write!(f, "dpr_base"),
            EvalMode::Cdpr => write!(f, "cdpr"),
            EvalMode::CdprOracleCt => write!(f, "cdpr_oracle_ct"),
        }
    }
}

/// Accuracy report for one retrieval condition. `per_query_hits` records the
/// first hit rank per query (`null` in JSON for a miss within the retrieval
/// depth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub threshold: Option<f64>,
    pub top_n_accuracy: BTreeMap<u32, f64>,
    pub per_query_hits: BTreeMap<String, Option<u32>>,
}

impl EvalReport {
    pub fn accuracy_at(&self, n: u32) -> Option<f64> {
        self.top_n_accuracy.get(&n).copied()
    }
}

fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// True when the normalized answer occurs as a substring of the normalized
/// chunk text.
pub fn contains_answer(chunk_text: &str, answer_text: &str) -> bool {
    debug_assert!(!answer_text.trim().is_empty());
    normalize(chunk_text).contains(&normalize(answer_text))
}

/// Compute Top-N accuracy over aligned results and queries. `chunk_texts`
/// maps chunk ids (as stored in the index) to their text.
pub fn top_n_accuracy(
    results: &[RetrievalResult],
    queries: &[EvalQuery],
    chunk_texts: &HashMap<String, String>,
    ns: &[u32],
    mode: EvalMode,
    threshold: Option<f64>,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &RetrievalResult> = results
        .iter()
        .map(|r| (r.query_id.as_str(), r))
        .collect();
    let mut per_query_hits = BTreeMap::new();
    for query in queries {
        let result = by_id
            .get(query.query_id.as_str())
            .ok_or_else(|| Error::MissingQuery(query.query_id.clone()))?;
        let mut first_hit: Option<u32> = None;
        for (i, scored) in result.ranked.iter().enumerate() {
            let text = chunk_texts
                .get(&scored.chunk_id)
                .ok_or_else(|| Error::MissingChunk(scored.chunk_id.clone()))?;
            if contains_answer(text, &query.answer_text) {
                first_hit = Some(i as u32 + 1);
                break;
            }
        }
        per_query_hits.insert(query.query_id.clone(), first_hit);
    }
    let total = queries.len().max(1) as f64;
    let mut top_n = BTreeMap::new();
    for &n in ns {
        let hits = per_query_hits
            .values()
            .filter(|hit| hit.is_some_and(|rank| rank <= n))
            .count();
        top_n.insert(n, hits as f64 / total);
    }
    Ok(EvalReport {
        mode,
        threshold,
        top_n_accuracy: top_n,
        per_query_hits,
    })
}

/// Base-vs-CT comparison output: both reports plus per-N deltas in
/// percentage points (CT minus base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub base: EvalReport,
    pub cdpr: EvalReport,
    pub delta_points: BTreeMap<u32, f64>,
}

impl ComparisonOutcome {
    fn new(base: EvalReport, cdpr: EvalReport) -> ComparisonOutcome {
        let delta_points = base
            .top_n_accuracy
            .keys()
            .map(|&n| {
                let b = base.top_n_accuracy[&n];
                let c = cdpr.top_n_accuracy.get(&n).copied().unwrap_or(0.0);
                (n, (c - b) * 100.0)
            })
            .collect();
        ComparisonOutcome {
            base,
            cdpr,
            delta_points,
        }
    }
}

/// Train and evaluate both conditions on one corpus: identical chunking,
/// splits, seeds, and hyperparameters; only control-token usage differs.
/// The CT condition runs at `config.comparison_threshold`.
pub fn run_comparison(records: &[MrcRecord], config: &ExperimentConfig) -> Result<ComparisonOutcome> {
    config.validate()?;
    let vocab = pipeline::build_vocab_for(records, config)?;
    let prepared = pipeline::prepare(records, config, &vocab)?;

    let (base_encoder, _) = pipeline::train_retriever_mode(&prepared, None, config)?;
    let base_index = pipeline::build_mode_index(&prepared, &base_encoder, false)?;
    let base = pipeline::evaluate_mode(
        &prepared,
        &base_encoder,
        &base_index,
        None,
        EvalMode::DprBase,
        None,
        config,
    )?;

    let (classifier, _) = pipeline::train_query_classifier(&prepared, config)?;
    let (ct_encoder, _) = pipeline::train_retriever_mode(&prepared, Some(&classifier), config)?;
    let ct_index = pipeline::build_mode_index(&prepared, &ct_encoder, true)?;
    let cdpr = pipeline::evaluate_mode(
        &prepared,
        &ct_encoder,
        &ct_index,
        Some(&classifier),
        EvalMode::Cdpr,
        Some(config.comparison_threshold),
        config,
    )?;
    Ok(ComparisonOutcome::new(base, cdpr))
}

/// Evaluate the CT condition across classification thresholds. The encoder,
/// index, and classifier are trained once; only the gate varies.
pub fn threshold_sweep(
    records: &[MrcRecord],
    thresholds: &[f64],
    config: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    config.validate()?;
    let vocab = pipeline::build_vocab_for(records, config)?;
    let prepared = pipeline::prepare(records, config, &vocab)?;
    let (classifier, _) = pipeline::train_query_classifier(&prepared, config)?;
    let (encoder, _) = pipeline::train_retriever_mode(&prepared, Some(&classifier), config)?;
    let index = pipeline::build_mode_index(&prepared, &encoder, true)?;
    thresholds
        .iter()
        .map(|&t| {
            pipeline::evaluate_mode(
                &prepared,
                &encoder,
                &index,
                Some(&classifier),
                EvalMode::Cdpr,
                Some(t),
                config,
            )
        })
        .collect()
}

fn percent(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// Aligned-column text: one row per N, one column per condition.
pub fn render_comparison_table(outcome: &ComparisonOutcome) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8}{:>10}{:>10}{:>10}\n",
        "", "DPR base", "cDPR", "delta"
    ));
    for (&n, &base) in &outcome.base.top_n_accuracy {
        let cdpr = outcome.cdpr.top_n_accuracy.get(&n).copied().unwrap_or(0.0);
        let delta = outcome.delta_points.get(&n).copied().unwrap_or(0.0);
        out.push_str(&format!(
            "{:<8}{:>10}{:>10}{:>10}\n",
            format!("Top{n}"),
            percent(base),
            percent(cdpr),
            format!("{delta:+.1}")
        ));
    }
    out
}

/// Aligned-column text: one row per N, one column per threshold.
pub fn render_sweep_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<8}", "cDPR"));
    for report in reports {
        let t = report.threshold.unwrap_or(0.0);
        out.push_str(&format!("{:>10}", format!(">= {t}")));
    }
    out.push('\n');
    let ns: Vec<u32> = reports
        .first()
        .map(|r| r.top_n_accuracy.keys().copied().collect())
        .unwrap_or_default();
    for n in ns {
        out.push_str(&format!("{:<8}", format!("Top{n}")));
        for report in reports {
            let v = report.top_n_accuracy.get(&n).copied().unwrap_or(0.0);
            out.push_str(&format!("{:>10}", percent(v)));
        }
        out.push('\n');
    }
    out
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Average rank for the tie group (1-based ranks).
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; 0 when either side
/// has no variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mean_x = rx.iter().sum::<f64>() / n;
    let mean_y = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mean_x;
        let dy = ry[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return 0.0;
    }
    cov / (var_x.sqrt() * var_y.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::ScoredChunk;

    #[test]
    fn containment_normalizes_case_and_whitespace() {
        assert!(contains_answer("The tax is 5%.", "5%"));
        assert!(contains_answer("TAX  RATE", "tax rate"));
        assert!(!contains_answer("taxation", "tax rate"));
    }

    #[test]
    fn containment_applies_nfc() {
        // Decomposed vs precomposed e-acute.
        let decomposed = "caf\u{0065}\u{0301}";
        let precomposed = "caf\u{00e9}";
        assert!(contains_answer(decomposed, precomposed));
    }

    fn fixture_report(ranks: &[Option<u32>]) -> EvalReport {
        // Build queries/results/chunks realizing the given first-hit ranks.
        let depth = 25usize;
        let mut chunk_texts = HashMap::new();
        let mut results = Vec::new();
        let mut queries = Vec::new();
        for (qi, rank) in ranks.iter().enumerate() {
            let answer = format!("needle{qi}");
            let mut ranked = Vec::new();
            for pos in 1..=depth {
                let chunk_id = format!("q{qi}-c{pos}");
                let text = if Some(pos as u32) == *rank {
                    format!("here is {answer} indeed")
                } else {
                    "nothing relevant".to_string()
                };
                chunk_texts.insert(chunk_id.clone(), text);
                ranked.push(ScoredChunk {
                    chunk_id,
                    score: -(pos as f64),
                });
            }
            results.push(RetrievalResult {
                query_id: format!("q{qi}"),
                assigned_ct: None,
                ranked,
            });
            queries.push(EvalQuery {
                query_id: format!("q{qi}"),
                question: "q".into(),
                answer_text: answer,
                gold_category: "c".into(),
            });
        }
        top_n_accuracy(
            &results,
            &queries,
            &chunk_texts,
            &[1, 5, 10, 15, 20],
            EvalMode::DprBase,
            None,
        )
        .unwrap()
    }

    #[test]
    fn hand_fixture_matches_enumerated_fractions() {
        // Hits at ranks 1, 3, miss, 21: Top1 = 1/4, Top5 = 2/4, Top20 = 2/4.
        let report = fixture_report(&[Some(1), Some(3), None, Some(21)]);
        assert_eq!(report.accuracy_at(1), Some(0.25));
        assert_eq!(report.accuracy_at(5), Some(0.5));
        assert_eq!(report.accuracy_at(10), Some(0.5));
        assert_eq!(report.accuracy_at(15), Some(0.5));
        assert_eq!(report.accuracy_at(20), Some(0.5));
        assert_eq!(report.per_query_hits["q0"], Some(1));
        assert_eq!(report.per_query_hits["q2"], None);
        assert_eq!(report.per_query_hits["q3"], Some(21));
    }

    #[test]
    fn perfect_rank_one_gives_all_ones() {
        let report = fixture_report(&[Some(1), Some(1), Some(1)]);
        for (_, &v) in &report.top_n_accuracy {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn accuracy_is_nondecreasing_in_n() {
        let report = fixture_report(&[Some(2), Some(7), None, Some(14), Some(20)]);
        let values: Vec<f64> = report.top_n_accuracy.values().copied().collect();
        for w in values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn fractions_recompute_from_per_query_ranks() {
        let report = fixture_report(&[Some(1), Some(9), None, Some(21), Some(3)]);
        for (&n, &frac) in &report.top_n_accuracy {
            let recount = report
                .per_query_hits
                .values()
                .filter(|h| h.is_some_and(|r| r <= n))
                .count() as f64
                / report.per_query_hits.len() as f64;
            assert_eq!(frac, recount);
        }
    }

    #[test]
    fn missing_query_is_reported() {
        let queries = vec![EvalQuery {
            query_id: "absent".into(),
            question: "q".into(),
            answer_text: "a".into(),
            gold_category: "c".into(),
        }];
        let err = top_n_accuracy(
            &[],
            &queries,
            &HashMap::new(),
            &[1],
            EvalMode::DprBase,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingQuery(id) if id == "absent"));
    }

    #[test]
    fn tables_render_aligned_columns() {
        let base = fixture_report(&[Some(1), None]);
        let cdpr = fixture_report(&[Some(1), Some(1)]);
        let outcome = ComparisonOutcome::new(base, cdpr.clone());
        let table = render_comparison_table(&outcome);
        assert!(table.contains("DPR base"));
        assert!(table.contains("Top20"));
        assert!(table.contains("+50.0"));

        let mut sweep_report = cdpr;
        sweep_report.threshold = Some(0.9);
        let sweep = render_sweep_table(&[sweep_report]);
        assert!(sweep.contains(">= 0.9"));
        assert!(sweep.contains("100.0%"));
    }

    #[test]
    fn spearman_detects_direction_and_handles_ties() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]) + 1.0).abs() < 1e-12);
        // Flat second variable: defined as zero.
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
        // Monotone with a tie stays positive.
        assert!(spearman(&[0.0, 0.5, 0.7, 0.9], &[0.6, 0.62, 0.62, 0.64]) > 0.0);
    }
}
