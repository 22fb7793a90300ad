use ctrl_retrieve_core::eval::contains_answer;
use ctrl_retrieve_core::index::{retrieve, QueryCt};
use ctrl_retrieve_core::pipeline::{
    build_mode_index, build_vocab_for, prepare, train_retriever_mode, ExperimentConfig,
};
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::TrainConfig;

fn main() {
    let synth = SynthConfig { seed: 41, ..SynthConfig::default() };
    let (records, _) = generate(&synth).unwrap();
    let config = ExperimentConfig {
        d_emb: 128,
        d_out: 128,
        train: TrainConfig { epochs: 300, learning_rate: 0.02, ..TrainConfig::default() },
        train_ct_threshold: 0.5,
        ..ExperimentConfig::default()
    };
    let vocab = build_vocab_for(&records, &config).unwrap();
    let prepared = prepare(&records, &config, &vocab).unwrap();
    let (base_enc, trace) = train_retriever_mode(&prepared, None, &config).unwrap();
    println!("base loss: {:.4} -> {:.4}", trace[0], trace[trace.len() - 1]);
    let base_idx = build_mode_index(&prepared, &base_enc, false).unwrap();

    // Split record ids into train/eval via the prepared eval_queries set.
    let eval_ids: std::collections::HashSet<&str> = prepared
        .eval_queries
        .iter()
        .map(|q| q.query_id.as_str())
        .collect();

    let rank_of_correct = |question: &str, answer: &str| -> Option<usize> {
        let r = retrieve(
            &base_enc, None, &base_idx, &vocab, "q", question, &QueryCt::None, 110, 512,
        )
        .unwrap();
        r.ranked
            .iter()
            .position(|sc| contains_answer(&prepared.chunk_texts[&sc.chunk_id], answer))
            .map(|p| p + 1)
    };

    let mut train_hits = 0usize;
    let mut train_n = 0usize;
    let mut eval_hits = 0usize;
    let mut eval_n = 0usize;
    let mut eval_rank_hist = vec![0usize; 7]; // 1, 2-3, 4-5, 6-10, 11-20, 21+, none
    for r in &records {
        let rank = rank_of_correct(&r.question, &r.answer_text);
        let hit1 = rank == Some(1);
        if eval_ids.contains(r.id.as_str()) {
            eval_n += 1;
            eval_hits += hit1 as usize;
            let bucket = match rank {
                Some(1) => 0,
                Some(2..=3) => 1,
                Some(4..=5) => 2,
                Some(6..=10) => 3,
                Some(11..=20) => 4,
                Some(_) => 5,
                None => 6,
            };
            eval_rank_hist[bucket] += 1;
        } else {
            train_n += 1;
            train_hits += hit1 as usize;
        }
    }
    println!(
        "base top1: train {:.3} ({train_hits}/{train_n}), eval {:.3} ({eval_hits}/{eval_n})",
        train_hits as f64 / train_n as f64,
        eval_hits as f64 / eval_n as f64
    );
    println!("eval rank histogram [1, 2-3, 4-5, 6-10, 11-20, 21+, miss]: {eval_rank_hist:?}");
}
