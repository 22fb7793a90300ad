//! Dual-encoder training with in-batch negatives.
//!
//! For a batch of B (query, positive) pairs, every other pair's positive
//! serves as a negative, giving a B-way softmax per query over the score
//! matrix `S = Q P^T`. The objective is the mean negative log-likelihood of
//! the diagonal. Gradients are analytic and exact; the test suite checks
//! them against central finite differences.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{DualEncoder, EncoderParams, Tower};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::vocab::TokenSeq;

/// Optimizer selection with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Training hyperparameters. The defaults converge on the synthetic corpus
/// in seconds; they are plain config values, not tuned claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 30,
            learning_rate: 1e-2,
            seed: 42,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::ConfigInvalid(
                "batch_size must be >= 2 (in-batch negatives need at least one negative)".into(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::ConfigInvalid("learning_rate must be positive".into()));
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return Err(Error::ConfigInvalid("adam parameters out of range".into()));
            }
        }
        Ok(())
    }
}

/// One training batch of CT-composed sequences; `positives[i]` is the gold
/// passage for `queries[i]`.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    queries: Vec<TokenSeq>,
    positives: Vec<TokenSeq>,
}

impl TrainBatch {
    pub fn new(queries: Vec<TokenSeq>, positives: Vec<TokenSeq>) -> Result<TrainBatch> {
        if queries.len() != positives.len() {
            return Err(Error::ShapeMismatch(format!(
                "queries ({}) vs positives ({})",
                queries.len(),
                positives.len()
            )));
        }
        if queries.len() < 2 {
            return Err(Error::TooFewPairs {
                needed: 2,
                got: queries.len(),
            });
        }
        Ok(TrainBatch { queries, positives })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[TokenSeq] {
        &self.queries
    }

    pub fn positives(&self) -> &[TokenSeq] {
        &self.positives
    }
}

/// Row-wise softmax with max-subtraction.
fn softmax_rows(scores: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(scores.rows, scores.cols);
    for r in 0..scores.rows {
        let row = scores.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let out_row = out.row_mut(r);
        let mut total = 0.0;
        for (o, &s) in out_row.iter_mut().zip(row) {
            let e = (s - max).exp();
            *o = e;
            total += e;
        }
        for o in out_row.iter_mut() {
            *o /= total;
        }
    }
    out
}

/// Mean over rows of `-log softmax(S_i)[i]`: the in-batch-negative NLL.
/// Always >= 0; equals `ln B` when all scores are equal.
pub fn in_batch_nll(scores: &Matrix) -> Result<f64> {
    if scores.rows != scores.cols {
        return Err(Error::ShapeMismatch(format!(
            "score matrix must be square, got {}x{}",
            scores.rows, scores.cols
        )));
    }
    if !scores.is_finite() {
        return Err(Error::NonFinite("score matrix".into()));
    }
    let b = scores.rows;
    let mut total = 0.0;
    for r in 0..b {
        let row = scores.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsumexp = max + row.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
        total += logsumexp - scores.get(r, r);
    }
    Ok(total / b as f64)
}

/// The `B x B` score matrix for a batch: `S_ij = q_i . p_j`.
pub fn score_matrix(encoder: &DualEncoder, batch: &TrainBatch) -> Result<Matrix> {
    let q = encoder.encode_batch(Tower::Question, batch.queries())?;
    let p = encoder.encode_batch(Tower::Passage, batch.positives())?;
    Ok(q.mul_transpose(&p))
}

/// Gradients for one tower, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerGrads {
    pub embedding: Matrix,
    pub proj_w: Matrix,
    pub proj_b: Vec<f64>,
}

impl TowerGrads {
    fn zeros_like(params: &EncoderParams) -> TowerGrads {
        TowerGrads {
            embedding: Matrix::zeros(params.embedding.rows, params.embedding.cols),
            proj_w: Matrix::zeros(params.proj_w.rows, params.proj_w.cols),
            proj_b: vec![0.0; params.proj_b.len()],
        }
    }

    fn ensure_shape(&self, params: &EncoderParams, tower: &str) -> Result<()> {
        self.embedding
            .ensure_same_shape(&params.embedding, &format!("{tower} embedding"))?;
        self.proj_w
            .ensure_same_shape(&params.proj_w, &format!("{tower} proj_w"))?;
        if self.proj_b.len() != params.proj_b.len() {
            return Err(Error::ShapeMismatch(format!("{tower} proj_b")));
        }
        Ok(())
    }
}

/// Gradients for both towers.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGrads {
    pub q: TowerGrads,
    pub p: TowerGrads,
}

impl DualGrads {
    pub fn zeros_like(encoder: &DualEncoder) -> DualGrads {
        DualGrads {
            q: TowerGrads::zeros_like(&encoder.q),
            p: TowerGrads::zeros_like(&encoder.p),
        }
    }
}

/// Backprop one tower: given per-row output gradients `d_vecs` (`B x d_out`)
/// and the pooled means that produced them, accumulate parameter gradients.
fn tower_backprop(
    params: &EncoderParams,
    seqs: &[TokenSeq],
    means: &[Vec<f64>],
    d_vecs: &Matrix,
    grads: &mut TowerGrads,
) {
    for i in 0..seqs.len() {
        let dv = d_vecs.row(i);
        // d/db = sum_i dv_i
        for (g, d) in grads.proj_b.iter_mut().zip(dv) {
            *g += d;
        }
        // d/dW = m_i (outer) dv_i
        let m = &means[i];
        for (e, &me) in m.iter().enumerate() {
            if me == 0.0 {
                continue;
            }
            let row = grads.proj_w.row_mut(e);
            for (g, d) in row.iter_mut().zip(dv) {
                *g += me * d;
            }
        }
        // d/dm_i = W dv_i, spread uniformly over the sequence's tokens.
        let dm = params.proj_w.vec_mul(dv);
        let inv_len = 1.0 / seqs[i].len() as f64;
        for &id in &seqs[i].ids {
            let row = grads.embedding.row_mut(id as usize);
            for (g, d) in row.iter_mut().zip(&dm) {
                *g += d * inv_len;
            }
        }
    }
}

/// Loss and exact analytic gradients of [`in_batch_nll`] with respect to
/// every parameter of both towers. Vocabulary rows absent from the batch get
/// zero gradient.
pub fn grad_batch(encoder: &DualEncoder, batch: &TrainBatch) -> Result<(f64, DualGrads)> {
    let b = batch.len();
    let q_means: Vec<Vec<f64>> = batch
        .queries()
        .iter()
        .map(|s| encoder.q.mean_pool(s))
        .collect::<Result<_>>()?;
    let p_means: Vec<Vec<f64>> = batch
        .positives()
        .iter()
        .map(|s| encoder.p.mean_pool(s))
        .collect::<Result<_>>()?;

    let mut q_vecs = Matrix::zeros(b, encoder.q.d_out());
    for (i, m) in q_means.iter().enumerate() {
        q_vecs.row_mut(i).copy_from_slice(&encoder.q.project(m));
    }
    let mut p_vecs = Matrix::zeros(b, encoder.p.d_out());
    for (i, m) in p_means.iter().enumerate() {
        p_vecs.row_mut(i).copy_from_slice(&encoder.p.project(m));
    }

    let scores = q_vecs.mul_transpose(&p_vecs);
    let loss = in_batch_nll(&scores)?;

    // dL/dS = (softmax(S) - I) / B
    let mut g = softmax_rows(&scores);
    for i in 0..b {
        let v = g.get(i, i) - 1.0;
        g.set(i, i, v);
    }
    let inv_b = 1.0 / b as f64;
    for v in &mut g.data {
        *v *= inv_b;
    }

    let d_q_vecs = g.mul(&p_vecs); // dL/dq_i = sum_j G_ij p_j
    let d_p_vecs = g.transpose().mul(&q_vecs); // dL/dp_j = sum_i G_ij q_i

    let mut grads = DualGrads::zeros_like(encoder);
    tower_backprop(&encoder.q, batch.queries(), &q_means, &d_q_vecs, &mut grads.q);
    tower_backprop(&encoder.p, batch.positives(), &p_means, &d_p_vecs, &mut grads.p);
    Ok((loss, grads))
}

/// Parameter updater. SGD is stateless; Adam keeps first/second moments and
/// a shared step counter, with standard bias correction.
#[derive(Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step_count: u64,
    moments: Option<(DualGrads, DualGrads)>,
}

impl Optimizer {
    pub fn new(config: &TrainConfig) -> Optimizer {
        Optimizer {
            kind: config.optimizer.clone(),
            learning_rate: config.learning_rate,
            step_count: 0,
            moments: None,
        }
    }

    pub fn step(&mut self, encoder: &mut DualEncoder, grads: &DualGrads) -> Result<()> {
        grads.q.ensure_shape(&encoder.q, "question")?;
        grads.p.ensure_shape(&encoder.p, "passage")?;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.learning_rate;
                sgd_update(&mut encoder.q.embedding.data, &grads.q.embedding.data, lr);
                sgd_update(&mut encoder.q.proj_w.data, &grads.q.proj_w.data, lr);
                sgd_update(&mut encoder.q.proj_b, &grads.q.proj_b, lr);
                sgd_update(&mut encoder.p.embedding.data, &grads.p.embedding.data, lr);
                sgd_update(&mut encoder.p.proj_w.data, &grads.p.proj_w.data, lr);
                sgd_update(&mut encoder.p.proj_b, &grads.p.proj_b, lr);
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if self.moments.is_none() {
                    self.moments = Some((DualGrads::zeros_like(encoder), DualGrads::zeros_like(encoder)));
                }
                self.step_count += 1;
                let t = self.step_count;
                let (m, v) = self.moments.as_mut().expect("moments initialized above");
                let lr = self.learning_rate;
                adam_update(&mut encoder.q.embedding.data, &grads.q.embedding.data, &mut m.q.embedding.data, &mut v.q.embedding.data, lr, beta1, beta2, epsilon, t);
                adam_update(&mut encoder.q.proj_w.data, &grads.q.proj_w.data, &mut m.q.proj_w.data, &mut v.q.proj_w.data, lr, beta1, beta2, epsilon, t);
                adam_update(&mut encoder.q.proj_b, &grads.q.proj_b, &mut m.q.proj_b, &mut v.q.proj_b, lr, beta1, beta2, epsilon, t);
                adam_update(&mut encoder.p.embedding.data, &grads.p.embedding.data, &mut m.p.embedding.data, &mut v.p.embedding.data, lr, beta1, beta2, epsilon, t);
                adam_update(&mut encoder.p.proj_w.data, &grads.p.proj_w.data, &mut m.p.proj_w.data, &mut v.p.proj_w.data, lr, beta1, beta2, epsilon, t);
                adam_update(&mut encoder.p.proj_b, &grads.p.proj_b, &mut m.p.proj_b, &mut v.p.proj_b, lr, beta1, beta2, epsilon, t);
            }
        }
        Ok(())
    }
}

fn sgd_update(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// Greedy batch assembly over a shuffled order: each batch takes the next
/// `batch_size` pairs whose positives are pairwise distinct, so a passage
/// never serves as its own in-batch negative (two rows with an identical
/// positive would make the softmax target unreachable). Pairs skipped by one
/// batch stay eligible for the next; the final short batch is dropped.
fn assemble_batches(
    pairs: &[(TokenSeq, TokenSeq)],
    order: &[usize],
    batch_size: usize,
) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = order.to_vec();
    let mut batches = Vec::new();
    while remaining.len() >= batch_size {
        let mut batch = Vec::with_capacity(batch_size);
        let mut seen_positives: std::collections::HashSet<&[u32]> = std::collections::HashSet::new();
        let mut leftover = Vec::new();
        for &idx in remaining.iter() {
            if batch.len() < batch_size && seen_positives.insert(&pairs[idx].1.ids) {
                batch.push(idx);
            } else {
                leftover.push(idx);
            }
        }
        if batch.len() < batch_size {
            break;
        }
        batches.push(batch);
        remaining = leftover;
    }
    batches
}

/// Train the dual encoder on (query, positive) pairs. Pairs are reshuffled
/// each epoch from a seeded stream; batches have exactly `batch_size` rows
/// with distinct positives, and the trailing remainder is dropped, so
/// per-batch loss scales stay comparable. Returns the trained encoder and
/// the per-epoch mean loss trace. The same (seed, data, config) produces
/// bitwise-identical results.
pub fn train_retriever(
    mut encoder: DualEncoder,
    pairs: &[(TokenSeq, TokenSeq)],
    config: &TrainConfig,
) -> Result<(DualEncoder, Vec<f64>)> {
    config.validate()?;
    if pairs.len() < config.batch_size {
        return Err(Error::TooFewPairs {
            needed: config.batch_size,
            got: pairs.len(),
        });
    }
    let mut rng = Rng::new(config.seed).derive("epoch-shuffle");
    let mut optimizer = Optimizer::new(config);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for _epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_losses = Vec::new();
        for batch_idx in assemble_batches(pairs, &order, config.batch_size) {
            let queries: Vec<TokenSeq> = batch_idx.iter().map(|&i| pairs[i].0.clone()).collect();
            let positives: Vec<TokenSeq> = batch_idx.iter().map(|&i| pairs[i].1.clone()).collect();
            let batch = TrainBatch::new(queries, positives)?;
            let (loss, grads) = grad_batch(&encoder, &batch)?;
            optimizer.step(&mut encoder, &grads)?;
            epoch_losses.push(loss);
        }
        if epoch_losses.is_empty() {
            return Err(Error::TooFewPairs {
                needed: config.batch_size,
                got: 0,
            });
        }
        let mean = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
        trace.push(mean);
    }
    Ok((encoder, trace))
}

/// Write a loss trace as `epoch,mean_loss` CSV.
pub fn write_loss_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
