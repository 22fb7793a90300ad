//! Dual-tower encoder: two independent mean-pooled embedding-bag towers
//! (question and passage) with a single linear projection each, scored by
//! raw dot product. The control token rides along as an ordinary input token
//! whose learned embedding shifts the pooled vector.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::Rng;
use crate::util::{self, fnv1a_hex};
use crate::vocab::{TokenSeq, Vocab};

pub const DEFAULT_D_EMB: usize = 64;
pub const DEFAULT_D_OUT: usize = 128;

const CHECKPOINT_VERSION: u32 = 1;
const INIT_RANGE: f64 = 0.05;

/// Trainable parameters of one tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// `[vocab_size x d_emb]` token embedding table.
    pub embedding: Matrix,
    /// `[d_emb x d_out]` projection.
    pub proj_w: Matrix,
    /// `[d_out]` bias.
    pub proj_b: Vec<f64>,
}

impl EncoderParams {
    pub fn vocab_size(&self) -> usize {
        self.embedding.rows
    }

    pub fn d_emb(&self) -> usize {
        self.embedding.cols
    }

    pub fn d_out(&self) -> usize {
        self.proj_w.cols
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.is_finite()
            && self.proj_w.is_finite()
            && self.proj_b.iter().all(|v| v.is_finite())
    }

    /// Mean of the embedding rows selected by `seq` (repeats included).
    pub fn mean_pool(&self, seq: &TokenSeq) -> Result<Vec<f64>> {
        if seq.is_empty() {
            return Err(Error::EmptySequence { index: None });
        }
        let mut acc = vec![0.0; self.d_emb()];
        for &id in &seq.ids {
            let row = self.embedding.row(id as usize);
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let inv = 1.0 / seq.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        Ok(acc)
    }

    /// Project a pooled d_emb vector into the output space.
    pub fn project(&self, pooled: &[f64]) -> Vec<f64> {
        let mut out = self.proj_w.transpose_vec_mul(pooled);
        for (o, b) in out.iter_mut().zip(&self.proj_b) {
            *o += b;
        }
        out
    }
}

/// Seeded initialization: embedding entries i.i.d. uniform in
/// `[-0.05, 0.05]`, projection entries from the same range scaled by
/// `1/sqrt(d_emb)`, bias zero.
pub fn init_encoder(vocab_size: usize, d_emb: usize, d_out: usize, seed: u64) -> Result<EncoderParams> {
    if vocab_size == 0 || d_emb == 0 || d_out == 0 {
        return Err(Error::InvalidDimension(format!(
            "vocab_size={vocab_size}, d_emb={d_emb}, d_out={d_out} (all must be >= 1)"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut embedding = Matrix::zeros(vocab_size, d_emb);
    for v in &mut embedding.data {
        *v = rng.uniform(-INIT_RANGE, INIT_RANGE);
    }
    let scale = 1.0 / (d_emb as f64).sqrt();
    let mut proj_w = Matrix::zeros(d_emb, d_out);
    for v in &mut proj_w.data {
        *v = rng.uniform(-INIT_RANGE, INIT_RANGE) * scale;
    }
    Ok(EncoderParams {
        embedding,
        proj_w,
        proj_b: vec![0.0; d_out],
    })
}

/// Which tower encodes a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tower {
    Question,
    Passage,
}

/// The two towers plus the hash of the vocabulary they were built against.
/// Both towers share one vocabulary so control-token ids agree.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub q: EncoderParams,
    pub p: EncoderParams,
    pub vocab_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    d_emb: usize,
    d_out: usize,
    vocab_hash: String,
    q_params: EncoderParams,
    p_params: EncoderParams,
}

impl DualEncoder {
    /// Initialize both towers against one vocabulary. The towers get
    /// distinct derived seeds, so they start (and stay) different.
    pub fn init(vocab: &Vocab, d_emb: usize, d_out: usize, seed: u64) -> Result<DualEncoder> {
        let root = Rng::new(seed);
        let q_seed = root.derive("question-tower").next_u64();
        let p_seed = root.derive("passage-tower").next_u64();
        Ok(DualEncoder {
            q: init_encoder(vocab.len(), d_emb, d_out, q_seed)?,
            p: init_encoder(vocab.len(), d_emb, d_out, p_seed)?,
            vocab_hash: vocab.content_hash(),
        })
    }

    pub fn params(&self, tower: Tower) -> &EncoderParams {
        match tower {
            Tower::Question => &self.q,
            Tower::Passage => &self.p,
        }
    }

    pub fn d_out(&self) -> usize {
        self.q.d_out()
    }

    /// Encode one sequence with the chosen tower:
    /// `proj_w^T * mean(embedding[ids]) + proj_b`. No output normalization;
    /// similarity lives in raw dot-product space.
    pub fn embed(&self, tower: Tower, seq: &TokenSeq) -> Result<Vec<f64>> {
        let params = self.params(tower);
        let pooled = params.mean_pool(seq)?;
        Ok(params.project(&pooled))
    }

    /// Encode a batch row-wise; row i is exactly `embed` of `seqs[i]`.
    pub fn encode_batch(&self, tower: Tower, seqs: &[TokenSeq]) -> Result<Matrix> {
        let params = self.params(tower);
        let mut out = Matrix::zeros(seqs.len(), params.d_out());
        for (i, seq) in seqs.iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::EmptySequence { index: Some(i) });
            }
            let vec = self.embed(tower, seq)?;
            out.row_mut(i).copy_from_slice(&vec);
        }
        Ok(out)
    }

    fn to_file(&self) -> CheckpointFile {
        CheckpointFile {
            version: CHECKPOINT_VERSION,
            d_emb: self.q.d_emb(),
            d_out: self.q.d_out(),
            vocab_hash: self.vocab_hash.clone(),
            q_params: self.q.clone(),
            p_params: self.p.clone(),
        }
    }

    /// Canonical checkpoint bytes; equal encoders serialize identically.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_file()).expect("checkpoint serialization cannot fail")
    }

    /// Content hash binding an index to the exact checkpoint that built it.
    pub fn content_hash(&self) -> String {
        fnv1a_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json_file(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<DualEncoder> {
        let file: CheckpointFile = util::read_json_file(path)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "encoder checkpoint".into(),
                found: file.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let enc = DualEncoder {
            q: file.q_params,
            p: file.p_params,
            vocab_hash: file.vocab_hash,
        };
        for (name, params) in [("question", &enc.q), ("passage", &enc.p)] {
            if params.d_emb() != file.d_emb
                || params.d_out() != file.d_out
                || params.proj_b.len() != file.d_out
                || params.proj_w.rows != params.d_emb()
            {
                return Err(Error::ShapeMismatch(format!(
                    "{name} tower dimensions disagree with checkpoint header"
                )));
            }
            if !params.is_finite() {
                return Err(Error::NonFinite(format!("{name} tower parameters")));
            }
        }
        if enc.q.d_out() != enc.p.d_out() || enc.q.vocab_size() != enc.p.vocab_size() {
            return Err(Error::ShapeMismatch(
                "question and passage towers disagree".into(),
            ));
        }
        Ok(enc)
    }

    /// Check the caller's vocabulary matches the one this encoder trained
    /// against.
    pub fn ensure_vocab(&self, vocab: &Vocab) -> Result<()> {
        let got = vocab.content_hash();
        if got != self.vocab_hash {
            return Err(Error::VocabMismatch {
                context: "encoder vs vocabulary".into(),
                expected: self.vocab_hash.clone(),
                got,
            });
        }
        Ok(())
    }
}

/// Dot-product similarity.
pub fn score(q_vec: &[f64], p_vec: &[f64]) -> Result<f64> {
    if q_vec.len() != p_vec.len() {
        return Err(Error::DimensionMismatch {
            left: q_vec.len(),
            right: p_vec.len(),
        });
    }
    Ok(dot(q_vec, p_vec))
}
