//! A two-layer bidirectional LSTM classifier written from scratch, with
//! backpropagation through time and a finite-difference gradient checker.
//!
//! Tokens are embedded, run through a bidirectional layer (64 units per
//! direction by default), inverted dropout, and a second bidirectional layer
//! (32 per direction). The classifier reads the second layer's last forward
//! state and first-step backward state and applies a dense softmax over the
//! three sentiment classes.

mod cell;
mod model;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use cell::{LstmCell, Matrix};
pub use model::{
    encode, BiLstmDims, BiLstmModel, BiLstmParams, ForwardCache, SequenceBatch, Vocab, NUM_CLASSES, PAD_ID, UNK_ID,
};

use crate::corpus::{Dataset, SentimentLabel};
use crate::error::{Error, Result};
use crate::features::tokenize;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub max_len: usize,
    pub dropout: f64,
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for NeuralTrainConfig {
    fn default() -> Self {
        NeuralTrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            max_len: 64,
            dropout: 0.3,
            embed_dim: 100,
            hidden1: 64,
            hidden2: 32,
        }
    }
}

/// Adam with the usual bias correction.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: BiLstmParams,
    v: BiLstmParams,
}

impl Adam {
    fn new(params: &BiLstmParams, lr: f64) -> Self {
        let zeros = BiLstmParams::zeros(params.dims());
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    fn step(&mut self, params: &mut BiLstmParams, grads: &BiLstmParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let grads = grads.blocks();
        for (((p, m), v), (_, g)) in
            params.blocks_mut().into_iter().zip(self.m.blocks_mut()).zip(self.v.blocks_mut()).zip(grads)
        {
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
    }
}

fn encode_all(ds: &Dataset, vocab: &Vocab, max_len: usize) -> Result<Vec<(Vec<u32>, SentimentLabel)>> {
    ds.iter()
        .map(|d| {
            let label = d.label.ok_or_else(|| Error::Unlabeled { id: d.id.clone() })?;
            Ok((vocab.encode(&tokenize(&d.normalized_text), max_len), label))
        })
        .collect()
}

fn batch_of(items: &[&(Vec<u32>, SentimentLabel)], max_len: usize) -> SequenceBatch {
    SequenceBatch::from_sequences(
        items.iter().map(|(s, _)| s.clone()).collect(),
        items.iter().map(|(_, l)| *l).collect(),
        max_len,
    )
}

fn accuracy(model: &BiLstmModel, items: &[(Vec<u32>, SentimentLabel)], batch_size: usize) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in items.chunks(batch_size) {
        let refs: Vec<_> = chunk.iter().collect();
        let (probs, _) = model.forward(&batch_of(&refs, model.max_len), false, 0)?;
        for (p, (_, label)) in probs.iter().zip(chunk) {
            if SentimentLabel::ALL[crate::classifiers::argmax(p)] == *label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / items.len() as f64)
}

/// Trains with Adam on shuffled mini-batches and returns the parameters
/// from the epoch with the best validation accuracy (earliest on ties).
/// The vocabulary comes from `train` only.
pub fn train_bilstm(train: &Dataset, valid: &Dataset, cfg: &NeuralTrainConfig) -> Result<BiLstmModel> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::InvalidArgument("BiLSTM training needs non-empty train and validation sets".into()));
    }
    if cfg.batch_size == 0 || cfg.max_len == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("batch_size, max_len and learning_rate must be positive".into()));
    }
    let vocab = Vocab::from_documents(train.documents());
    let dims = BiLstmDims { vocab: vocab.len(), embed: cfg.embed_dim, hidden1: cfg.hidden1, hidden2: cfg.hidden2 };
    let params = BiLstmParams::init(dims, seed::derive_named(cfg.seed, "bilstm/init"));
    let mut model = BiLstmModel::new(params, vocab, cfg.dropout, cfg.max_len)?;
    let train_items = encode_all(train, &model.vocab, cfg.max_len)?;
    let valid_items = encode_all(valid, &model.vocab, cfg.max_len)?;

    let shuffle_seed = seed::derive_named(cfg.seed, "bilstm/shuffle");
    let dropout_seed = seed::derive_named(cfg.seed, "bilstm/dropout");
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut best: Option<(f64, BiLstmParams)> = None;
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(seed::derive(shuffle_seed, epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<_> = chunk.iter().map(|&i| &train_items[i]).collect();
            let batch = batch_of(&items, cfg.max_len);
            let (loss, grads) = model
                .loss_and_grads(&batch, true, seed::derive(dropout_seed, step))
                .map_err(|e| match e {
                    Error::NonFinite { stage } => Error::NonFinite { stage: format!("{stage} (epoch {epoch}, diverged)") },
                    other => other,
                })?;
            adam.step(&mut model.params, &grads);
            total += loss * chunk.len() as f64;
            step += 1;
        }
        let acc = accuracy(&model, &valid_items, cfg.batch_size)?;
        log::debug!("epoch {epoch}: train loss {:.4}, validation accuracy {acc:.4}", total / order.len() as f64);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model.params.clone()));
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    if !model.params.is_finite() {
        return Err(Error::NonFinite { stage: "BiLSTM training".into() });
    }
    Ok(model)
}

/// Result of comparing analytic gradients with central differences over
/// one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub block: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Element ranges per gate within each cell block, so every gate's input,
/// recurrent and bias weights are reported separately.
fn check_groups(p: &BiLstmParams) -> Vec<(String, usize, std::ops::Range<usize>)> {
    let mut groups = Vec::new();
    for (bi, (name, data)) in p.blocks().into_iter().enumerate() {
        if p.cells().iter().any(|(c, _)| name.starts_with(c)) {
            let per_gate = data.len() / 4;
            for (g, gate) in ["i", "f", "g", "o"].iter().enumerate() {
                groups.push((format!("{name}.{gate}"), bi, g * per_gate..(g + 1) * per_gate));
            }
        } else {
            groups.push((name, bi, 0..data.len()));
        }
    }
    groups
}

/// Compares [`BiLstmModel::loss_and_grads`] with central differences of
/// step `eps` for every parameter. Relative errors use
/// `|a - n| / max(|a|, |n|, 1e-8)`. Meant for small models.
pub fn gradient_check(
    model: &BiLstmModel,
    batch: &SequenceBatch,
    train_mode: bool,
    seed: u64,
    eps: f64,
) -> Result<Vec<GradCheck>> {
    let (_, grads) = model.loss_and_grads(batch, train_mode, seed)?;
    let analytic: Vec<Vec<f64>> = grads.blocks().into_iter().map(|(_, b)| b.to_vec()).collect();
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (name, bi, range) in check_groups(&model.params) {
        let mut worst = GradCheck { block: name, max_rel_error: 0.0, max_abs_error: 0.0 };
        for j in range {
            let orig = probe.params.blocks_mut()[bi][j];
            probe.params.blocks_mut()[bi][j] = orig + eps;
            let plus = probe.loss_and_grads(batch, train_mode, seed)?.0;
            probe.params.blocks_mut()[bi][j] = orig - eps;
            let minus = probe.loss_and_grads(batch, train_mode, seed)?.0;
            probe.params.blocks_mut()[bi][j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[bi][j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-8);
            worst.max_abs_error = worst.max_abs_error.max(abs);
            worst.max_rel_error = worst.max_rel_error.max(rel);
        }
        out.push(worst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
