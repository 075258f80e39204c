use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cell::{axpy, dot, CellTrace, LstmCell, Matrix};
use crate::classifiers::{argmax, Prediction};
use crate::corpus::{Document, SentimentLabel};
use crate::error::{Error, Result};
use crate::features::tokenize;
use crate::seed;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const NUM_CLASSES: usize = 3;

/// Token-to-id mapping. Id 0 is padding and id 1 the unknown token; the
/// rest follow first occurrence in the training text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().skip(2).map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn build<I, S>(docs: I) -> Self
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
        let mut index = HashMap::new();
        for doc in docs {
            for tok in doc {
                let tok = tok.as_ref();
                if !index.contains_key(tok) {
                    index.insert(tok.to_string(), tokens.len() as u32);
                    tokens.push(tok.to_string());
                }
            }
        }
        Vocab { tokens, index }
    }

    /// Vocabulary over the tokenized documents.
    pub fn from_documents(docs: &[Document]) -> Self {
        Self::build(docs.iter().map(|d| tokenize(&d.normalized_text)))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the padding and unknown entries exist.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Maps tokens to ids, truncating to `max_len`. An empty document becomes
    /// a single unknown token.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Vec<u32> {
        let ids: Vec<u32> = tokens.iter().take(max_len).map(|t| self.id(t.as_ref())).collect();
        if ids.is_empty() {
            vec![UNK_ID]
        } else {
            ids
        }
    }
}

/// Padded token ids for a batch of sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    /// `B` rows of exactly `L` ids.
    pub token_ids: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
    pub labels: Vec<SentimentLabel>,
}

impl SequenceBatch {
    pub fn from_sequences(seqs: Vec<Vec<u32>>, labels: Vec<SentimentLabel>, max_len: usize) -> Self {
        let lengths = seqs.iter().map(Vec::len).collect();
        let token_ids = seqs
            .into_iter()
            .map(|mut s| {
                s.resize(max_len, PAD_ID);
                s
            })
            .collect();
        SequenceBatch { token_ids, lengths, labels }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Checks shapes, lengths and id ranges.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.token_ids.len() != self.lengths.len() || self.labels.len() != self.lengths.len() {
            return Err(Error::InvalidArgument("batch fields have different lengths".into()));
        }
        for (b, (row, &len)) in self.token_ids.iter().zip(&self.lengths).enumerate() {
            if len == 0 || len > row.len() {
                return Err(Error::InvalidArgument(format!("item {b}: length {len} outside 1..={}", row.len())));
            }
            if let Some(&id) = row.iter().find(|&&id| id as usize >= vocab_size) {
                return Err(Error::InvalidArgument(format!("item {b}: token id {id} outside the vocabulary")));
            }
        }
        Ok(())
    }
}

/// Encodes labeled documents into batches of at most `batch_size`, in
/// document order.
pub fn encode(docs: &[Document], vocab: &Vocab, max_len: usize, batch_size: usize) -> Result<Vec<SequenceBatch>> {
    if max_len == 0 || batch_size == 0 {
        return Err(Error::InvalidArgument("max_len and batch_size must be positive".into()));
    }
    let mut out = Vec::new();
    for chunk in docs.chunks(batch_size) {
        let labels = chunk
            .iter()
            .map(|d| d.label.ok_or_else(|| Error::Unlabeled { id: d.id.clone() }))
            .collect::<Result<Vec<_>>>()?;
        let seqs = chunk.iter().map(|d| vocab.encode(&tokenize(&d.normalized_text), max_len)).collect();
        out.push(SequenceBatch::from_sequences(seqs, labels, max_len));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLstmDims {
    pub vocab: usize,
    pub embed: usize,
    /// Per direction.
    pub hidden1: usize,
    /// Per direction.
    pub hidden2: usize,
}

impl BiLstmDims {
    /// Embedding 100, then 64 and 32 units per direction.
    pub fn standard(vocab: usize) -> Self {
        BiLstmDims { vocab, embed: 100, hidden1: 64, hidden2: 32 }
    }
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmParams {
    /// `V x E`; row 0 is the padding token.
    pub embedding: Matrix,
    pub l1_fwd: LstmCell,
    pub l1_bwd: LstmCell,
    pub l2_fwd: LstmCell,
    pub l2_bwd: LstmCell,
    /// `3 x 2*hidden2`
    pub dense: Matrix,
    pub dense_bias: Vec<f64>,
}

impl BiLstmParams {
    pub fn zeros(d: BiLstmDims) -> Self {
        BiLstmParams {
            embedding: Matrix::zeros(d.vocab, d.embed),
            l1_fwd: LstmCell::zeros(d.embed, d.hidden1),
            l1_bwd: LstmCell::zeros(d.embed, d.hidden1),
            l2_fwd: LstmCell::zeros(2 * d.hidden1, d.hidden2),
            l2_bwd: LstmCell::zeros(2 * d.hidden1, d.hidden2),
            dense: Matrix::zeros(NUM_CLASSES, 2 * d.hidden2),
            dense_bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn init(d: BiLstmDims, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let embedding = Matrix::uniform(d.vocab, d.embed, 0.05, &mut rng);
        let l1_fwd = LstmCell::init(d.embed, d.hidden1, &mut rng);
        let l1_bwd = LstmCell::init(d.embed, d.hidden1, &mut rng);
        let l2_fwd = LstmCell::init(2 * d.hidden1, d.hidden2, &mut rng);
        let l2_bwd = LstmCell::init(2 * d.hidden1, d.hidden2, &mut rng);
        let limit = (6.0 / (2 * d.hidden2 + NUM_CLASSES) as f64).sqrt();
        let dense = Matrix::uniform(NUM_CLASSES, 2 * d.hidden2, limit, &mut rng);
        BiLstmParams { embedding, l1_fwd, l1_bwd, l2_fwd, l2_bwd, dense, dense_bias: vec![0.0; NUM_CLASSES] }
    }

    pub fn dims(&self) -> BiLstmDims {
        BiLstmDims {
            vocab: self.embedding.rows,
            embed: self.embedding.cols,
            hidden1: self.l1_fwd.hidden(),
            hidden2: self.l2_fwd.hidden(),
        }
    }

    /// Named parameter arrays in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("embedding".into(), &self.embedding.data)];
        for (name, cell) in self.cells() {
            out.push((format!("{name}.input"), &cell.input.data));
            out.push((format!("{name}.recurrent"), &cell.recurrent.data));
            out.push((format!("{name}.bias"), &cell.bias));
        }
        out.push(("dense".into(), &self.dense.data));
        out.push(("dense_bias".into(), &self.dense_bias));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.embedding.data];
        for cell in [&mut self.l1_fwd, &mut self.l1_bwd, &mut self.l2_fwd, &mut self.l2_bwd] {
            out.push(&mut cell.input.data);
            out.push(&mut cell.recurrent.data);
            out.push(&mut cell.bias);
        }
        out.push(&mut self.dense.data);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn cells(&self) -> [(&'static str, &LstmCell); 4] {
        [("l1_fwd", &self.l1_fwd), ("l1_bwd", &self.l1_bwd), ("l2_fwd", &self.l2_fwd), ("l2_bwd", &self.l2_bwd)]
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.dims();
        let expected = BiLstmParams::zeros(d);
        let ok = self.blocks().iter().zip(expected.blocks()).all(|((_, a), (_, b))| a.len() == b.len())
            && [&self.l1_fwd, &self.l1_bwd].iter().all(|c| c.input.cols == d.embed && c.hidden() == d.hidden1)
            && [&self.l2_fwd, &self.l2_bwd].iter().all(|c| c.input.cols == 2 * d.hidden1 && c.hidden() == d.hidden2)
            && self.dense.rows == NUM_CLASSES
            && self.dense.cols == 2 * d.hidden2;
        if !ok {
            return Err(Error::Model("BiLSTM parameter shapes are inconsistent".into()));
        }
        if !self.is_finite() {
            return Err(Error::Model("BiLSTM parameters are not finite".into()));
        }
        Ok(())
    }
}

/// Two-layer bidirectional LSTM over token ids with a softmax readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmModel {
    pub params: BiLstmParams,
    pub vocab: Vocab,
    pub dropout: f64,
    pub max_len: usize,
}

/// Everything one sequence's forward pass leaves behind for backprop.
#[derive(Debug, Clone)]
struct ItemTrace {
    len: usize,
    embedded: Vec<Vec<f64>>,
    l1: [CellTrace; 2],
    /// Layer-2 inputs after dropout.
    mid: Vec<Vec<f64>>,
    /// Inverted-dropout factors, empty outside training.
    mask: Vec<Vec<f64>>,
    l2: [CellTrace; 2],
    readout: Vec<f64>,
    probs: Vec<f64>,
}

/// Activations from [`BiLstmModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    items: Vec<ItemTrace>,
}

impl ForwardCache {
    /// The classifier inputs: last forward state then first-step backward
    /// state of layer 2, per batch item.
    pub fn classifier_inputs(&self) -> Vec<&[f64]> {
        self.items.iter().map(|it| it.readout.as_slice()).collect()
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn non_finite(item: usize, step: usize, what: &str) -> Error {
    Error::NonFinite { stage: format!("BiLSTM forward: {what}, batch item {item}, step {step}") }
}

impl BiLstmModel {
    pub fn new(params: BiLstmParams, vocab: Vocab, dropout: f64, max_len: usize) -> Result<Self> {
        params.check_shapes()?;
        if params.dims().vocab != vocab.len() {
            return Err(Error::Model(format!(
                "embedding has {} rows but the vocabulary has {} tokens",
                params.dims().vocab,
                vocab.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout) || max_len == 0 {
            return Err(Error::InvalidArgument("dropout must be in [0, 1) and max_len positive".into()));
        }
        Ok(BiLstmModel { params, vocab, dropout, max_len })
    }

    pub fn class_order(&self) -> &'static [SentimentLabel] {
        &SentimentLabel::ALL
    }

    pub fn dims(&self) -> BiLstmDims {
        self.params.dims()
    }

    fn dropout_mask(&self, seed: u64, item: usize, len: usize) -> Vec<Vec<f64>> {
        let keep = 1.0 - self.dropout;
        let mut rng = seed::rng(seed::derive(seed, item as u64));
        let width = 2 * self.params.l1_fwd.hidden();
        (0..len)
            .map(|_| (0..width).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect())
            .collect()
    }

    fn forward_item(&self, ids: &[u32], item: usize, dropout_seed: Option<u64>) -> Result<ItemTrace> {
        let p = &self.params;
        let len = ids.len();
        let embedded: Vec<Vec<f64>> = ids.iter().map(|&id| p.embedding.row(id as usize).to_vec()).collect();
        let l1f = p.l1_fwd.forward(&embedded, false).map_err(|t| non_finite(item, t, "layer 1 forward"))?;
        let l1b = p.l1_bwd.forward(&embedded, true).map_err(|t| non_finite(item, t, "layer 1 backward"))?;
        let mask = match dropout_seed {
            Some(s) if self.dropout > 0.0 => self.dropout_mask(s, item, len),
            _ => Vec::new(),
        };
        let mid: Vec<Vec<f64>> = (0..len)
            .map(|t| {
                let mut v = concat(&l1f.h[t], &l1b.h[t]);
                if let Some(m) = mask.get(t) {
                    v.iter_mut().zip(m).for_each(|(x, k)| *x *= k);
                }
                v
            })
            .collect();
        let l2f = p.l2_fwd.forward(&mid, false).map_err(|t| non_finite(item, t, "layer 2 forward"))?;
        let l2b = p.l2_bwd.forward(&mid, true).map_err(|t| non_finite(item, t, "layer 2 backward"))?;
        let readout = concat(&l2f.h[len - 1], &l2b.h[0]);
        let logits: Vec<f64> = (0..NUM_CLASSES).map(|c| p.dense_bias[c] + dot(p.dense.row(c), &readout)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        if probs.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(item, len - 1, "softmax"));
        }
        Ok(ItemTrace { len, embedded, l1: [l1f, l1b], mid, mask, l2: [l2f, l2b], readout, probs })
    }

    fn run(&self, batch: &SequenceBatch, dropout_seed: Option<u64>) -> Result<Vec<ItemTrace>> {
        batch.validate(self.vocab.len())?;
        batch
            .token_ids
            .iter()
            .zip(&batch.lengths)
            .enumerate()
            .map(|(b, (row, &len))| self.forward_item(&row[..len], b, dropout_seed))
            .collect()
    }

    /// Class probabilities in canonical label order, one row per batch
    /// item. With `train_mode` off dropout is disabled and `seed` unused.
    pub fn forward(&self, batch: &SequenceBatch, train_mode: bool, seed: u64) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
        let items = self.run(batch, train_mode.then_some(seed))?;
        let probs = items.iter().map(|it| it.probs.clone()).collect();
        Ok((probs, ForwardCache { items }))
    }

    /// Mean cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grads(&self, batch: &SequenceBatch, train_mode: bool, seed: u64) -> Result<(f64, BiLstmParams)> {
        let items = self.run(batch, train_mode.then_some(seed))?;
        let p = &self.params;
        let mut g = BiLstmParams::zeros(p.dims());
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let h2 = p.l2_fwd.hidden();
        let h1 = p.l1_fwd.hidden();
        for ((it, label), ids) in items.iter().zip(&batch.labels).zip(&batch.token_ids) {
            let y = label.index();
            loss -= it.probs[y].ln() * scale;
            let dlogits: Vec<f64> =
                (0..NUM_CLASSES).map(|c| (it.probs[c] - if c == y { 1.0 } else { 0.0 }) * scale).collect();
            let mut dreadout = vec![0.0; 2 * h2];
            for (c, &d) in dlogits.iter().enumerate() {
                g.dense_bias[c] += d;
                axpy(d, &it.readout, g.dense.row_mut(c));
                axpy(d, p.dense.row(c), &mut dreadout);
            }

            let n = it.len;
            let mut dh = vec![vec![0.0; h2]; n];
            dh[n - 1].copy_from_slice(&dreadout[..h2]);
            let mut dmid = p.l2_fwd.backward(&it.l2[0], &it.mid, &dh, false, &mut g.l2_fwd);
            dh[n - 1].iter_mut().for_each(|v| *v = 0.0);
            dh[0].copy_from_slice(&dreadout[h2..]);
            let dmid_b = p.l2_bwd.backward(&it.l2[1], &it.mid, &dh, true, &mut g.l2_bwd);
            for (a, b) in dmid.iter_mut().zip(&dmid_b) {
                axpy(1.0, b, a);
            }
            for (t, m) in it.mask.iter().enumerate() {
                dmid[t].iter_mut().zip(m).for_each(|(x, k)| *x *= k);
            }

            let (dh_f, dh_b): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
                dmid.iter().map(|v| (v[..h1].to_vec(), v[h1..].to_vec())).unzip();
            let dx_f = p.l1_fwd.backward(&it.l1[0], &it.embedded, &dh_f, false, &mut g.l1_fwd);
            let dx_b = p.l1_bwd.backward(&it.l1[1], &it.embedded, &dh_b, true, &mut g.l1_bwd);
            for t in 0..n {
                let row = g.embedding.row_mut(ids[t] as usize);
                axpy(1.0, &dx_f[t], row);
                axpy(1.0, &dx_b[t], row);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite { stage: "BiLSTM loss".into() });
        }
        Ok((loss, g))
    }

    /// Predicts one normalized text, dropout off.
    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        let ids = self.vocab.encode(&tokenize(text), self.max_len);
        let it = self.forward_item(&ids, 0, None)?;
        Ok(Prediction { label: SentimentLabel::ALL[argmax(&it.probs)], scores: it.probs })
    }

    pub fn predict_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Prediction>> {
        texts.iter().map(|t| self.predict_text(t.as_ref())).collect()
    }

    /// Writes a JSON checkpoint: dimensions, vocabulary, dropout, max_len,
    /// parameter arrays and an optional echo of the training config.
    pub fn save(&self, path: impl AsRef<Path>, config: Option<&super::NeuralTrainConfig>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            dims: self.dims(),
            config: config.cloned(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&ckpt).expect("serializable");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Model(format!("unknown checkpoint format {:?}", ckpt.format)));
        }
        let m = ckpt.model;
        let model = BiLstmModel::new(m.params, m.vocab, m.dropout, m.max_len)?;
        if model.dims() != ckpt.dims {
            return Err(Error::Model("checkpoint dims do not match its parameters".into()));
        }
        Ok(model)
    }
}

const CHECKPOINT_FORMAT: &str = "kurdsent-bilstm-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    dims: BiLstmDims,
    config: Option<super::NeuralTrainConfig>,
    model: BiLstmModel,
}
