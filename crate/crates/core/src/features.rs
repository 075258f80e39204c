//! Tokenization and TF-IDF vectorization.
//!
//! Weighting is raw term count times smoothed idf,
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, followed by L2 normalization.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::corpus::detect_emoji;
use crate::error::{Error, Result};

fn is_punct_or_symbol(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

fn push_trimmed(tokens: &mut Vec<String>, piece: &str) {
    let t = piece.trim_matches(is_punct_or_symbol);
    if !t.is_empty() {
        tokens.push(t.to_string());
    }
}

/// Splits normalized text on whitespace and trims leading and trailing
/// punctuation and symbols from each piece. Emoji sequences become
/// standalone tokens.
///
/// ```
/// use kurdsent::features::tokenize;
/// assert_eq!(tokenize("a, b."), ["a", "b"]);
/// assert_eq!(tokenize("یاد 😊"), ["یاد", "😊"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut cursor = 0;
        for hit in detect_emoji(word) {
            push_trimmed(&mut tokens, &word[cursor..hit.offset]);
            tokens.push(hit.sequence.clone());
            cursor = hit.end();
        }
        push_trimmed(&mut tokens, &word[cursor..]);
    }
    tokens
}

/// A sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
    dim: usize,
}

impl SparseVector {
    /// Builds a vector from unordered entries; duplicate indices are summed
    /// and explicit zeros dropped.
    pub fn from_entries(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            if i >= dim {
                return Err(Error::DimensionMismatch { expected: dim, got: i + 1 });
            }
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Ok(SparseVector { entries: merged, dim })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
            dim: values.len(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector { entries: Vec::new(), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, v) in &mut self.entries {
            *v *= factor;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// A fitted vocabulary with document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocab: HashMap<String, usize>,
    tokens: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    idf: Vec<f64>,
}

fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Fits the vocabulary on training documents only. Tokens are indexed in
/// order of first occurrence.
pub fn fit_tfidf<S: AsRef<str>>(train_docs: &[Vec<S>]) -> Result<TfidfModel> {
    if train_docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut vocab: HashMap<String, usize> = HashMap::new();
    let mut tokens = Vec::new();
    let mut df = Vec::new();
    let mut last_seen: Vec<usize> = Vec::new();
    for (doc_idx, doc) in train_docs.iter().enumerate() {
        for tok in doc {
            let tok = tok.as_ref();
            let idx = match vocab.get(tok) {
                Some(&i) => i,
                None => {
                    let i = tokens.len();
                    vocab.insert(tok.to_string(), i);
                    tokens.push(tok.to_string());
                    df.push(0);
                    last_seen.push(usize::MAX);
                    i
                }
            };
            if last_seen[idx] != doc_idx {
                last_seen[idx] = doc_idx;
                df[idx] += 1;
            }
        }
    }
    Ok(TfidfModel::from_parts(tokens, df, train_docs.len()))
}

impl TfidfModel {
    fn from_parts(tokens: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let vocab = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let idf = df.iter().map(|&d| smoothed_idf(n_docs, d)).collect();
        TfidfModel { vocab, tokens, df, n_docs, idf }
    }

    pub fn dim(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    /// Raw count times idf for known tokens, L2-normalized. Unknown tokens
    /// are ignored; a document with none known maps to the zero vector.
    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> SparseVector {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for tok in doc {
            if let Some(&i) = self.vocab.get(tok.as_ref()) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> =
            counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        entries.sort_by_key(|&(i, _)| i);
        let mut v = SparseVector { entries, dim: self.dim() };
        let norm = v.norm();
        if norm > 0.0 {
            v.scale(1.0 / norm);
        }
        v
    }

    pub fn to_json(&self) -> TfidfJson {
        TfidfJson {
            n_docs: self.n_docs,
            vocab: self
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| VocabEntry { token: t.clone(), index: i, df: self.df[i] })
                .collect(),
        }
    }

    pub fn from_json(json: TfidfJson) -> Result<Self> {
        let n = json.vocab.len();
        let mut tokens = vec![None; n];
        let mut df = vec![0; n];
        for e in json.vocab {
            if e.index >= n || tokens[e.index].is_some() {
                return Err(Error::Model(format!("vocabulary index {} is not dense", e.index)));
            }
            if e.df == 0 || e.df > json.n_docs {
                return Err(Error::Model(format!("df {} of {:?} out of range", e.df, e.token)));
            }
            tokens[e.index] = Some(e.token);
            df[e.index] = e.df;
        }
        let tokens: Vec<String> = tokens.into_iter().map(Option::unwrap).collect();
        let model = TfidfModel::from_parts(tokens, df, json.n_docs);
        if model.vocab.len() != n {
            return Err(Error::Model("duplicate token in vocabulary".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()).expect("serializable");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json: TfidfJson =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        TfidfModel::from_json(json)
    }
}

/// On-disk form: idf is recomputed on load, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfJson {
    pub n_docs: usize,
    pub vocab: Vec<VocabEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub index: usize,
    pub df: usize,
}
