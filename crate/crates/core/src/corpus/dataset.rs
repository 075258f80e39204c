use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::text::{has_emoji, normalize};
use crate::error::{Error, Result};
use crate::seed;

/// The three sentiment classes used for classification, in canonical order.
/// The order is used for every deterministic tie-break in the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(SentimentLabel::Positive),
            "negative" | "neg" => Ok(SentimentLabel::Negative),
            "neutral" | "neu" => Ok(SentimentLabel::Neutral),
            other => Err(format!("unknown sentiment label {other:?}")),
        }
    }
}

/// Where a document's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Human annotated.
    #[default]
    Gold,
    /// Labeled automatically through translation and a teacher model.
    Silver,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Gold => "gold",
            Source::Silver => "silver",
        }
    }
}

/// One tweet-like text unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub normalized_text: String,
    pub label: Option<SentimentLabel>,
    pub source: Source,
    pub has_emoji: bool,
    /// Raw annotation payload carried through from the input file.
    pub annotations: Option<Value>,
    /// Any other keys found on the input line.
    pub meta: BTreeMap<String, Value>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        raw_text: impl Into<String>,
        label: Option<SentimentLabel>,
        source: Source,
    ) -> Self {
        let raw_text = raw_text.into();
        Document {
            id: id.into(),
            normalized_text: normalize(&raw_text),
            has_emoji: has_emoji(&raw_text),
            raw_text,
            label,
            source,
            annotations: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: Value) -> Self {
        self.meta.insert(key.into(), value);
        self
    }

    /// Replaces the text, recomputing the derived fields.
    pub fn with_text(mut self, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        self.normalized_text = normalize(&raw_text);
        self.has_emoji = has_emoji(&raw_text);
        self.raw_text = raw_text;
        self
    }

    /// Teacher confidence recorded on silver documents, if any.
    pub fn confidence(&self) -> Option<f64> {
        self.meta.get(TEACHER_CONFIDENCE_KEY).and_then(Value::as_f64)
    }

    fn to_json(&self) -> Value {
        let mut obj = Map::new();
        // Extra keys go first so the reserved keys always win on output.
        for (k, v) in &self.meta {
            obj.insert(k.clone(), v.clone());
        }
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("text".into(), Value::String(self.raw_text.clone()));
        if let Some(label) = self.label {
            obj.insert("label".into(), Value::String(label.as_str().into()));
        }
        obj.insert("source".into(), Value::String(self.source.as_str().into()));
        if let Some(a) = &self.annotations {
            obj.insert("annotations".into(), a.clone());
        }
        Value::Object(obj)
    }

    fn from_json(value: Value) -> std::result::Result<Self, String> {
        let Value::Object(mut obj) = value else {
            return Err("expected a JSON object".into());
        };
        let id = match obj.remove("id") {
            Some(Value::String(s)) => s,
            Some(_) => return Err("\"id\" must be a string".into()),
            None => return Err("missing \"id\"".into()),
        };
        let text = match obj.remove("text") {
            Some(Value::String(s)) => s,
            Some(_) => return Err("\"text\" must be a string".into()),
            None => return Err("missing \"text\"".into()),
        };
        let label = match obj.remove("label") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.parse::<SentimentLabel>()?),
            Some(_) => return Err("\"label\" must be a string".into()),
        };
        let source = match obj.remove("source") {
            None => Source::Gold,
            Some(Value::String(s)) if s == "gold" => Source::Gold,
            Some(Value::String(s)) if s == "silver" => Source::Silver,
            Some(other) => return Err(format!("invalid \"source\": {other}")),
        };
        let annotations = obj.remove("annotations");
        let mut doc = Document::new(id, text, label, source);
        doc.annotations = annotations;
        doc.meta = obj.into_iter().collect();
        Ok(doc)
    }
}

pub const TEACHER_CONFIDENCE_KEY: &str = "teacher_confidence";
pub const TRANSLATION_KEY: &str = "translation";

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    documents: Vec<Document>,
}

impl Dataset {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Dataset { documents })
    }

    pub fn empty() -> Self {
        Dataset::default()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    /// Number of labeled documents per class, indexed by [`SentimentLabel::index`].
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for label in self.documents.iter().filter_map(|d| d.label) {
            counts[label.index()] += 1;
        }
        counts
    }

    pub fn of_class(&self, label: SentimentLabel) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(move |d| d.label == Some(label))
    }

    pub fn labels(&self) -> Result<Vec<SentimentLabel>> {
        self.documents
            .iter()
            .map(|d| d.label.ok_or_else(|| Error::Unlabeled { id: d.id.clone() }))
            .collect()
    }

    /// Concatenates two datasets, rejecting id collisions.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut docs = self.documents.clone();
        docs.extend(other.documents.iter().cloned());
        Dataset::new(docs)
    }

    /// Applies `f` to every document's raw text, recomputing derived fields.
    pub fn map_text(&self, f: impl Fn(&str) -> String) -> Dataset {
        let documents = self
            .documents
            .iter()
            .map(|d| {
                let text = f(&d.raw_text);
                d.clone().with_text(text)
            })
            .collect();
        Dataset { documents }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

/// Reads a dataset from a JSONL file. Blank lines are skipped; unknown keys
/// are kept in [`Document::meta`].
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let doc = Document::from_json(value).map_err(|m| Error::parse(path, lineno, m))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate id {:?}", doc.id)));
        }
        documents.push(doc);
    }
    Ok(Dataset { documents })
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in dataset {
        let line = serde_json::to_string(&doc.to_json()).expect("JSON values always serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Stratified split: within each class the documents are shuffled with a
/// seeded Fisher-Yates pass and the first `floor(ratio * n_c)` go to train.
pub fn split_dataset(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    ds.labels()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in SentimentLabel::ALL {
        let mut members: Vec<&Document> = ds.of_class(label).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                count: members.len(),
            });
        }
        let mut rng = seed::rng(seed::derive(seed, label.index() as u64));
        members.shuffle(&mut rng);
        let n_train = train_count(ratio, members.len());
        train.extend(members[..n_train].iter().map(|d| (*d).clone()));
        test.extend(members[n_train..].iter().map(|d| (*d).clone()));
    }
    Ok((Dataset { documents: train }, Dataset { documents: test }))
}

/// `floor(ratio * n)`, tolerant of products like 0.29 * 100 = 28.999999999999996.
pub fn train_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}
