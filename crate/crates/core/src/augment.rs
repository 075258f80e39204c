//! Silver-standard data through translate-and-label clients, class
//! balancing, and zero-shot evaluation of the teacher.
//!
//! Translators and teachers are traits so the pipeline runs offline with
//! [`IdentityTranslator`] and [`LexiconTeacher`], or against remote services
//! with [`HttpTranslator`] and [`HttpTeacher`].

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::corpus::{has_emoji, Dataset, Document, SentimentLabel, Source, TEACHER_CONFIDENCE_KEY, TRANSLATION_KEY};
use crate::error::{Error, Result, Shortfall};
use crate::eval::{evaluate, EvaluationReport, Setting};
use crate::features::tokenize;
use crate::seed;

pub const SOURCE_LANG: &str = "ckb";
pub const TARGET_LANG: &str = "en";

pub trait TranslatorClient: Send + Sync {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> std::result::Result<String, String>;

    fn supports(&self, _source_lang: &str, _target_lang: &str) -> bool {
        true
    }

    /// Where requests go, for error messages.
    fn endpoint(&self) -> String;
}

pub trait TeacherClient: Send + Sync {
    /// Returns a label and a confidence in `[0, 1]`.
    fn classify(&self, text: &str) -> std::result::Result<(SentimentLabel, f64), String>;

    fn endpoint(&self) -> String;
}

/// Returns its input unchanged and counts calls.
#[derive(Debug, Default)]
pub struct IdentityTranslator {
    calls: AtomicUsize,
}

impl IdentityTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl TranslatorClient for IdentityTranslator {
    fn translate(&self, text: &str, _: &str, _: &str) -> std::result::Result<String, String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(text.to_string())
    }

    fn endpoint(&self) -> String {
        "identity".into()
    }
}

/// Translator backed by a closure.
pub struct FnTranslator<F>(pub F);

impl<F> TranslatorClient for FnTranslator<F>
where
    F: Fn(&str) -> std::result::Result<String, String> + Send + Sync,
{
    fn translate(&self, text: &str, _: &str, _: &str) -> std::result::Result<String, String> {
        (self.0)(text)
    }

    fn endpoint(&self) -> String {
        "closure".into()
    }
}

/// Teacher backed by a closure.
pub struct FnTeacher<F>(pub F);

impl<F> TeacherClient for FnTeacher<F>
where
    F: Fn(&str) -> std::result::Result<(SentimentLabel, f64), String> + Send + Sync,
{
    fn classify(&self, text: &str) -> std::result::Result<(SentimentLabel, f64), String> {
        (self.0)(text)
    }

    fn endpoint(&self) -> String {
        "closure".into()
    }
}

/// Sums token polarities from a lexicon. The label is positive above
/// `neutral_band`, negative below `-neutral_band`, neutral otherwise;
/// confidence is `min(1, |score| / 5)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexiconTeacher {
    pub lexicon: HashMap<String, i32>,
    pub emoji: HashMap<String, i32>,
    pub neutral_band: i32,
}

fn check_polarity(token: &str, p: i32) -> Result<()> {
    if matches!(p, -2 | -1 | 1 | 2) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("polarity of {token:?} must be one of -2, -1, 1, 2, got {p}")))
    }
}

impl LexiconTeacher {
    pub fn new(lexicon: HashMap<String, i32>, emoji: HashMap<String, i32>, neutral_band: i32) -> Result<Self> {
        if neutral_band < 0 {
            return Err(Error::InvalidArgument("neutral_band must be >= 0".into()));
        }
        for (t, &p) in lexicon.iter().chain(&emoji) {
            check_polarity(t, p)?;
        }
        Ok(LexiconTeacher { lexicon, emoji, neutral_band })
    }

    /// Reads `token<TAB>polarity` lines. Emoji tokens go to the emoji map.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_tsv(path: impl AsRef<Path>, neutral_band: i32) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (mut lexicon, mut emoji) = (HashMap::new(), HashMap::new());
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, pol) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected token<TAB>polarity"))?;
            let pol: i32 = pol.trim().parse().map_err(|_| Error::parse(path, i + 1, "polarity is not an integer"))?;
            check_polarity(token, pol).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            let map = if has_emoji(token) { &mut emoji } else { &mut lexicon };
            map.insert(token.to_string(), pol);
        }
        LexiconTeacher::new(lexicon, emoji, neutral_band)
    }

    pub fn score(&self, text: &str) -> i32 {
        tokenize(text)
            .iter()
            .map(|t| self.lexicon.get(t).or_else(|| self.emoji.get(t)).copied().unwrap_or(0))
            .sum()
    }

    pub fn label_of(&self, text: &str) -> (SentimentLabel, f64) {
        let s = self.score(text);
        let label = if s > self.neutral_band {
            SentimentLabel::Positive
        } else if s < -self.neutral_band {
            SentimentLabel::Negative
        } else {
            SentimentLabel::Neutral
        };
        (label, (s.abs() as f64 / 5.0).min(1.0))
    }
}

impl TeacherClient for LexiconTeacher {
    fn classify(&self, text: &str) -> std::result::Result<(SentimentLabel, f64), String> {
        Ok(self.label_of(text))
    }

    fn endpoint(&self) -> String {
        "lexicon".into()
    }
}

fn unit_hash(seed: u64, text: &str) -> f64 {
    let h = seed::derive_named(seed, text);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Wraps a teacher and replaces its label with a different one for a
/// fraction `flip_rate` of texts. Which texts flip depends only on the
/// seed and the text.
pub struct NoisyTeacher<T> {
    pub inner: T,
    pub flip_rate: f64,
    pub seed: u64,
}

impl<T: TeacherClient> TeacherClient for NoisyTeacher<T> {
    fn classify(&self, text: &str) -> std::result::Result<(SentimentLabel, f64), String> {
        let (label, conf) = self.inner.classify(text)?;
        if unit_hash(self.seed, text) >= self.flip_rate {
            return Ok((label, conf));
        }
        let shift = 1 + (seed::derive_named(self.seed ^ 0x5eed, text) % 2) as usize;
        Ok((SentimentLabel::ALL[(label.index() + shift) % 3], conf))
    }

    fn endpoint(&self) -> String {
        self.inner.endpoint()
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    text: String,
}

/// Memoizes translations in memory and optionally in a JSONL file keyed by
/// the SHA-256 of language pair and text.
pub struct CachingTranslator<T> {
    inner: T,
    memory: Mutex<HashMap<String, String>>,
    file: Option<PathBuf>,
}

impl<T: TranslatorClient> CachingTranslator<T> {
    pub fn new(inner: T) -> Self {
        CachingTranslator { inner, memory: Mutex::new(HashMap::new()), file: None }
    }

    /// Loads existing entries from `path` and appends new ones to it.
    pub fn with_file(inner: T, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut memory = HashMap::new();
        if path.exists() {
            let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine =
                    serde_json::from_str(&line).map_err(|e| Error::parse(&path, i + 1, e.to_string()))?;
                memory.insert(entry.key, entry.text);
            }
        }
        Ok(CachingTranslator { inner, memory: Mutex::new(memory), file: Some(path) })
    }

    pub fn key(text: &str, source_lang: &str, target_lang: &str) -> String {
        let mut h = Sha256::new();
        for part in [source_lang, target_lang, text] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: TranslatorClient> TranslatorClient for CachingTranslator<T> {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> std::result::Result<String, String> {
        let key = Self::key(text, source_lang, target_lang);
        if let Some(hit) = self.memory.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let out = self.inner.translate(text, source_lang, target_lang)?;
        let mut memory = self.memory.lock().expect("cache lock");
        // Another thread may have filled the entry meanwhile; keep the first.
        if let Some(hit) = memory.get(&key) {
            return Ok(hit.clone());
        }
        if let Some(path) = &self.file {
            let line = serde_json::to_string(&CacheLine { key: key.clone(), text: out.clone() }).expect("serializable");
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"))
                .map_err(|e| format!("cache file {}: {e}", path.display()))?;
        }
        memory.insert(key, out.clone());
        Ok(out)
    }

    fn supports(&self, s: &str, t: &str) -> bool {
        self.inner.supports(s, t)
    }

    fn endpoint(&self) -> String {
        self.inner.endpoint()
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn env_timeout() -> Duration {
    std::env::var("CLIENT_TIMEOUT_SECS")
        .ok()
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|s| *s > 0.0)
        .map_or(Duration::from_secs(30), Duration::from_secs_f64)
}

/// POSTs `{"text", "source", "target"}` and reads `{"text"}`.
pub struct HttpTranslator {
    url: String,
    agent: ureq::Agent,
}

impl HttpTranslator {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpTranslator { url: url.into(), agent: agent(timeout) }
    }

    /// Uses `TRANSLATOR_URL` (and `CLIENT_TIMEOUT_SECS`, default 30) when set.
    pub fn from_env() -> Option<Self> {
        std::env::var("TRANSLATOR_URL").ok().filter(|u| !u.is_empty()).map(|u| Self::new(u, env_timeout()))
    }
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

#[derive(Deserialize)]
struct LabelReply {
    label: String,
    confidence: f64,
}

impl TranslatorClient for HttpTranslator {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> std::result::Result<String, String> {
        let body = serde_json::json!({"text": text, "source": source_lang, "target": target_lang});
        let reply: TextReply = self
            .agent
            .post(&self.url)
            .send_json(body)
            .map_err(|e| e.to_string())?
            .into_json()
            .map_err(|e| format!("bad reply: {e}"))?;
        Ok(reply.text)
    }

    fn endpoint(&self) -> String {
        self.url.clone()
    }
}

/// POSTs `{"text"}` and reads `{"label", "confidence"}`.
pub struct HttpTeacher {
    url: String,
    agent: ureq::Agent,
}

impl HttpTeacher {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpTeacher { url: url.into(), agent: agent(timeout) }
    }

    /// Uses `TEACHER_URL` (and `CLIENT_TIMEOUT_SECS`, default 30) when set.
    pub fn from_env() -> Option<Self> {
        std::env::var("TEACHER_URL").ok().filter(|u| !u.is_empty()).map(|u| Self::new(u, env_timeout()))
    }
}

impl TeacherClient for HttpTeacher {
    fn classify(&self, text: &str) -> std::result::Result<(SentimentLabel, f64), String> {
        let reply: LabelReply = self
            .agent
            .post(&self.url)
            .send_json(serde_json::json!({"text": text}))
            .map_err(|e| e.to_string())?
            .into_json()
            .map_err(|e| format!("bad reply: {e}"))?;
        let label = reply.label.parse().map_err(|_| format!("unknown label {:?}", reply.label))?;
        if !(0.0..=1.0).contains(&reply.confidence) {
            return Err(format!("confidence {} outside [0, 1]", reply.confidence));
        }
        Ok((label, reply.confidence))
    }

    fn endpoint(&self) -> String {
        self.url.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub per_class_target: usize,
    pub emoji_min_per_class: usize,
    pub seed: u64,
}

/// Translation and teacher verdict for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherVerdict {
    pub translation: String,
    pub label: SentimentLabel,
    pub confidence: f64,
}

/// Translates and labels every document, in parallel, keeping input order.
/// The first failure in document order is reported.
pub fn label_documents(
    docs: &[Document],
    translator: &dyn TranslatorClient,
    teacher: &dyn TeacherClient,
) -> Result<Vec<TeacherVerdict>> {
    if !translator.supports(SOURCE_LANG, TARGET_LANG) {
        return Err(Error::Client {
            id: String::new(),
            endpoint: translator.endpoint(),
            message: format!("cannot translate {SOURCE_LANG} to {TARGET_LANG}"),
        });
    }
    let results: Vec<Result<TeacherVerdict>> = docs
        .par_iter()
        .map(|d| {
            let translation = translator.translate(&d.normalized_text, SOURCE_LANG, TARGET_LANG).map_err(|message| {
                Error::Client { id: d.id.clone(), endpoint: translator.endpoint(), message }
            })?;
            let (label, confidence) = teacher
                .classify(&translation)
                .map_err(|message| Error::Client { id: d.id.clone(), endpoint: teacher.endpoint(), message })?;
            if !confidence.is_finite() {
                return Err(Error::Client {
                    id: d.id.clone(),
                    endpoint: teacher.endpoint(),
                    message: "non-finite confidence".into(),
                });
            }
            Ok(TeacherVerdict { translation, label, confidence })
        })
        .collect();
    results.into_iter().collect()
}

/// Selection priority: higher confidence first, then a seeded hash of the
/// id, then the id. Independent of input order.
fn priority_sort(docs: &mut [&Document], seed: u64) {
    docs.sort_by(|a, b| {
        let ca = a.confidence().unwrap_or(f64::NEG_INFINITY);
        let cb = b.confidence().unwrap_or(f64::NEG_INFINITY);
        cb.total_cmp(&ca)
            .then_with(|| seed::derive_named(seed, &a.id).cmp(&seed::derive_named(seed, &b.id)))
            .then_with(|| a.id.cmp(&b.id))
    });
}

/// Translates and labels the pool, then picks exactly `per_class_target`
/// documents per class, at least `emoji_min_per_class` of them with emoji
/// in the source text. Output documents are silver, keep their original
/// text, and record the teacher confidence and translation in `meta`.
pub fn generate_silver(
    pool: &Dataset,
    translator: &dyn TranslatorClient,
    teacher: &dyn TeacherClient,
    spec: &BalanceSpec,
) -> Result<Dataset> {
    if spec.emoji_min_per_class > spec.per_class_target {
        return Err(Error::InvalidArgument("emoji_min_per_class exceeds per_class_target".into()));
    }
    let verdicts = label_documents(pool.documents(), translator, teacher)?;
    let labeled: Vec<Document> = pool
        .iter()
        .zip(verdicts)
        .map(|(d, v)| {
            let mut doc = d.clone();
            doc.label = Some(v.label);
            doc.source = Source::Silver;
            doc.meta.insert(TEACHER_CONFIDENCE_KEY.into(), Value::from(v.confidence));
            doc.meta.insert(TRANSLATION_KEY.into(), Value::from(v.translation));
            doc
        })
        .collect();

    let mut shortfalls = Vec::new();
    let mut selected = Vec::new();
    for label in SentimentLabel::ALL {
        let mut class: Vec<&Document> = labeled.iter().filter(|d| d.label == Some(label)).collect();
        priority_sort(&mut class, seed::derive(spec.seed, label.index() as u64));
        let (with, without): (Vec<&Document>, Vec<&Document>) = class.iter().partition(|d| d.has_emoji);
        if class.len() < spec.per_class_target {
            shortfalls.push(Shortfall { label, what: "documents", needed: spec.per_class_target, available: class.len() });
        }
        if with.len() < spec.emoji_min_per_class {
            shortfalls.push(Shortfall {
                label,
                what: "emoji documents",
                needed: spec.emoji_min_per_class,
                available: with.len(),
            });
        }
        if !shortfalls.is_empty() {
            continue;
        }
        // Reserve the best emoji documents for the quota, then fill by
        // priority from everything else.
        let mut rest: Vec<&Document> = with[spec.emoji_min_per_class..].iter().chain(&without).copied().collect();
        priority_sort(&mut rest, seed::derive(spec.seed, label.index() as u64));
        let mut picked: Vec<&Document> = with[..spec.emoji_min_per_class].to_vec();
        picked.extend(rest.into_iter().take(spec.per_class_target - spec.emoji_min_per_class));
        selected.extend(picked.into_iter().cloned());
    }
    if !shortfalls.is_empty() {
        return Err(Error::Shortfall(shortfalls));
    }
    Dataset::new(selected)
}

/// What balancing did per class, indexed by [`SentimentLabel::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BalanceReport {
    pub gold: [usize; 3],
    pub silver_added: [usize; 3],
    /// Gold documents above the target, kept anyway.
    pub excess: [usize; 3],
}

fn balance(gold: &Dataset, silver: &Dataset, target: usize, seed: u64, strict_gold: bool) -> Result<(Dataset, BalanceReport)> {
    let gold_counts = gold.class_counts();
    gold.labels()?;
    silver.labels()?;
    let mut report = BalanceReport { gold: gold_counts, ..Default::default() };
    let mut shortfalls = Vec::new();
    let mut additions = Vec::new();
    for label in SentimentLabel::ALL {
        let c = label.index();
        if gold_counts[c] > target {
            if strict_gold {
                return Err(Error::GoldExceedsTarget { label, gold: gold_counts[c], target });
            }
            report.excess[c] = gold_counts[c] - target;
            log::warn!("{label}: gold has {} documents, {} above the target of {target}", gold_counts[c], report.excess[c]);
            continue;
        }
        let need = target - gold_counts[c];
        let mut pool: Vec<&Document> = silver.of_class(label).collect();
        if pool.len() < need {
            shortfalls.push(Shortfall { label, what: "silver documents", needed: need, available: pool.len() });
            continue;
        }
        priority_sort(&mut pool, seed::derive(seed, c as u64));
        report.silver_added[c] = need;
        additions.extend(pool.into_iter().take(need).cloned());
    }
    if !shortfalls.is_empty() {
        return Err(Error::Shortfall(shortfalls));
    }
    let mut docs = gold.documents().to_vec();
    docs.extend(additions);
    Ok((Dataset::new(docs)?, report))
}

/// Keeps all gold and tops each class up to `target` with silver. A class
/// whose gold already exceeds the target keeps all its gold and reports the
/// excess.
pub fn upsample(gold: &Dataset, silver: &Dataset, target: usize, seed: u64) -> Result<(Dataset, BalanceReport)> {
    balance(gold, silver, target, seed, false)
}

/// Keeps all gold and trims silver so each class totals exactly `target`.
/// Gold above the target is an error.
pub fn merge(gold: &Dataset, silver: &Dataset, target: usize, seed: u64) -> Result<(Dataset, BalanceReport)> {
    balance(gold, silver, target, seed, true)
}

/// Translates and labels each test document and scores the teacher's
/// labels. No training happens.
pub fn zero_shot_eval(
    test: &Dataset,
    translator: &dyn TranslatorClient,
    teacher: &dyn TeacherClient,
    setting: Setting,
) -> Result<EvaluationReport> {
    let refs = test.labels()?;
    let verdicts = label_documents(test.documents(), translator, teacher)?;
    let preds: Vec<SentimentLabel> = verdicts.iter().map(|v| v.label).collect();
    evaluate(&refs, &preds, setting)
}
