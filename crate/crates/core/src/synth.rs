//! Synthetic Sorani-like corpus for offline experiments.
//!
//! Words are random syllable strings in Arabic script. A hidden polarity
//! lexicon decides which words carry sentiment; each document mixes neutral
//! filler with a few sentiment words (and sometimes emoji) drawn mostly
//! from its class. The teacher lexicon is a deliberately imperfect copy of
//! the hidden one: it misses some words and has some polarities wrong.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, save_jsonl, Dataset, Document, SentimentLabel, Source};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

const SYLLABLES: [&str; 32] = [
    "بە", "ڕۆ", "ڵا", "دە", "کێ", "گو", "چا", "پە", "ژی", "ڤا", "نە", "مێ", "سۆ", "تە", "زا", "شێ", "خۆ", "هە",
    "وا", "یە", "فڕ", "قە", "لێ", "ڕێ", "جو", "ئا", "عە", "غۆ", "دڵ", "کۆ", "بێ", "ما",
];

const POSITIVE_EMOJI: [&str; 4] = ["😊", "😍", "👍", "🌹"];
const NEGATIVE_EMOJI: [&str; 4] = ["😡", "😢", "💔", "👎"];
const NEUTRAL_EMOJI: [&str; 3] = ["📷", "🏠", "☕"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Gold documents per class in canonical order.
    pub gold_counts: [usize; 3],
    /// Unlabeled pool size, drawn with equal class probabilities.
    pub pool_size: usize,
    pub positive_words: usize,
    pub negative_words: usize,
    pub filler_words: usize,
    /// Share of each class's documents carrying emoji.
    pub emoji_rate: f64,
    /// Chance that a sentiment word in a document comes from the opposite
    /// polarity.
    pub word_noise: f64,
    /// Share of sentiment words the teacher lexicon knows.
    pub teacher_coverage: f64,
    /// Share of known words whose polarity sign the teacher has wrong.
    pub teacher_error: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 2024,
            gold_counts: [292, 639, 254],
            pool_size: 7200,
            positive_words: 80,
            negative_words: 80,
            filler_words: 600,
            emoji_rate: 0.35,
            word_noise: 0.15,
            teacher_coverage: 0.7,
            teacher_error: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub gold: Dataset,
    pub pool: Dataset,
    /// The generator's own lexicon, words and emoji with polarity.
    pub hidden_lexicon: Vec<(String, i32)>,
    /// What the offline teacher gets to see.
    pub teacher_lexicon: Vec<(String, i32)>,
}

struct Vocabulary {
    positive: Vec<String>,
    negative: Vec<String>,
    filler: Vec<String>,
}

fn make_words(rng: &mut Rng, n: usize, seen: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(2..=3);
        let w: String = (0..len).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        let w = normalize(&w);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn document(rng: &mut Rng, vocab: &Vocabulary, label: SentimentLabel, cfg: &SynthConfig) -> String {
    let mut words: Vec<&str> = (0..rng.gen_range(4..=9)).map(|_| vocab.filler.choose(rng).unwrap().as_str()).collect();
    let (own, other, emoji): (&[String], &[String], &[&str]) = match label {
        SentimentLabel::Positive => (&vocab.positive, &vocab.negative, &POSITIVE_EMOJI),
        SentimentLabel::Negative => (&vocab.negative, &vocab.positive, &NEGATIVE_EMOJI),
        SentimentLabel::Neutral => (&vocab.positive, &vocab.negative, &NEUTRAL_EMOJI),
    };
    let n_sentiment = match label {
        SentimentLabel::Neutral => usize::from(rng.gen_bool(0.3)),
        _ => rng.gen_range(1..=3),
    };
    for _ in 0..n_sentiment {
        let from_own = if label == SentimentLabel::Neutral { rng.gen_bool(0.5) } else { !rng.gen_bool(cfg.word_noise) };
        let w = if from_own { own.choose(rng) } else { other.choose(rng) };
        let at = rng.gen_range(0..=words.len());
        words.insert(at, w.unwrap());
    }
    let mut text = words.join(" ");
    if rng.gen_bool(cfg.emoji_rate) {
        for _ in 0..rng.gen_range(1..=2) {
            text.push(' ');
            text.push_str(emoji.choose(rng).unwrap());
        }
    }
    text
}

/// Builds the gold set, the unlabeled pool and both lexicons. Deterministic
/// in `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if !(0.0..=1.0).contains(&cfg.emoji_rate)
        || !(0.0..=1.0).contains(&cfg.word_noise)
        || !(0.0..=1.0).contains(&cfg.teacher_coverage)
        || !(0.0..=1.0).contains(&cfg.teacher_error)
    {
        return Err(Error::InvalidArgument("rates must lie in [0, 1]".into()));
    }
    if cfg.positive_words == 0 || cfg.negative_words == 0 || cfg.filler_words == 0 {
        return Err(Error::InvalidArgument("every word list needs at least one word".into()));
    }
    let mut rng = seed::rng(seed::derive_named(cfg.seed, "synth/vocabulary"));
    let mut seen = HashSet::new();
    let vocab = Vocabulary {
        positive: make_words(&mut rng, cfg.positive_words, &mut seen),
        negative: make_words(&mut rng, cfg.negative_words, &mut seen),
        filler: make_words(&mut rng, cfg.filler_words, &mut seen),
    };

    let mut hidden = Vec::new();
    for (words, sign) in [(&vocab.positive, 1), (&vocab.negative, -1)] {
        for w in words {
            hidden.push((w.clone(), sign * rng.gen_range(1..=2)));
        }
    }
    for (emoji, sign) in [(&POSITIVE_EMOJI, 1), (&NEGATIVE_EMOJI, -1)] {
        for e in emoji {
            hidden.push((e.to_string(), sign));
        }
    }
    let mut teacher = Vec::new();
    for (w, p) in &hidden {
        if rng.gen_bool(cfg.teacher_coverage) {
            teacher.push((w.clone(), if rng.gen_bool(cfg.teacher_error) { -p } else { *p }));
        }
    }

    let mut rng = seed::rng(seed::derive_named(cfg.seed, "synth/gold"));
    let mut gold = Vec::new();
    for (c, &n) in cfg.gold_counts.iter().enumerate() {
        let label = SentimentLabel::ALL[c];
        for _ in 0..n {
            gold.push((label, document(&mut rng, &vocab, label, cfg)));
        }
    }
    gold.shuffle(&mut rng);
    let gold = gold
        .into_iter()
        .enumerate()
        .map(|(i, (label, text))| Document::new(format!("g{:05}", i + 1), text, Some(label), Source::Gold))
        .collect();

    let mut rng = seed::rng(seed::derive_named(cfg.seed, "synth/pool"));
    let pool = (0..cfg.pool_size)
        .map(|i| {
            let label = SentimentLabel::ALL[rng.gen_range(0..3)];
            Document::new(format!("p{:05}", i + 1), document(&mut rng, &vocab, label, cfg), None, Source::Silver)
        })
        .collect();

    Ok(SynthCorpus { gold: Dataset::new(gold)?, pool: Dataset::new(pool)?, hidden_lexicon: hidden, teacher_lexicon: teacher })
}

pub fn lexicon_tsv(entries: &[(String, i32)]) -> String {
    let mut out = String::from("# token\tpolarity\n");
    for (w, p) in entries {
        let _ = writeln!(out, "{w}\t{p}");
    }
    out
}

/// Writes `gold.jsonl`, `pool.jsonl` and `lexicon.tsv` (the teacher's
/// lexicon) into `dir`.
pub fn write_bundle(corpus: &SynthCorpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_jsonl(&corpus.gold, dir.join("gold.jsonl"))?;
    save_jsonl(&corpus.pool, dir.join("pool.jsonl"))?;
    let lex = dir.join("lexicon.tsv");
    fs::write(&lex, lexicon_tsv(&corpus.teacher_lexicon)).map_err(|e| Error::io(&lex, e))
}
