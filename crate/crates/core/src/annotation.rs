//! Multi-annotator judgments: aggregation into final labels and nominal
//! Krippendorff's alpha over a coincidence matrix.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, SentimentLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subjectivity {
    Subjective,
    Objective,
}

/// The five sentiment values an annotator may pick for a subjective text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FineSentiment {
    Positive,
    Negative,
    Mixed,
    Neutral,
    #[serde(rename = "none")]
    NoneLabel,
}

impl FineSentiment {
    pub fn as_str(self) -> &'static str {
        match self {
            FineSentiment::Positive => "positive",
            FineSentiment::Negative => "negative",
            FineSentiment::Mixed => "mixed",
            FineSentiment::Neutral => "neutral",
            FineSentiment::NoneLabel => "none",
        }
    }

    pub fn to_classification(self) -> Option<SentimentLabel> {
        match self {
            FineSentiment::Positive => Some(SentimentLabel::Positive),
            FineSentiment::Negative => Some(SentimentLabel::Negative),
            FineSentiment::Neutral => Some(SentimentLabel::Neutral),
            FineSentiment::Mixed | FineSentiment::NoneLabel => None,
        }
    }
}

impl FromStr for FineSentiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(FineSentiment::Positive),
            "negative" => Ok(FineSentiment::Negative),
            "mixed" => Ok(FineSentiment::Mixed),
            "neutral" => Ok(FineSentiment::Neutral),
            "none" => Ok(FineSentiment::NoneLabel),
            other => Err(format!("unknown sentiment {other:?}")),
        }
    }
}

/// An annotator's judgment: objective, or subjective with a sentiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnnotationLabel {
    subjectivity: Subjectivity,
    sentiment: Option<FineSentiment>,
}

impl AnnotationLabel {
    pub const OBJECTIVE: AnnotationLabel = AnnotationLabel {
        subjectivity: Subjectivity::Objective,
        sentiment: None,
    };

    pub fn subjective(sentiment: FineSentiment) -> Self {
        AnnotationLabel {
            subjectivity: Subjectivity::Subjective,
            sentiment: Some(sentiment),
        }
    }

    pub fn new(subjectivity: Subjectivity, sentiment: Option<FineSentiment>) -> Result<Self, String> {
        match (subjectivity, sentiment) {
            (Subjectivity::Objective, None) => Ok(Self::OBJECTIVE),
            (Subjectivity::Subjective, Some(s)) => Ok(Self::subjective(s)),
            (Subjectivity::Objective, Some(_)) => {
                Err("an objective label cannot carry a sentiment".into())
            }
            (Subjectivity::Subjective, None) => Err("a subjective label needs a sentiment".into()),
        }
    }

    pub fn subjectivity(&self) -> Subjectivity {
        self.subjectivity
    }

    pub fn sentiment(&self) -> Option<FineSentiment> {
        self.sentiment
    }

    /// The classification label, if this judgment maps to one of the three classes.
    pub fn classification(&self) -> Option<SentimentLabel> {
        self.sentiment.and_then(FineSentiment::to_classification)
    }
}

impl fmt::Display for AnnotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sentiment {
            None => f.write_str("objective"),
            Some(s) => f.write_str(s.as_str()),
        }
    }
}

/// Parses the short form used by override files: `"objective"` or one of
/// the five sentiment names (implying subjective).
impl FromStr for AnnotationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "objective" {
            Ok(Self::OBJECTIVE)
        } else {
            s.parse().map(Self::subjective)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub unit_id: String,
    pub annotator_id: String,
    pub label: AnnotationLabel,
}

impl AnnotationRecord {
    pub fn new(unit_id: impl Into<String>, annotator_id: impl Into<String>, label: AnnotationLabel) -> Self {
        AnnotationRecord {
            unit_id: unit_id.into(),
            annotator_id: annotator_id.into(),
            label,
        }
    }
}

#[derive(Deserialize)]
struct RecordLine {
    unit_id: String,
    annotator_id: String,
    subjectivity: Subjectivity,
    #[serde(default)]
    sentiment: Option<FineSentiment>,
}

#[derive(Deserialize)]
struct OverrideLine {
    unit_id: String,
    #[serde(rename = "final")]
    final_label: String,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Loads an annotation campaign. Each `(unit_id, annotator_id)` pair may
/// appear only once.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let raw: RecordLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let label = AnnotationLabel::new(raw.subjectivity, raw.sentiment)
            .map_err(|m| Error::parse(path, lineno, m))?;
        if !seen.insert((raw.unit_id.clone(), raw.annotator_id.clone())) {
            return Err(Error::parse(
                path,
                lineno,
                format!("annotator {:?} labels unit {:?} twice", raw.annotator_id, raw.unit_id),
            ));
        }
        records.push(AnnotationRecord::new(raw.unit_id, raw.annotator_id, label));
    }
    Ok(records)
}

/// Loads a manual rectification file mapping unit ids to final labels.
pub fn load_overrides(path: impl AsRef<Path>) -> Result<BTreeMap<String, AnnotationLabel>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (lineno, line) in read_lines(path)? {
        let raw: OverrideLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let label = raw
            .final_label
            .parse()
            .map_err(|m: String| Error::parse(path, lineno, m))?;
        out.insert(raw.unit_id, label);
    }
    Ok(out)
}

pub fn group_by_unit(records: &[AnnotationRecord]) -> BTreeMap<String, Vec<AnnotationRecord>> {
    let mut map: BTreeMap<String, Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.unit_id.clone()).or_default().push(r.clone());
    }
    map
}

/// Outcome of a nominal alpha computation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementResult<V> {
    /// `None` when the expected disagreement is zero (a single value was
    /// ever used), in which case alpha is undefined.
    pub alpha: Option<f64>,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    /// Distinct values, in ascending order; indexes `coincidences`.
    pub values: Vec<V>,
    pub coincidences: Vec<Vec<f64>>,
    pub n_total: f64,
    pub pairable_units: usize,
}

/// Nominal Krippendorff's alpha for the projection `value_of`. Judgments
/// projecting to `None` count as missing. Units with fewer than two
/// remaining values are not pairable and are ignored.
pub fn krippendorff_alpha<V, F>(records: &[AnnotationRecord], value_of: F) -> Result<AgreementResult<V>>
where
    V: Ord + Clone,
    F: Fn(&AnnotationLabel) -> Option<V>,
{
    let mut units: BTreeMap<&str, Vec<V>> = BTreeMap::new();
    for r in records {
        if let Some(v) = value_of(&r.label) {
            units.entry(r.unit_id.as_str()).or_default().push(v);
        }
    }
    let pairable: Vec<&Vec<V>> = units.values().filter(|vs| vs.len() >= 2).collect();
    if pairable.is_empty() {
        return Err(Error::NoPairableUnits);
    }
    let values: Vec<V> = pairable
        .iter()
        .flat_map(|vs| vs.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = values.len();
    let index_of = |v: &V| values.binary_search(v).expect("value collected above");

    let mut coincidences = vec![vec![0.0; k]; k];
    for vs in &pairable {
        let m = vs.len() as f64;
        let mut counts = vec![0usize; k];
        for v in vs.iter() {
            counts[index_of(v)] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for d in 0..k {
                let pairs = if c == d {
                    counts[c] * (counts[c] - 1)
                } else {
                    counts[c] * counts[d]
                };
                coincidences[c][d] += pairs as f64 / (m - 1.0);
            }
        }
    }

    let marginals: Vec<f64> = coincidences.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut disagreeing = 0.0;
    let mut chance = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                disagreeing += coincidences[c][d];
                chance += marginals[c] * marginals[d];
            }
        }
    }
    let observed = disagreeing / n;
    let expected = chance / (n * (n - 1.0));
    let alpha = (chance > 0.0).then(|| 1.0 - (n - 1.0) * disagreeing / chance);
    Ok(AgreementResult {
        alpha,
        observed_disagreement: observed,
        expected_disagreement: expected,
        values,
        coincidences,
        n_total: n,
        pairable_units: pairable.len(),
    })
}

/// The label projections reported by the `alpha` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// Objective plus the five sentiments as six nominal values.
    Full,
    /// The five sentiments; objective judgments are missing.
    FiveWay,
    /// Positive/negative/neutral; everything else is missing.
    ThreeWay,
    /// Subjective vs objective only.
    Subjectivity,
}

impl Projection {
    pub const ALL: [Projection; 4] = [
        Projection::Full,
        Projection::FiveWay,
        Projection::ThreeWay,
        Projection::Subjectivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Projection::Full => "full",
            Projection::FiveWay => "five-way",
            Projection::ThreeWay => "three-way",
            Projection::Subjectivity => "subjectivity",
        }
    }

    pub fn value(self, label: &AnnotationLabel) -> Option<String> {
        match self {
            Projection::Full => Some(label.to_string()),
            Projection::FiveWay => label.sentiment().map(|s| s.as_str().to_string()),
            Projection::ThreeWay => label.classification().map(|s| s.as_str().to_string()),
            Projection::Subjectivity => Some(
                match label.subjectivity() {
                    Subjectivity::Subjective => "subjective",
                    Subjectivity::Objective => "objective",
                }
                .to_string(),
            ),
        }
    }
}

/// How to resolve two subjective annotations with different sentiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// Any disagreement becomes Mixed.
    #[default]
    Mixed,
    /// A strict plurality wins; ties become Mixed.
    Plurality,
}

/// Combines each unit's judgments into one final label.
///
/// Unanimous units pass through. A subjective/objective conflict yields
/// Subjective+Mixed; a conflict among subjective sentiments is resolved by
/// `policy`.
pub fn aggregate(
    per_unit: &BTreeMap<String, Vec<AnnotationRecord>>,
    policy: TiePolicy,
) -> BTreeMap<String, AnnotationLabel> {
    per_unit
        .iter()
        .filter(|(_, records)| !records.is_empty())
        .map(|(unit, records)| (unit.clone(), aggregate_unit(records, policy)))
        .collect()
}

fn aggregate_unit(records: &[AnnotationRecord], policy: TiePolicy) -> AnnotationLabel {
    let first = records[0].label;
    if records.iter().all(|r| r.label == first) {
        return first;
    }
    let mixed = AnnotationLabel::subjective(FineSentiment::Mixed);
    if records.iter().any(|r| r.label.subjectivity() != first.subjectivity()) {
        return mixed;
    }
    // All subjective, sentiments differ.
    match policy {
        TiePolicy::Mixed => mixed,
        TiePolicy::Plurality => {
            let mut counts: BTreeMap<FineSentiment, usize> = BTreeMap::new();
            for s in records.iter().filter_map(|r| r.label.sentiment()) {
                *counts.entry(s).or_default() += 1;
            }
            let best = counts.values().copied().max().unwrap_or(0);
            let winners: Vec<_> = counts.iter().filter(|(_, &c)| c == best).collect();
            match winners.as_slice() {
                [(s, _)] => AnnotationLabel::subjective(**s),
                _ => mixed,
            }
        }
    }
}

/// Replaces aggregated labels with manually rectified ones.
pub fn apply_overrides(
    aggregated: &mut BTreeMap<String, AnnotationLabel>,
    overrides: &BTreeMap<String, AnnotationLabel>,
) {
    for (unit, label) in overrides {
        aggregated.insert(unit.clone(), *label);
    }
}

/// Builds the three-class dataset: documents whose final label is positive,
/// negative or neutral, labeled accordingly. Returns the number of dropped
/// documents alongside.
pub fn to_classification_dataset(
    aggregated: &BTreeMap<String, AnnotationLabel>,
    documents: &[Document],
) -> Result<(Dataset, usize)> {
    let mut kept = Vec::new();
    for doc in documents {
        let label = aggregated
            .get(&doc.id)
            .ok_or_else(|| Error::MissingAggregation(doc.id.clone()))?;
        if let Some(class) = label.classification() {
            let mut d = doc.clone();
            d.label = Some(class);
            kept.push(d);
        }
    }
    let dropped = documents.len() - kept.len();
    if kept.is_empty() && !documents.is_empty() {
        log::warn!("no document has a positive, negative or neutral final label");
    }
    Ok((Dataset::new(kept)?, dropped))
}

/// Per-annotator label tallies, handy for reports.
pub fn label_distribution(records: &[AnnotationRecord]) -> BTreeMap<String, HashMap<String, usize>> {
    let mut out: BTreeMap<String, HashMap<String, usize>> = BTreeMap::new();
    for r in records {
        *out.entry(r.annotator_id.clone())
            .or_default()
            .entry(r.label.to_string())
            .or_default() += 1;
    }
    out
}
