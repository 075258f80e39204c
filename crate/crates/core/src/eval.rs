//! Confusion matrices, precision/recall/F1 and report rendering.
//!
//! Aggregates come in two flavours: macro (unweighted mean over classes)
//! and weighted (mean weighted by class support). The text table prints the
//! weighted ones; the CSV carries both.
//!
//! CSV columns are `model,test_set,system,emoji_mode,seed,class,precision,
//! recall,f1,support`. Each report contributes one row per class plus
//! `__macro__` and `__weighted__` rows, and an `__accuracy__` row that
//! repeats the accuracy in all three metric columns. Aggregate rows carry
//! the total count as support. Lines starting with `#` are comments.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};

/// Rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_order: Vec<SentimentLabel>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_counts(class_order: Vec<SentimentLabel>, counts: Vec<Vec<usize>>) -> Result<Self> {
        let k = class_order.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: counts.len() });
        }
        Ok(ConfusionMatrix { class_order, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> usize {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

/// Confusion matrix over all three sentiment classes.
pub fn confusion(refs: &[SentimentLabel], preds: &[SentimentLabel]) -> Result<ConfusionMatrix> {
    if refs.len() != preds.len() {
        return Err(Error::DimensionMismatch { expected: refs.len(), got: preds.len() });
    }
    if refs.is_empty() {
        return Err(Error::InvalidArgument("nothing to score".into()));
    }
    let mut counts = vec![vec![0; SentimentLabel::ALL.len()]; SentimentLabel::ALL.len()];
    for (r, p) in refs.iter().zip(preds) {
        counts[r.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { class_order: SentimentLabel::ALL.to_vec(), counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SentimentLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Which experiment cell a report belongs to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Hash, Serialize, Deserialize)]
pub struct Setting {
    pub model: String,
    pub test_set: String,
    pub system: String,
    pub emoji_mode: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub setting: Setting,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub accuracy: f64,
    pub total: usize,
    /// Absent on reports parsed back from CSV.
    pub confusion: Option<ConfusionMatrix>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class and aggregate scores. Empty denominators score 0 with a
/// warning.
pub fn metrics(cm: &ConfusionMatrix) -> Result<EvaluationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let k = cm.class_order.len();
    let mut per_class = Vec::with_capacity(k);
    for (c, &label) in cm.class_order.iter().enumerate() {
        let tp = cm.counts[c][c];
        let (predicted, support) = (cm.col_sum(c), cm.row_sum(c));
        if predicted == 0 || support == 0 {
            log::warn!("{label}: {predicted} predicted, {support} reference; undefined scores set to 0");
        }
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        per_class.push(ClassMetrics { label, precision, recall, f1: harmonic(precision, recall), support });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let wmean = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };
    let macro_avg = Averages { precision: mean(|m| m.precision), recall: mean(|m| m.recall), f1: mean(|m| m.f1) };
    let weighted = Averages { precision: wmean(|m| m.precision), recall: wmean(|m| m.recall), f1: wmean(|m| m.f1) };
    Ok(EvaluationReport {
        setting: Setting::default(),
        per_class,
        macro_avg,
        weighted,
        accuracy: ratio(cm.trace(), total),
        total,
        confusion: Some(cm.clone()),
    })
}

/// Scores predictions against references and tags the report.
pub fn evaluate(refs: &[SentimentLabel], preds: &[SentimentLabel], setting: Setting) -> Result<EvaluationReport> {
    let mut report = metrics(&confusion(refs, preds)?)?;
    report.setting = setting;
    Ok(report)
}

/// Aligned text table, one block per emoji mode, with weighted aggregates
/// rounded to two decimals.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    // Groups keep the order in which their modes first appear.
    let mut by_mode: Vec<(&str, Vec<&EvaluationReport>)> = Vec::new();
    for r in reports {
        let mode = r.setting.emoji_mode.as_str();
        match by_mode.iter_mut().find(|(m, _)| *m == mode) {
            Some((_, rows)) => rows.push(r),
            None => by_mode.push((mode, vec![r])),
        }
    }
    let header = ["Model", "Test set", "System", "Precision", "Recall", "F1", "Accuracy"];
    let mut out = String::new();
    for (i, (mode, rows)) in by_mode.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if !mode.is_empty() {
            let _ = writeln!(out, "Emoji mode: {mode}");
        }
        let cells: Vec<[String; 7]> = rows
            .iter()
            .map(|r| {
                [
                    r.setting.model.clone(),
                    r.setting.test_set.clone(),
                    r.setting.system.clone(),
                    format!("{:.2}", r.weighted.precision),
                    format!("{:.2}", r.weighted.recall),
                    format!("{:.2}", r.weighted.f1),
                    format!("{:.2}", r.accuracy),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..7)
            .map(|c| cells.iter().map(|row| row[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |row: &[&str]| {
            let padded: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c < 3 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let _ = writeln!(out, "{}", line(&header));
        let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
        for row in &cells {
            let refs: Vec<&str> = row.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{}", line(&refs));
        }
    }
    out
}

pub const CSV_COLUMNS: [&str; 10] =
    ["model", "test_set", "system", "emoji_mode", "seed", "class", "precision", "recall", "f1", "support"];

fn comment_block(header: &[(&str, String)]) -> String {
    header.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::parse("<csv>", e.position().map_or(0, |p| p.line() as usize), e.to_string())
}

/// Full-precision CSV preceded by `# key: value` comment lines.
pub fn render_csv(reports: &[EvaluationReport], header: &[(&str, String)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in reports {
        let s = &r.setting;
        let seed = s.seed.to_string();
        let mut row = |class: &str, p: f64, rc: f64, f: f64, support: usize| {
            let fields = [&s.model, &s.test_set, &s.system, &s.emoji_mode, &seed];
            let nums = [p.to_string(), rc.to_string(), f.to_string(), support.to_string()];
            w.write_record(fields.iter().map(|f| f.as_str()).chain([class]).chain(nums.iter().map(String::as_str)))
                .expect("in-memory write");
        };
        for m in &r.per_class {
            row(m.label.as_str(), m.precision, m.recall, m.f1, m.support);
        }
        row("__macro__", r.macro_avg.precision, r.macro_avg.recall, r.macro_avg.f1, r.total);
        row("__weighted__", r.weighted.precision, r.weighted.recall, r.weighted.f1, r.total);
        row("__accuracy__", r.accuracy, r.accuracy, r.accuracy, r.total);
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    comment_block(header) + &body
}

/// Parses [`render_csv`] output back into reports (without confusion
/// matrices), in order of first appearance.
pub fn parse_csv(text: &str) -> Result<Vec<EvaluationReport>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::parse("<csv>", 1, format!("unexpected columns {headers:?}")));
    }
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::parse("<csv>", line, format!("bad {what}"));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(CSV_COLUMNS[i]));
        let setting = Setting {
            model: rec[0].to_string(),
            test_set: rec[1].to_string(),
            system: rec[2].to_string(),
            emoji_mode: rec[3].to_string(),
            seed: rec[4].parse().map_err(|_| bad("seed"))?,
        };
        let (p, r, f) = (num(6)?, num(7)?, num(8)?);
        let support: usize = rec[9].parse().map_err(|_| bad("support"))?;
        if reports.last().is_none_or(|last| last.setting != setting) {
            reports.push(EvaluationReport {
                setting,
                per_class: Vec::new(),
                macro_avg: Averages::default(),
                weighted: Averages::default(),
                accuracy: 0.0,
                total: 0,
                confusion: None,
            });
        }
        let report = reports.last_mut().expect("just pushed");
        match &rec[5] {
            "__macro__" => report.macro_avg = Averages { precision: p, recall: r, f1: f },
            "__weighted__" => report.weighted = Averages { precision: p, recall: r, f1: f },
            "__accuracy__" => {
                report.accuracy = f;
                report.total = support;
            }
            class => {
                let label: SentimentLabel = class.parse().map_err(|_| bad("class"))?;
                report.per_class.push(ClassMetrics { label, precision: p, recall: r, f1: f, support });
            }
        }
    }
    Ok(reports)
}

/// One point of the dataset-size curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub model: String,
    pub emoji_mode: String,
    pub system: String,
    pub train_size: usize,
    pub dataset_size: usize,
    pub f1_weighted: f64,
    pub f1_macro: f64,
}

/// CSV of dataset size against F1, one row per model, emoji mode and
/// system.
pub fn render_size_curve(points: &[SizePoint], header: &[(&str, String)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "emoji_mode", "system", "train_size", "dataset_size", "f1_weighted", "f1_macro"])
        .expect("in-memory write");
    for p in points {
        w.write_record([
            p.model.clone(),
            p.emoji_mode.clone(),
            p.system.clone(),
            p.train_size.to_string(),
            p.dataset_size.to_string(),
            p.f1_weighted.to_string(),
            p.f1_macro.to_string(),
        ])
        .expect("in-memory write");
    }
    comment_block(header) + &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    const POS: SentimentLabel = SentimentLabel::Positive;
    const NEG: SentimentLabel = SentimentLabel::Negative;
    const NEU: SentimentLabel = SentimentLabel::Neutral;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[POS, NEG, NEU], &[POS, NEG, NEU]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let cm = confusion(&[POS, NEG, NEU], &[NEG, NEG, NEU]).unwrap();
        assert_eq!((cm.counts[0][1], cm.counts[1][1], cm.counts[2][2]), (1, 1, 1));
        assert_eq!(cm.total(), 3);
        assert!(confusion(&[POS], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn binary_hand_example() {
        let cm = ConfusionMatrix::from_counts(vec![POS, NEG], vec![vec![8, 2], vec![4, 6]]).unwrap();
        let r = metrics(&cm).unwrap();
        assert!(close(r.per_class[0].precision, 8.0 / 12.0));
        assert!(close(r.per_class[0].recall, 0.8));
        assert!((r.per_class[0].f1 - 0.7273).abs() < 1e-4);
        assert!(close(r.per_class[0].f1, 2.0 * (8.0 / 12.0) * 0.8 / (8.0 / 12.0 + 0.8)));
        assert!(close(r.accuracy, 0.7));
        assert!(close(r.weighted.recall, r.accuracy));
    }

    #[test]
    fn perfect_predictions_score_one() {
        let refs = [POS, NEG, NEU, NEG];
        let r = evaluate(&refs, &refs, Setting::default()).unwrap();
        assert!(r.per_class.iter().all(|m| m.f1 == 1.0));
        assert_eq!((r.macro_avg.f1, r.weighted.f1, r.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn weighted_recall_is_accuracy_on_random_matrices() {
        let mut rng = crate::seed::rng(1);
        for _ in 0..1000 {
            let counts: Vec<Vec<usize>> =
                (0..3).map(|_| (0..3).map(|_| rng.gen_range(0..20)).collect()).collect();
            let cm = ConfusionMatrix::from_counts(SentimentLabel::ALL.to_vec(), counts).unwrap();
            if cm.total() == 0 {
                continue;
            }
            let r = metrics(&cm).unwrap();
            assert!(close(r.weighted.recall, r.accuracy));
        }
    }

    /// Scores computed straight from the pairs, without a matrix.
    fn oracle(refs: &[SentimentLabel], preds: &[SentimentLabel]) -> Vec<(f64, f64, f64, usize)> {
        SentimentLabel::ALL
            .iter()
            .map(|&c| {
                let tp = refs.iter().zip(preds).filter(|(r, p)| **r == c && **p == c).count();
                let predicted = preds.iter().filter(|p| **p == c).count();
                let support = refs.iter().filter(|r| **r == c).count();
                let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
                let r = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
                let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                (p, r, f, support)
            })
            .collect()
    }

    #[test]
    fn matches_pairwise_oracle() {
        let mut rng = crate::seed::rng(2);
        for _ in 0..100 {
            let n = rng.gen_range(1..60);
            let refs: Vec<_> = (0..n).map(|_| SentimentLabel::ALL[rng.gen_range(0..3)]).collect();
            let preds: Vec<_> = (0..n).map(|_| SentimentLabel::ALL[rng.gen_range(0..3)]).collect();
            let r = evaluate(&refs, &preds, Setting::default()).unwrap();
            let expected = oracle(&refs, &preds);
            for (m, (p, rc, f, s)) in r.per_class.iter().zip(&expected) {
                assert!(close(m.precision, *p) && close(m.recall, *rc) && close(m.f1, *f));
                assert_eq!(m.support, *s);
            }
            let acc = refs.iter().zip(&preds).filter(|(a, b)| a == b).count() as f64 / n as f64;
            assert!(close(r.accuracy, acc));
            let macro_f1 = expected.iter().map(|e| e.2).sum::<f64>() / 3.0;
            assert!(close(r.macro_avg.f1, macro_f1));
        }
    }

    proptest! {
        #[test]
        fn relabeling_permutes_per_class_scores(
            counts in prop::collection::vec(prop::collection::vec(0usize..15, 3), 3),
            perm in Just([0usize, 1, 2]).prop_shuffle(),
        ) {
            prop_assume!(counts.iter().flatten().sum::<usize>() > 0);
            let cm = ConfusionMatrix::from_counts(SentimentLabel::ALL.to_vec(), counts.clone()).unwrap();
            let permuted: Vec<Vec<usize>> =
                (0..3).map(|i| (0..3).map(|j| counts[perm[i]][perm[j]]).collect()).collect();
            let order = perm.iter().map(|&i| SentimentLabel::ALL[i]).collect();
            let pm = ConfusionMatrix::from_counts(order, permuted).unwrap();
            let (a, b) = (metrics(&cm).unwrap(), metrics(&pm).unwrap());
            for (i, &src) in perm.iter().enumerate() {
                prop_assert_eq!(b.per_class[i], a.per_class[src]);
            }
            prop_assert!((a.macro_avg.f1 - b.macro_avg.f1).abs() < 1e-12);
            prop_assert!((a.weighted.f1 - b.weighted.f1).abs() < 1e-12);
            prop_assert_eq!(a.accuracy, b.accuracy);
        }

        #[test]
        fn macro_f1_lies_between_class_extremes(
            counts in prop::collection::vec(prop::collection::vec(0usize..15, 3), 3),
        ) {
            prop_assume!(counts.iter().flatten().sum::<usize>() > 0);
            let cm = ConfusionMatrix::from_counts(SentimentLabel::ALL.to_vec(), counts).unwrap();
            let r = metrics(&cm).unwrap();
            let f1s: Vec<f64> = r.per_class.iter().map(|m| m.f1).collect();
            let (lo, hi) = f1s.iter().fold((1.0f64, 0.0f64), |(lo, hi), &f| (lo.min(f), hi.max(f)));
            prop_assert!(lo - 1e-12 <= r.macro_avg.f1 && r.macro_avg.f1 <= hi + 1e-12);
            for v in f1s.iter().chain([&r.accuracy, &r.weighted.precision, &r.weighted.f1]) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }

    fn report_with(p: f64, r: f64, f: f64, acc: f64, model: &str) -> EvaluationReport {
        EvaluationReport {
            setting: Setting { model: model.into(), test_set: "Baseline".into(), system: "Baseline".into(), emoji_mode: "without".into(), seed: 3 },
            per_class: Vec::new(),
            macro_avg: Averages::default(),
            weighted: Averages { precision: p, recall: r, f1: f },
            accuracy: acc,
            total: 10,
            confusion: None,
        }
    }

    fn last_four(table: &str, row_start: &str) -> Vec<String> {
        let row = table.lines().find(|l| l.starts_with(row_start)).unwrap();
        let fields: Vec<&str> = row.split_whitespace().collect();
        fields[fields.len() - 4..].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn table_rounds_to_two_decimals() {
        let table = render_table(&[report_with(1.0, 1.0, 1.0, 1.0, "LR"), report_with(0.53, 0.56, 0.53, 0.56, "SVM")]);
        assert_eq!(last_four(&table, "LR"), ["1.00", "1.00", "1.00", "1.00"]);
        assert_eq!(last_four(&table, "SVM"), ["0.53", "0.56", "0.53", "0.56"]);
        assert!(table.contains("Precision") && table.contains("Emoji mode: without"));
    }

    #[test]
    fn csv_round_trips() {
        let mut rng = crate::seed::rng(5);
        let mut reports = Vec::new();
        for (i, model) in ["LR", "SVM, quoted"].iter().enumerate() {
            let refs: Vec<_> = (0..40).map(|_| SentimentLabel::ALL[rng.gen_range(0..3)]).collect();
            let preds: Vec<_> = (0..40).map(|_| SentimentLabel::ALL[rng.gen_range(0..3)]).collect();
            let setting = Setting { model: model.to_string(), test_set: "Upsample".into(), system: "Upsample".into(), emoji_mode: "with".into(), seed: i as u64 };
            reports.push(evaluate(&refs, &preds, setting).unwrap());
        }
        let text = render_csv(&reports, &[("version", "0.1.0".into()), ("seed", "7".into())]);
        assert!(text.starts_with("# version: 0.1.0\n# seed: 7\nmodel,test_set"));
        let back = parse_csv(&text).unwrap();
        for r in &mut reports {
            r.confusion = None;
        }
        assert_eq!(back, reports);
    }

    #[test]
    fn size_curve_has_one_row_per_point() {
        let p = SizePoint {
            model: "LR".into(),
            emoji_mode: "with".into(),
            system: "Merged".into(),
            train_size: 4080,
            dataset_size: 5100,
            f1_weighted: 0.5,
            f1_macro: 0.25,
        };
        let text = render_size_curve(&[p.clone(), p], &[]);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("LR,with,Merged,4080,5100,0.5,0.25"));
    }
}
