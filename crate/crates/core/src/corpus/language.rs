use std::collections::BTreeMap;

use serde::Serialize;

use super::dataset::{Dataset, Document};
use super::text::script_filter;
use crate::error::{Error, Result};

/// A language identifier deciding whether a text is Central Kurdish.
pub trait LanguagePredicate: Send + Sync {
    fn is_target_language(&self, text: &str) -> std::result::Result<bool, String>;
}

/// The built-in identifier: [`script_filter`] on the text.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptPredicate;

impl LanguagePredicate for ScriptPredicate {
    fn is_target_language(&self, text: &str) -> std::result::Result<bool, String> {
        Ok(script_filter(text))
    }
}

/// Adapts a closure into a predicate.
pub struct FnPredicate<F>(pub F);

impl<F> LanguagePredicate for FnPredicate<F>
where
    F: Fn(&str) -> std::result::Result<bool, String> + Send + Sync,
{
    fn is_target_language(&self, text: &str) -> std::result::Result<bool, String> {
        (self.0)(text)
    }
}

pub fn language_id(predicate: &dyn LanguagePredicate, text: &str) -> std::result::Result<bool, String> {
    predicate.is_target_language(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DropReason {
    Script,
    Language,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Script => "script",
            DropReason::Language => "language",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterStats {
    pub input: usize,
    pub kept: usize,
    pub dropped: BTreeMap<&'static str, usize>,
    pub dropped_ids: Vec<(String, &'static str)>,
}

/// Keeps the documents that pass both the script filter and the language
/// predicate. Kept documents carry their normalized text as the new raw
/// text, so re-running the filter on its own output is a no-op.
pub fn filter_documents(
    ds: &Dataset,
    predicate: &dyn LanguagePredicate,
) -> Result<(Dataset, FilterStats)> {
    let mut stats = FilterStats {
        input: ds.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for doc in ds {
        let reason = if !script_filter(&doc.normalized_text) {
            Some(DropReason::Script)
        } else {
            match predicate.is_target_language(&doc.normalized_text) {
                Ok(true) => None,
                Ok(false) => Some(DropReason::Language),
                Err(message) => {
                    return Err(Error::Predicate {
                        id: doc.id.clone(),
                        message,
                    })
                }
            }
        };
        match reason {
            None => {
                let text = doc.normalized_text.clone();
                kept.push(Document::clone(doc).with_text(text));
            }
            Some(r) => {
                *stats.dropped.entry(r.as_str()).or_default() += 1;
                stats.dropped_ids.push((doc.id.clone(), r.as_str()));
            }
        }
    }
    stats.kept = kept.len();
    Ok((Dataset::new(kept)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;

    const TABLE_ROW_1: &str =
        "ناخ منالی سپۆیلد و هیچ نه دیو چهن تینه گهشتوو چهن ناشیرین چهن بی سوود.";

    fn ds(texts: &[&str]) -> Dataset {
        Dataset::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("d{i}"), *t, None, Source::Gold))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn always_true_keeps_script_passing_text() {
        let p = FnPredicate(|_: &str| Ok(true));
        let (kept, stats) = filter_documents(&ds(&["ئەمە", "hello"]), &p).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(stats.dropped["script"], 1);
    }

    #[test]
    fn always_false_drops_everything() {
        let p = FnPredicate(|_: &str| Ok(false));
        let (kept, stats) = filter_documents(&ds(&["ئەمە", "hello"]), &p).unwrap();
        assert!(kept.is_empty());
        assert_eq!(stats.dropped["language"], 1);
        assert_eq!(stats.dropped["script"], 1);
    }

    #[test]
    fn builtin_predicate_keeps_kurdish_sample() {
        assert_eq!(language_id(&ScriptPredicate, TABLE_ROW_1), Ok(true));
        let (kept, _) = filter_documents(&ds(&[TABLE_ROW_1]), &ScriptPredicate).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn predicate_failure_names_document() {
        let p = FnPredicate(|_: &str| Err("unreachable".to_string()));
        match filter_documents(&ds(&["ئەمە"]), &p) {
            Err(Error::Predicate { id, .. }) => assert_eq!(id, "d0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filtering_is_idempotent() {
        let input = ds(&["ئەمە  \u{0643}تێب", "latin", "یاد 😊 بەخێر"]);
        let (once, _) = filter_documents(&input, &ScriptPredicate).unwrap();
        let (twice, stats) = filter_documents(&once, &ScriptPredicate).unwrap();
        assert_eq!(once, twice);
        assert_eq!(stats.kept, 2);
    }
}
