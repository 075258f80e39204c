//! Dataset ingestion and persistence, text normalization, script and
//! language filtering, emoji handling, and stratified splitting.

mod dataset;
mod language;
mod text;

pub use dataset::{
    load_jsonl, save_jsonl, split_dataset, train_count, Dataset, Document, SentimentLabel, Source,
    TEACHER_CONFIDENCE_KEY, TRANSLATION_KEY,
};
pub use language::{
    filter_documents, language_id, DropReason, FilterStats, FnPredicate, LanguagePredicate,
    ScriptPredicate,
};
pub use text::{
    detect_emoji, has_emoji, is_arabic_script, is_emoji_base, normalize, script_filter,
    strip_emoji, EmojiMatch, DISTINCTIVE_LETTERS, EMOJI_RANGES,
};
