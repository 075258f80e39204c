//! Sentiment analysis toolkit for Central Kurdish.
//!
//! The crate covers the whole pipeline: corpus filtering and orthography
//! normalization ([`corpus`]), annotation aggregation and Krippendorff's
//! alpha ([`annotation`]), TF-IDF features ([`features`]), four classical
//! classifiers ([`classifiers`]), a from-scratch two-layer BiLSTM
//! ([`neural`]), silver-standard data generation through translate-and-label
//! clients ([`augment`]), metrics and report rendering ([`eval`]), and the
//! baseline/upsample/merged experiment grid ([`experiment`]).
//!
//! The `book/` directory next to this crate explains each stage in more
//! depth; its Rust snippets are compiled and run as doc-tests.

pub mod annotation;
pub mod augment;
pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod neural;
pub mod seed;
pub mod synth;

pub use corpus::{Dataset, Document, SentimentLabel, Source};
pub use error::{Error, Result};

/// Crate version, stamped into report headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $path))]
            pub struct $name;
        };
    }
    chapter!(Corpus, "corpus.md");
    chapter!(Agreement, "agreement.md");
    chapter!(Features, "features.md");
    chapter!(Classifiers, "classifiers.md");
    chapter!(Bilstm, "bilstm.md");
    chapter!(Augmentation, "augmentation.md");
    chapter!(Evaluation, "evaluation.md");
    chapter!(Experiments, "experiments.md");

    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
