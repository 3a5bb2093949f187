//! Structural anomaly detection for XML corpora.
//!
//! Entries of an XML document are flattened into tag sentences
//! ([`corpus`]), an n-gram language model is trained on them
//! ([`ngram_lm`]), and entries are ranked by how surprising the model finds
//! their structure ([`scoring`]). [`evaluation`] measures precision at rank
//! against a gold error list and builds synthetic corrupted corpora.
//!
//! The model and scores are generic over the float type ([`Prob`]); the
//! aliases below fix it to `f64` (or `f32`).

pub mod cli;
pub mod corpus;
pub mod evaluation;
pub mod ngram_lm;
pub mod scalar;
pub mod scoring;

pub use scalar::Prob;

/// Double-precision language model, as used by the CLI.
pub type NGramModel = ngram_lm::LanguageModel<f64>;
pub type NGramModelF32 = ngram_lm::LanguageModel<f32>;
pub type ScoreRecord = scoring::ScoreRecord<f64>;
pub type RankedReport = scoring::RankedReport<f64>;
