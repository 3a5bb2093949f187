//! N-gram language models over tag sentences.
//!
//! Counting, maximum-likelihood and Good-Turing/Katz back-off estimation,
//! conditional queries, and ARPA model files. All log probabilities are
//! base 10; `-99` stands in for probability zero.

mod arpa;
mod counts;
mod estimate;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{BOS, EOS};
use crate::scalar::{floor, Prob};

pub use arpa::{model_id, read_arpa, write_arpa};
pub use counts::{count_ngrams, NGramCounts};
pub use estimate::{
    estimate_katz, estimate_mle, good_turing_count, katz_discount, KatzEstimate, DEFAULT_GTMAX,
};

/// Highest supported model order.
pub const MAX_ORDER: usize = 7;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("model order {0} outside 1..={MAX_ORDER}")]
    Order(usize),
    #[error("gtmax {0} outside 1..=10")]
    Gtmax(usize),
    #[error("corpus has no non-empty sentences to train on")]
    EmptyTraining,
    #[error("context of length {len} is too long for an order-{order} model")]
    ContextTooLong { len: usize, order: usize },
    #[error("ARPA format error at line {line}: {message}")]
    Format { line: usize, message: String },
}

pub type Result<T, E = LmError> = std::result::Result<T, E>;

pub(crate) type TokenId = u32;
pub(crate) type Key = Box<[TokenId]>;

pub(crate) const BOS_ID: TokenId = 0;
pub(crate) const EOS_ID: TokenId = 1;
const OOV_ID: TokenId = TokenId::MAX;

/// Interned token table. `<s>` and `</s>` always hold ids 0 and 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Vocab {
            words: Vec::new(),
            index: HashMap::new(),
        };
        v.intern(BOS);
        v.intern(EOS);
        v
    }
}

impl Vocab {
    pub(crate) fn intern(&mut self, word: &str) -> TokenId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as TokenId;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    pub(crate) fn get(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub(crate) fn word(&self, id: TokenId) -> &str {
        &self.words[id as usize]
    }

    pub(crate) fn words(&self, key: &[TokenId]) -> Vec<&str> {
        key.iter().map(|&id| self.word(id)).collect()
    }

    pub(crate) fn len(&self) -> usize {
        self.words.len()
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Relative frequencies, no back-off mass.
    #[default]
    None,
    GoodTuringKatz,
}

impl FromStr for Smoothing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Smoothing::None),
            "good-turing" | "good_turing" | "good_turing_katz" | "katz" => {
                Ok(Smoothing::GoodTuringKatz)
            }
            other => Err(format!("unknown smoothing {other:?}, expected none or good-turing")),
        }
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Smoothing::None => "none",
            Smoothing::GoodTuringKatz => "good-turing",
        })
    }
}

/// Back-off n-gram model with log10 conditional probabilities.
///
/// Immutable once built; queries take `&self` and are safe from any
/// number of threads.
#[derive(Debug, Clone)]
pub struct LanguageModel<F: Prob> {
    pub(crate) order: usize,
    pub(crate) vocab: Vocab,
    /// `logprob[k-1]`: k-gram → log10 P(last | first k-1).
    pub(crate) logprob: Vec<HashMap<Key, F>>,
    /// `backoff[k-1]`: k-token context → log10 back-off weight, k < order.
    pub(crate) backoff: Vec<HashMap<Key, F>>,
    pub(crate) smoothing: Smoothing,
    pub(crate) gtmax: usize,
    /// Every proper prefix of a stored n-gram that is itself a context.
    contexts: HashSet<Key>,
}

impl<F: Prob> LanguageModel<F> {
    pub(crate) fn from_tables(
        order: usize,
        vocab: Vocab,
        logprob: Vec<HashMap<Key, F>>,
        backoff: Vec<HashMap<Key, F>>,
        smoothing: Smoothing,
        gtmax: usize,
    ) -> Self {
        let contexts = logprob
            .iter()
            .skip(1)
            .flat_map(|table| table.keys().map(|k| Key::from(&k[..k.len() - 1])))
            .collect();
        LanguageModel {
            order,
            vocab,
            logprob,
            backoff,
            smoothing,
            gtmax,
            contexts,
        }
    }

    /// The same tables stored in another scalar type.
    pub(crate) fn cast<G: Prob>(self) -> LanguageModel<G> {
        let convert = |tables: Vec<HashMap<Key, F>>| -> Vec<HashMap<Key, G>> {
            tables
                .into_iter()
                .map(|t| t.into_iter().map(|(k, v)| (k, G::of(v.as_f64()))).collect())
                .collect()
        };
        LanguageModel {
            order: self.order,
            vocab: self.vocab,
            logprob: convert(self.logprob),
            backoff: convert(self.backoff),
            smoothing: self.smoothing,
            gtmax: self.gtmax,
            contexts: self.contexts,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn gtmax(&self) -> usize {
        self.gtmax
    }

    /// Number of stored k-grams for k = 1..=order.
    pub fn ngram_counts(&self) -> Vec<usize> {
        self.logprob.iter().map(HashMap::len).collect()
    }

    /// Predictable tokens: the vocabulary plus `</s>`, without `<s>`.
    pub fn events(&self) -> Vec<&str> {
        self.vocab.iter().filter(|w| *w != BOS).collect()
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.vocab.get(token).is_some()
    }

    /// Stored log10 probability of an exact n-gram, if present.
    pub fn stored_logprob(&self, ngram: &[&str]) -> Option<F> {
        let key = self.key(ngram)?;
        self.logprob.get(key.len().checked_sub(1)?)?.get(&key).copied()
    }

    /// Stored log10 back-off weight of a context, if present.
    pub fn stored_backoff(&self, context: &[&str]) -> Option<F> {
        let key = self.key(context)?;
        self.backoff.get(key.len().checked_sub(1)?)?.get(&key).copied()
    }

    /// Stored n-grams of one order with their log probability and back-off
    /// weight, sorted by token sequence.
    pub fn entries(&self, k: usize) -> Vec<(Vec<&str>, F, Option<F>)> {
        let Some(table) = self.logprob.get(k.wrapping_sub(1)) else {
            return Vec::new();
        };
        let mut rows: Vec<_> = table
            .iter()
            .map(|(key, &lp)| {
                let bo = self.backoff.get(k - 1).and_then(|b| b.get(key)).copied();
                (self.vocab.words(key), lp, bo)
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        rows
    }

    fn key(&self, words: &[&str]) -> Option<Key> {
        words.iter().map(|w| self.vocab.get(w)).collect()
    }

    pub(crate) fn ids(&self, words: &[&str]) -> Vec<TokenId> {
        words
            .iter()
            .map(|w| self.vocab.get(w).unwrap_or(OOV_ID))
            .collect()
    }

    /// log10 P(token | context). Context tokens are oldest first; at most
    /// `order - 1` of them. Unknown tokens score the floor.
    pub fn cond_logprob(&self, context: &[&str], token: &str) -> Result<F> {
        if context.len() >= self.order {
            return Err(LmError::ContextTooLong {
                len: context.len(),
                order: self.order,
            });
        }
        let ctx = self.ids(context);
        let Some(w) = self.vocab.get(token) else {
            return Ok(floor());
        };
        Ok(self.logprob_ids(&ctx, w))
    }

    /// Back-off recursion on interned ids. `ctx` must be shorter than the order.
    pub(crate) fn logprob_ids(&self, ctx: &[TokenId], w: TokenId) -> F {
        let mut acc = F::zero();
        let mut ctx = ctx;
        let mut key = Vec::with_capacity(ctx.len() + 1);
        loop {
            key.clear();
            key.extend_from_slice(ctx);
            key.push(w);
            if let Some(&lp) = self.logprob[ctx.len()].get(key.as_slice()) {
                return (acc + lp).max(floor());
            }
            if ctx.is_empty() {
                return floor();
            }
            match self.smoothing {
                Smoothing::GoodTuringKatz => {
                    if let Some(&bo) = self.backoff[ctx.len() - 1].get(ctx) {
                        acc = acc + bo;
                        if acc <= floor() {
                            return floor();
                        }
                    }
                }
                Smoothing::None => {
                    if self.contexts.contains(ctx) {
                        return floor();
                    }
                }
            }
            ctx = &ctx[1..];
        }
    }
}
