use std::collections::HashMap;

use super::{Key, LmError, Result, TokenId, Vocab, BOS_ID, EOS_ID, MAX_ORDER};
use crate::corpus::TagCorpus;

/// Exact k-gram counts for k = 1..=order over `<s> t1 .. tN </s>` padded
/// sentences. The lone `<s>` unigram is never counted.
#[derive(Debug, Clone)]
pub struct NGramCounts {
    pub(crate) order: usize,
    pub(crate) vocab: Vocab,
    /// `counts[k-1]`: k-gram → occurrences.
    pub(crate) counts: Vec<HashMap<Key, u64>>,
    pub(crate) sentence_count: usize,
}

/// Counts all k-grams (k ≤ `order`) of the non-empty sentences of `corpus`.
pub fn count_ngrams(corpus: &TagCorpus, order: usize) -> Result<NGramCounts> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(LmError::Order(order));
    }
    let mut vocab = Vocab::default();
    let mut counts: Vec<HashMap<Key, u64>> = vec![HashMap::new(); order];
    let mut sentence_count = 0;
    let mut padded: Vec<TokenId> = Vec::new();
    for sentence in corpus.sentences().iter().filter(|s| !s.is_empty()) {
        sentence_count += 1;
        padded.clear();
        padded.push(BOS_ID);
        padded.extend(sentence.tokens.iter().map(|t| vocab.intern(t.as_str())));
        padded.push(EOS_ID);
        for k in 1..=order {
            for gram in padded.windows(k) {
                if k == 1 && gram[0] == BOS_ID {
                    continue;
                }
                *counts[k - 1].entry(Key::from(gram)).or_insert(0) += 1;
            }
        }
    }
    if sentence_count == 0 {
        return Err(LmError::EmptyTraining);
    }
    Ok(NGramCounts {
        order,
        vocab,
        counts,
        sentence_count,
    })
}

impl NGramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sentence_count(&self) -> usize {
        self.sentence_count
    }

    /// Distinct real tokens, excluding `<s>` and `</s>`.
    pub fn unique_tokens(&self) -> usize {
        self.vocab.len() - 2
    }

    /// Vocabulary including `<s>` and `</s>`.
    pub fn vocabulary(&self) -> Vec<&str> {
        self.vocab.iter().collect()
    }

    /// Occurrences of an n-gram; zero when unseen.
    pub fn count(&self, ngram: &[&str]) -> u64 {
        let Some(table) = ngram.len().checked_sub(1).and_then(|i| self.counts.get(i)) else {
            return 0;
        };
        let key: Option<Key> = ngram.iter().map(|w| self.vocab.get(w)).collect();
        key.and_then(|k| table.get(&k).copied()).unwrap_or(0)
    }

    /// Number of distinct k-grams for each k.
    pub fn distinct(&self) -> Vec<usize> {
        self.counts.iter().map(HashMap::len).collect()
    }

    /// Count-of-counts: how many distinct k-grams occur exactly `r` times.
    pub fn count_of_counts(&self, k: usize, r: u64) -> u64 {
        self.counts[k - 1].values().filter(|&&c| c == r).count() as u64
    }

    /// k-grams of one order with counts, sorted by token sequence.
    pub fn entries(&self, k: usize) -> Vec<(Vec<&str>, u64)> {
        let mut rows: Vec<_> = self.counts[k - 1]
            .iter()
            .map(|(key, &c)| (self.vocab.words(key), c))
            .collect();
        rows.sort();
        rows
    }

    /// Debug dump: `k<TAB>tok1 … tokk<TAB>count` per line.
    pub fn dump_tsv(&self) -> String {
        let mut out = String::new();
        for k in 1..=self.order {
            for (words, c) in self.entries(k) {
                out.push_str(&format!("{k}\t{}\t{c}\n", words.join(" ")));
            }
        }
        out
    }

    /// Per-context totals Σ_w count(c·w) for contexts of length `k - 1`.
    ///
    /// Summing over extensions gives count(c) for every context that
    /// does not end a sentence, and handles `<s>`, which has no unigram.
    pub(crate) fn context_totals(&self, k: usize) -> HashMap<Key, u64> {
        let mut totals: HashMap<Key, u64> = HashMap::new();
        for (key, &c) in &self.counts[k - 1] {
            *totals.entry(Key::from(&key[..k - 1])).or_insert(0) += c;
        }
        totals
    }
}
