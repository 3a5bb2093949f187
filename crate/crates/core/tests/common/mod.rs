// Shared generators and brute-force oracles for the integration targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use treelint::corpus::TagCorpus;
use treelint::ngram_lm::LanguageModel;
use treelint::Prob;

/// Random corpus over `t0..t{vocab-1}` with Zipf-like token frequencies, so
/// that low count-of-counts are well populated.
pub fn random_corpus(rng: &mut ChaCha8Rng, vocab: usize, sentences: usize, max_len: usize) -> TagCorpus {
    let weights = WeightedIndex::new((1..=vocab).map(|r| 1.0 / r as f64)).unwrap();
    let texts: Vec<String> = (0..sentences)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len)
                .map(|_| format!("t{}", weights.sample(rng)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    TagCorpus::from_texts("T", &texts).unwrap()
}

/// Naive n-gram counts over `<s> tokens </s>`, k = 1..=order, without the
/// lone `<s>` unigram.
pub fn naive_counts(corpus: &TagCorpus, order: usize) -> BTreeMap<Vec<String>, u64> {
    let mut counts = BTreeMap::new();
    for s in corpus.sentences().iter().filter(|s| !s.is_empty()) {
        let mut padded = vec!["<s>".to_string()];
        padded.extend(s.tokens.iter().map(|t| t.as_str().to_string()));
        padded.push("</s>".to_string());
        for k in 1..=order {
            for start in 0..padded.len() {
                let end = start + k;
                if end > padded.len() || (k == 1 && start == 0) {
                    continue;
                }
                *counts.entry(padded[start..end].to_vec()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Contexts of every stored n-gram, for all orders.
pub fn observed_contexts<F: Prob>(model: &LanguageModel<F>) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for k in 1..=model.order() {
        for (key, _, _) in model.entries(k) {
            out.insert(key[..k - 1].iter().map(|s| s.to_string()).collect());
        }
    }
    out
}

/// Σ over every predictable token of P(token | context).
pub fn distribution_sum<F: Prob>(model: &LanguageModel<F>, context: &[String]) -> f64 {
    let ctx: Vec<&str> = context.iter().map(String::as_str).collect();
    model
        .events()
        .iter()
        .map(|w| 10f64.powf(model.cond_logprob(&ctx, w).unwrap().as_f64()))
        .sum()
}

/// Precision by scanning the gold list for each of the top R entries.
pub fn brute_precision(ranked: &[usize], gold: &[usize], cutoffs: &[usize]) -> Vec<(usize, f64)> {
    cutoffs
        .iter()
        .map(|&r| {
            let hits = ranked[..r].iter().filter(|e| gold.iter().any(|g| g == *e)).count();
            (hits, hits as f64 / r as f64)
        })
        .collect()
}
