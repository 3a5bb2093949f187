use std::collections::{BTreeMap, HashMap};

use super::{Key, LanguageModel, LmError, NGramCounts, Result, Smoothing, TokenId, BOS_ID};
use crate::scalar::{exp10, floor, log10_or_floor, Prob};

/// Largest count that Good-Turing discounting touches by default.
pub const DEFAULT_GTMAX: usize = 7;

/// Mass below this is treated as exhausted when computing back-off weights.
const MASS_EPSILON: f64 = 1e-12;

/// Relative-frequency model: log10(count(c·w) / count(c)).
///
/// The unigram context total is the number of unigram events, `</s>`
/// included. No back-off weights are stored.
pub fn estimate_mle<F: Prob>(counts: &NGramCounts) -> LanguageModel<F> {
    let logprob = (1..=counts.order)
        .map(|k| {
            let totals = counts.context_totals(k);
            counts.counts[k - 1]
                .iter()
                .map(|(key, &c)| {
                    let total = totals[&key[..k - 1]];
                    (key.clone(), F::ratio(c, total).log10())
                })
                .collect()
        })
        .collect();
    LanguageModel::from_tables(
        counts.order,
        counts.vocab.clone(),
        logprob,
        vec![HashMap::new(); counts.order - 1],
        Smoothing::None,
        0,
    )
}

/// Good-Turing adjusted count r* = (r+1)·n_{r+1}/n_r.
pub fn good_turing_count(r: u64, n_r: u64, n_next: u64) -> f64 {
    (r + 1) as f64 * n_next as f64 / n_r as f64
}

/// Katz discount ratio d_r = (r*/r − A) / (1 − A), with
/// A = (gtmax+1)·n_{gtmax+1}/n_1.
pub fn katz_discount(r: u64, r_star: f64, a: f64) -> f64 {
    (r_star / r as f64 - a) / (1.0 - a)
}

/// Discount ratios d_1..d_gtmax for one order (index 0 unused), or a
/// warning explaining why discounting is disabled for that order.
fn discounts(counts: &NGramCounts, k: usize, gtmax: usize) -> Result<Vec<f64>, String> {
    let gtmax = gtmax as u64;
    let mut n = vec![0u64; gtmax as usize + 2];
    for &c in counts.counts[k - 1].values() {
        if c <= gtmax + 1 {
            n[c as usize] += 1;
        }
    }
    let mut d = vec![1.0; gtmax as usize + 1];
    if n[1] == 0 {
        return Ok(d);
    }
    if let Some(r) = (1..=gtmax).find(|&r| n[r as usize + 1] == 0) {
        return Err(format!(
            "order {k}: count-of-counts n_{} is zero; Good-Turing discounting disabled",
            r + 1
        ));
    }
    let a = (gtmax + 1) as f64 * n[gtmax as usize + 1] as f64 / n[1] as f64;
    if a >= 1.0 {
        return Err(format!(
            "order {k}: discount normaliser (gtmax+1)·n_{{gtmax+1}}/n_1 = {a} ≥ 1; Good-Turing discounting disabled"
        ));
    }
    for r in 1..=gtmax {
        let r_star = good_turing_count(r, n[r as usize], n[r as usize + 1]);
        let dr = katz_discount(r, r_star, a);
        if !(dr > 0.0 && dr <= 1.0) {
            return Err(format!(
                "order {k}: discount d_{r} = {dr} outside (0, 1]; Good-Turing discounting disabled"
            ));
        }
        d[r as usize] = dr;
    }
    Ok(d)
}

/// Result of Katz estimation, with any degenerate-discount warnings.
#[derive(Debug, Clone)]
pub struct KatzEstimate<F: Prob> {
    pub model: LanguageModel<F>,
    pub warnings: Vec<String>,
}

/// Good-Turing discounted estimates with Katz back-off.
///
/// Orders k ≥ 2 are discounted; the unigram distribution is left at its
/// relative frequencies because every vocabulary token is observed, so
/// there is no unseen unigram mass to reserve. Contexts whose
/// continuations cover every predictable token get their discounted
/// probabilities renormalised and a zero back-off weight.
pub fn estimate_katz<F: Prob>(counts: &NGramCounts, gtmax: usize) -> Result<KatzEstimate<F>> {
    // Mass bookkeeping runs in f64 whatever the storage type, so the
    // exhausted-mass thresholds do not depend on F.
    let (model, warnings) = katz_f64(counts, gtmax)?;
    Ok(KatzEstimate {
        model: model.cast(),
        warnings,
    })
}

fn katz_f64(counts: &NGramCounts, gtmax: usize) -> Result<(LanguageModel<f64>, Vec<String>)> {
    if !(1..=10).contains(&gtmax) {
        return Err(LmError::Gtmax(gtmax));
    }
    let order = counts.order;
    let mle: LanguageModel<f64> = estimate_mle(counts);
    let mut model = LanguageModel::from_tables(
        order,
        counts.vocab.clone(),
        vec![HashMap::new(); order],
        vec![HashMap::new(); order - 1],
        Smoothing::GoodTuringKatz,
        gtmax,
    );
    model.logprob[0] = mle.logprob[0].clone();
    let events = counts.vocab.len() - 1;
    let mut warnings = Vec::new();

    for k in 2..=order {
        let d = discounts(counts, k, gtmax).unwrap_or_else(|w| {
            log::warn!("{w}");
            warnings.push(w);
            vec![1.0; gtmax + 1]
        });
        let discount = |r: u64| d.get(r as usize).copied().unwrap_or(1.0);

        let mut by_context: BTreeMap<&[TokenId], Vec<(TokenId, u64)>> = BTreeMap::new();
        for (key, &c) in &counts.counts[k - 1] {
            by_context
                .entry(&key[..k - 1])
                .or_default()
                .push((key[k - 1], c));
        }

        for (ctx, mut continuations) in by_context {
            continuations.sort_unstable();
            let total: u64 = continuations.iter().map(|&(_, c)| c).sum();
            let mut probs: Vec<f64> = continuations
                .iter()
                .map(|&(_, c)| discount(c) * f64::ratio(c, total))
                .collect();
            let seen_mass: f64 = probs.iter().sum();
            let left = 1.0 - seen_mass;
            let lower_mass = continuations
                .iter()
                .map(|&(w, _)| exp10(model.logprob_ids(&ctx[1..], w)))
                .sum::<f64>();
            let denominator = 1.0 - lower_mass;
            
            let alpha = if left <= MASS_EPSILON {
                floor()
            } else if continuations.len() >= events || denominator <= MASS_EPSILON {
                for p in probs.iter_mut() {
                    *p /= seen_mass;
                }
                floor()
            } else {
                log10_or_floor(left / denominator)
            };

            let ctx_key = Key::from(ctx);
            for (&(w, _), &p) in continuations.iter().zip(&probs) {
                let mut key = ctx.to_vec();
                key.push(w);
                model.logprob[k - 1].insert(key.into_boxed_slice(), log10_or_floor(p));
            }
            if ctx[0] == BOS_ID && k == 2 {
                model.logprob[0].insert(ctx_key.clone(), floor());
            }
            model.backoff[k - 2].insert(ctx_key, alpha);
        }
    }
    Ok((model, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TagCorpus;
    use crate::ngram_lm::count_ngrams;

    fn counts(texts: &[&str], order: usize) -> NGramCounts {
        count_ngrams(&TagCorpus::from_texts("T", texts).unwrap(), order).unwrap()
    }

    #[test]
    fn good_turing_formula() {
        assert_eq!(good_turing_count(1, 4, 2), 2.0 * 2.0 / 4.0);
        assert_eq!(good_turing_count(1, 4, 2), 1.0);
        let a = 3.0 * 1.0 / 4.0;
        assert!((katz_discount(1, 1.0, a) - (1.0 - a) / (1.0 - a)).abs() < 1e-15);
    }

    #[test]
    fn mle_toy_values() {
        let m: LanguageModel<f64> = estimate_mle(&counts(&["A B C", "A B D"], 2));
        assert!((m.stored_logprob(&["B", "C"]).unwrap() - 0.5f64.log10()).abs() < 1e-15);
        assert_eq!(m.stored_logprob(&["<s>", "A"]).unwrap(), 0.0);
        assert_eq!(m.stored_logprob(&["</s>"]).unwrap(), 0.25f64.log10());
        assert!(m.stored_backoff(&["B"]).is_none());
    }

    #[test]
    fn mle_replication_invariance() {
        let base: LanguageModel<f64> = estimate_mle(&counts(&["A B C", "A B D", "B B"], 3));
        let rep: LanguageModel<f64> = estimate_mle(&counts(
            &["A B C", "A B D", "B B", "A B C", "A B D", "B B", "A B C", "A B D", "B B"],
            3,
        ));
        for k in 1..=3 {
            let a = base.entries(k);
            let b = rep.entries(k);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.0, y.0);
                assert!((x.1 - y.1).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn katz_equals_mle_when_counts_exceed_gtmax() {
        // Every bigram occurs 3 times; gtmax = 2 so n_1 = 0 and nothing is discounted.
        let texts = ["A B", "A B", "A B", "B A", "B A", "B A"];
        let c = counts(&texts, 2);
        let mle: LanguageModel<f64> = estimate_mle(&c);
        let katz = estimate_katz::<f64>(&c, 2).unwrap();
        assert!(katz.warnings.is_empty());
        for (words, lp, _) in mle.entries(2) {
            let k = katz.model.stored_logprob(&words).unwrap();
            assert!((k - lp).abs() < 1e-12, "{words:?}");
        }
    }

    #[test]
    fn degenerate_count_of_counts_falls_back() {
        // Bigrams occur once only: n_1 > 0, n_2 = 0.
        let c = counts(&["A B C D"], 2);
        let katz = estimate_katz::<f64>(&c, 7).unwrap();
        assert_eq!(katz.warnings.len(), 1);
        assert!(katz.warnings[0].contains("n_2"));
        let mle: LanguageModel<f64> = estimate_mle(&c);
        for (words, lp, _) in mle.entries(2) {
            assert!((katz.model.stored_logprob(&words).unwrap() - lp).abs() < 1e-12);
        }
        assert_eq!(katz.model.stored_backoff(&["A"]), Some(-99.0));
    }

    #[test]
    fn discounting_reserves_mass() {
        // Single-token sentences: each token t seen c times yields bigrams
        // (<s>,t) and (t,</s>) with count c. Five singletons, two doubles and
        // one triple give n_1 = 10, n_2 = 4, n_3 = 2.
        let texts = [
            "a", "b", "c", "d", "e", "f", "f", "g", "g", "h", "h", "h",
        ];
        let c = counts(&texts, 2);
        assert_eq!(
            (c.count_of_counts(2, 1), c.count_of_counts(2, 2), c.count_of_counts(2, 3)),
            (10, 4, 2)
        );
        let katz = estimate_katz::<f64>(&c, 2).unwrap();
        assert!(katz.warnings.is_empty(), "{:?}", katz.warnings);
        // A = 3·2/10; d_1 = (2·4/10 − A)/(1 − A) = 0.5; d_2 = (3·2/(2·4) − A)/(1 − A) = 0.375.
        let lp = katz.model.stored_logprob(&["<s>", "a"]).unwrap();
        assert!((lp - (0.5f64 / 12.0).log10()).abs() < 1e-12);
        let lp = katz.model.stored_logprob(&["<s>", "f"]).unwrap();
        assert!((lp - (0.375f64 * 2.0 / 12.0).log10()).abs() < 1e-12);
        let lp = katz.model.stored_logprob(&["<s>", "h"]).unwrap();
        assert!((lp - (3.0f64 / 12.0).log10()).abs() < 1e-12);
        // Context "a": P*(</s>|a) = 0.5, leftover 0.5, P(</s>) = 12/24.
        assert!(katz.model.stored_backoff(&["a"]).unwrap().abs() < 1e-12);
        assert_eq!(katz.model.stored_logprob(&["<s>"]), Some(-99.0));
        assert!(katz.model.stored_backoff(&["<s>"]).unwrap() > -99.0);
    }

    #[test]
    fn gtmax_one_is_always_degenerate() {
        // With gtmax = 1, r*(1) equals A, so d_1 = 0.
        let texts = ["a", "b", "c", "d", "e", "f", "f", "g", "g", "h", "h", "h"];
        let katz = estimate_katz::<f64>(&counts(&texts, 2), 1).unwrap();
        assert_eq!(katz.warnings.len(), 1);
    }

    #[test]
    fn gtmax_range() {
        let c = counts(&["A"], 2);
        assert!(matches!(estimate_katz::<f64>(&c, 0), Err(LmError::Gtmax(0))));
        assert!(matches!(estimate_katz::<f64>(&c, 11), Err(LmError::Gtmax(11))));
    }
}
