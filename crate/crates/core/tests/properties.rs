mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treelint::corpus::{extract_sentences, EntryRef, TagCorpus, TierSpec};
use treelint::evaluation::{inject_errors, precision_at, GoldErrorSet, InjectionSpec};
use treelint::ngram_lm::{count_ngrams, estimate_katz, estimate_mle, read_arpa, write_arpa};
use treelint::scoring::{rank, score_corpus, score_sentence, Measure};
use treelint::{NGramModel, NGramModelF32};

const NAMES: [&str; 8] = ["form", "orth", "sense", "def", "pos", "gramGrp", "usg", "xr"];

#[derive(Debug, Clone)]
struct Node {
    name: &'static str,
    text: bool,
    children: Vec<Node>,
}

fn node() -> impl Strategy<Value = Node> {
    let leaf = (0..NAMES.len(), any::<bool>()).prop_map(|(i, text)| Node {
        name: NAMES[i],
        text,
        children: Vec::new(),
    });
    leaf.prop_recursive(4, 40, 4, |inner| {
        (0..NAMES.len(), any::<bool>(), prop::collection::vec(inner, 0..4)).prop_map(
            |(i, text, children)| Node {
                name: NAMES[i],
                text,
                children,
            },
        )
    })
}

fn entries() -> impl Strategy<Value = Vec<Vec<Node>>> {
    prop::collection::vec(prop::collection::vec(node(), 0..4), 1..6)
}

fn write_node(n: &Node, out: &mut String) {
    if n.children.is_empty() && !n.text {
        out.push_str(&format!("<{} n=\"1\"/>", n.name));
        return;
    }
    out.push_str(&format!("<{} type=\"a b\">", n.name));
    if n.text {
        out.push_str("x &amp; y<!-- note -->");
    }
    for c in &n.children {
        write_node(c, out);
    }
    out.push_str(&format!("</{}>", n.name));
}

fn document(entries: &[Vec<Node>]) -> String {
    let mut xml = String::from("<?xml version=\"1.0\"?><dict>");
    for (i, children) in entries.iter().enumerate() {
        xml.push_str(&format!("<entry xml:id=\"e{i}\">"));
        for c in children {
            write_node(c, &mut xml);
        }
        xml.push_str("</entry>\n");
    }
    xml.push_str("</dict>");
    xml
}

fn flatten(n: &Node, collapse: &BTreeSet<String>, out: &mut Vec<String>) {
    out.push(n.name.to_string());
    if !collapse.contains(n.name) {
        for c in &n.children {
            flatten(c, collapse, out);
        }
    }
}

fn descendants(n: &Node) -> usize {
    1 + n.children.iter().map(descendants).sum::<usize>()
}

fn corpus() -> impl Strategy<Value = TagCorpus> {
    prop::collection::vec(prop::collection::vec(0..8usize, 0..7), 1..25).prop_map(|rows| {
        let texts: Vec<String> = rows
            .iter()
            .map(|r| r.iter().map(|i| format!("t{i}")).collect::<Vec<_>>().join(" "))
            .collect();
        TagCorpus::from_texts("T", &texts).unwrap()
    })
}

fn nonempty_corpus() -> impl Strategy<Value = TagCorpus> {
    corpus().prop_filter("needs a token", |c| c.sentences().iter().any(|s| !s.is_empty()))
}

proptest! {
    #[test]
    fn extraction_matches_recursive_flattening(
        entries in entries(),
        collapse in prop::sample::subsequence(NAMES.to_vec(), 0..=NAMES.len()),
    ) {
        let xml = document(&entries);
        let plain = TierSpec::new("ENTRY", "entry");
        let tier = TierSpec::new("ENTRY", "entry").collapsing(collapse.iter().copied());
        let full = extract_sentences(&xml, &plain).unwrap();
        let collapsed = extract_sentences(&xml, &tier).unwrap();
        prop_assert_eq!(collapsed.len(), entries.len());

        let mut vocab = BTreeSet::new();
        for (i, children) in entries.iter().enumerate() {
            let mut expected = Vec::new();
            for c in children {
                flatten(c, &tier.collapse_elements, &mut expected);
            }
            let s = &collapsed.sentences()[i];
            let got: Vec<&str> = s.tokens.iter().map(|t| t.as_str()).collect();
            prop_assert_eq!(&got, &expected);
            prop_assert_eq!(s.entry.ordinal, i);
            prop_assert_eq!(s.entry.source_id.clone(), Some(format!("e{i}")));
            let total: usize = children.iter().map(descendants).sum();
            prop_assert_eq!(full.sentences()[i].len(), total);
            prop_assert!(s.len() <= total);
            vocab.extend(s.tokens.iter().cloned());
        }
        prop_assert_eq!(collapsed.vocabulary(), &vocab);
        prop_assert_eq!(extract_sentences(&xml, &tier).unwrap(), collapsed);
    }

    #[test]
    fn counts_match_naive_enumeration(c in nonempty_corpus(), order in 1usize..5) {
        let counts = count_ngrams(&c, order).unwrap();
        let naive = common::naive_counts(&c, order);
        let mut got = Vec::new();
        for k in 1..=order {
            for (key, n) in counts.entries(k) {
                got.push((key.iter().map(|s| s.to_string()).collect::<Vec<_>>(), n));
            }
        }
        got.sort();
        let expected: Vec<_> = naive.into_iter().collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn mle_is_relative_frequency(c in nonempty_corpus(), order in 1usize..4) {
        let model: NGramModel = estimate_mle(&count_ngrams(&c, order).unwrap());
        let naive = common::naive_counts(&c, order);
        for (key, &n) in &naive {
            let ctx = &key[..key.len() - 1];
            let total: u64 = naive
                .iter()
                .filter(|(k, _)| k.len() == key.len() && k.starts_with(ctx))
                .map(|(_, &m)| m)
                .sum();
            let words: Vec<&str> = key.iter().map(String::as_str).collect();
            let lp = model.stored_logprob(&words).unwrap();
            prop_assert!((lp - (n as f64 / total as f64).log10()).abs() < 1e-12);
        }
        for ctx in common::observed_contexts(&model) {
            prop_assert!((common::distribution_sum(&model, &ctx) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn katz_contexts_are_normalized(seed in any::<u64>(), order in 2usize..5, gtmax in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = common::random_corpus(&mut rng, 12, 120, 6);
        let model = estimate_katz::<f64>(&count_ngrams(&c, order).unwrap(), gtmax).unwrap().model;
        for ctx in common::observed_contexts(&model) {
            let sum = common::distribution_sum(&model, &ctx);
            prop_assert!((sum - 1.0).abs() < 1e-6, "context {:?} sums to {}", ctx, sum);
        }
    }

    #[test]
    fn arpa_round_trip_is_stable(c in nonempty_corpus(), order in 1usize..5, katz in any::<bool>()) {
        let counts = count_ngrams(&c, order).unwrap();
        let model: NGramModel = if katz {
            estimate_katz(&counts, 3).unwrap().model
        } else {
            estimate_mle(&counts)
        };
        let text = write_arpa(&model);
        let back: NGramModel = read_arpa(&text).unwrap();
        prop_assert_eq!(back.ngram_counts(), model.ngram_counts());
        for k in 1..=order {
            for ((ka, pa, ba), (kb, pb, bb)) in model.entries(k).into_iter().zip(back.entries(k)) {
                prop_assert_eq!(ka, kb);
                prop_assert!((pa - pb).abs() <= 5e-8);
                prop_assert!((ba.unwrap_or(0.0) - bb.unwrap_or(0.0)).abs() <= 5e-8);
            }
        }
        prop_assert_eq!(write_arpa(&back), text);
    }

    #[test]
    fn sentence_scores_are_consistent(c in nonempty_corpus(), order in 1usize..4) {
        let model: NGramModel = estimate_mle(&count_ngrams(&c, order).unwrap());
        for s in c.sentences() {
            let r = score_sentence(&model, s);
            prop_assert!(r.logprob <= 1e-12);
            if s.is_empty() {
                prop_assert!(r.ppwet.is_none() && r.value(Measure::LogProb).is_none());
                continue;
            }
            // Training sentences never hit the floor.
            prop_assert!(r.logprob > -99.0);
            let ppwet = r.ppwet.unwrap();
            prop_assert!((ppwet - 10f64.powf(-r.logprob / (s.len() + 1) as f64)).abs() < 1e-9 * ppwet);
            prop_assert!(ppwet >= 1.0 - 1e-12);
            let has_ppw = if order == 1 { true } else { s.len() >= 2 };
            prop_assert_eq!(r.ppw.is_some(), has_ppw);
            if let Some(ppw) = r.ppw {
                prop_assert!(ppw >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn equal_length_logprob_and_ppwet_agree(c in nonempty_corpus()) {
        let model: NGramModel = estimate_mle(&count_ngrams(&c, 2).unwrap());
        let records = score_corpus(&model, &c);
        for a in &records {
            for b in &records {
                if a.n_tokens == b.n_tokens && a.n_tokens > 0 && a.logprob < b.logprob - 1e-9 {
                    prop_assert!(a.ppwet.unwrap() > b.ppwet.unwrap());
                }
            }
        }
    }

    #[test]
    fn ranking_ignores_input_order(c in nonempty_corpus(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let model: NGramModel = estimate_mle(&count_ngrams(&c, 2).unwrap());
        for measure in [Measure::LogProb, Measure::Ppw, Measure::Ppwet] {
            let records = score_corpus(&model, &c);
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = rank(records, measure, measure.direction(), "m").unwrap();
            let b = rank(shuffled, measure, measure.direction(), "m").unwrap();
            prop_assert_eq!(a.entry_refs(), b.entry_refs());
            let scorable = a.entries.iter().take_while(|r| r.value(measure).is_some()).count();
            prop_assert!(a.entries[scorable..].iter().all(|r| r.value(measure).is_none()));
        }
    }

    #[test]
    fn f32_model_tracks_f64(c in nonempty_corpus(), order in 1usize..4) {
        let counts = count_ngrams(&c, order).unwrap();
        let wide: NGramModel = estimate_katz(&counts, 4).unwrap().model;
        let narrow: NGramModelF32 = estimate_katz(&counts, 4).unwrap().model;
        for s in c.sentences() {
            let a = score_sentence(&wide, s).logprob;
            let b = score_sentence(&narrow, s).logprob as f64;
            prop_assert!((a - b).abs() <= 1e-4 * (1.0 + a.abs()), "{} vs {} for {}", a, b, s.text());
        }
    }

    #[test]
    fn precision_hits_follow_the_gold_list(
        n in 1usize..60,
        gold_ids in prop::collection::btree_set(0usize..80, 0..30),
        picks in prop::collection::btree_set(1usize..60, 1..6),
    ) {
        let cutoffs: Vec<usize> = picks.into_iter().filter(|&r| r <= n).collect();
        prop_assume!(!cutoffs.is_empty());
        let ranked: Vec<usize> = (0..n).rev().collect();
        let refs: Vec<EntryRef> = ranked.iter().map(|&i| EntryRef::new("T", i)).collect();
        let mut gold = GoldErrorSet::new("T");
        for &g in &gold_ids {
            gold.insert(EntryRef::new("T", g));
        }
        let table = precision_at(&refs, &gold, &cutoffs).unwrap();
        let gold_list: Vec<usize> = gold_ids.into_iter().collect();
        let oracle = common::brute_precision(&ranked, &gold_list, &cutoffs);
        for (row, (hits, p)) in table.rows.iter().zip(oracle) {
            prop_assert_eq!(row.hits, hits);
            prop_assert_eq!(row.precision, p);
        }
        let mean = table.rows.iter().map(|r| r.precision).sum::<f64>() / table.rows.len() as f64;
        prop_assert_eq!(table.average, mean);
    }

    #[test]
    fn injection_corrupts_exactly_the_gold_entries(seed in any::<u64>(), rate in 0.05f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = common::random_corpus(&mut rng, 6, 80, 5);
        let spec = InjectionSpec::uniform(rate, seed);
        let (corrupted, gold) = inject_errors(&clean, &spec).unwrap();
        prop_assert_eq!(gold.len(), (rate * 80.0 - 1e-9).ceil() as usize);
        prop_assert_eq!(corrupted.len(), clean.len());
        for (a, b) in clean.sentences().iter().zip(corrupted.sentences()) {
            prop_assert_eq!(a.tokens != b.tokens, gold.contains(&a.entry));
        }
        let again = inject_errors(&clean, &spec).unwrap();
        prop_assert_eq!(again.0, corrupted);
    }
}
