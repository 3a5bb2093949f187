//! Precision-at-rank against a gold error list, plus synthetic corpora with
//! injected structural errors for running the evaluation protocol without
//! a hand-corrected dictionary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{CorpusError, EntryRef, TagCorpus, TagSentence, TagToken};

/// Cutoffs R used by default for precision-at-rank tables.
pub const DEFAULT_CUTOFFS: [usize; 6] = [15, 30, 50, 100, 500, 1000];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("cutoff {cutoff} exceeds the {len} ranked entries")]
    Cutoff { cutoff: usize, len: usize },
    #[error("cutoffs must be strictly increasing positive integers, got {0:?}")]
    Cutoffs(Vec<usize>),
    #[error("ranked entry {entry} does not belong to gold tier {tier}")]
    Tier { entry: EntryRef, tier: String },
    #[error("invalid grammar: {0}")]
    Grammar(String),
    #[error("invalid injection spec: {0}")]
    Spec(String),
    #[error("cannot place corruption: {0}")]
    Injection(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Entries known to be errorful, matched by tier and ordinal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldErrorSet {
    pub tier_name: String,
    refs: BTreeMap<usize, EntryRef>,
}

impl GoldErrorSet {
    pub fn new(tier_name: impl Into<String>) -> Self {
        GoldErrorSet {
            tier_name: tier_name.into(),
            refs: BTreeMap::new(),
        }
    }

    /// Adds a ref; refs of other tiers are ignored. Returns whether it was new.
    pub fn insert(&mut self, entry: EntryRef) -> bool {
        if entry.tier_name != self.tier_name || self.refs.contains_key(&entry.ordinal) {
            return false;
        }
        self.refs.insert(entry.ordinal, entry);
        true
    }

    pub fn contains(&self, entry: &EntryRef) -> bool {
        entry.tier_name == self.tier_name && self.refs.contains_key(&entry.ordinal)
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntryRef> {
        self.refs.values()
    }

    /// One `TIER:ordinal[:source_id]` per line, in ordinal order.
    pub fn to_file_text(&self) -> String {
        self.refs.values().map(|r| format!("{r}\n")).collect()
    }
}

/// Parses a gold file, keeping only refs of `tier_name`. `#` starts a comment.
pub fn load_gold(text: &str, tier_name: &str) -> Result<GoldErrorSet> {
    let mut gold = GoldErrorSet::new(tier_name);
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let entry: EntryRef = line.parse().map_err(|message| EvalError::Format {
            line: i + 1,
            message,
        })?;
        gold.insert(entry);
    }
    if gold.is_empty() {
        log::warn!("gold list has no entries for tier {tier_name}");
    }
    Ok(gold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionRow {
    pub cutoff: usize,
    pub hits: usize,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionTable {
    pub rows: Vec<PrecisionRow>,
    /// Mean of the row precisions.
    pub average: f64,
}

impl PrecisionTable {
    /// `R hits precision` rows and a final `AVG` row.
    pub fn to_tsv(&self, decimals: usize) -> String {
        let mut out = String::from("R\thits\tprecision\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{:.*}\n", r.cutoff, r.hits, decimals, r.precision));
        }
        out.push_str(&format!("AVG\t\t{:.*}\n", decimals, self.average));
        out
    }
}

fn check_cutoffs(cutoffs: &[usize]) -> Result<()> {
    let increasing = cutoffs.windows(2).all(|w| w[0] < w[1]);
    if cutoffs.is_empty() || cutoffs[0] == 0 || !increasing {
        return Err(EvalError::Cutoffs(cutoffs.to_vec()));
    }
    Ok(())
}

/// Precision at each cutoff R: hits among the top R entries, divided by R.
pub fn precision_at(
    ranked: &[EntryRef],
    gold: &GoldErrorSet,
    cutoffs: &[usize],
) -> Result<PrecisionTable> {
    check_cutoffs(cutoffs)?;
    if let Some(&cutoff) = cutoffs.iter().find(|&&c| c > ranked.len()) {
        return Err(EvalError::Cutoff {
            cutoff,
            len: ranked.len(),
        });
    }
    if let Some(entry) = ranked.iter().find(|e| e.tier_name != gold.tier_name) {
        return Err(EvalError::Tier {
            entry: entry.clone(),
            tier: gold.tier_name.clone(),
        });
    }
    let mut rows = Vec::with_capacity(cutoffs.len());
    let mut hits = 0;
    let mut seen = 0;
    for &cutoff in cutoffs {
        hits += ranked[seen..cutoff].iter().filter(|e| gold.contains(e)).count();
        seen = cutoff;
        rows.push(PrecisionRow {
            cutoff,
            hits,
            precision: hits as f64 / cutoff as f64,
        });
    }
    let average = rows.iter().map(|r| r.precision).sum::<f64>() / rows.len() as f64;
    Ok(PrecisionTable { rows, average })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Template {
    pub tokens: Vec<String>,
    pub weight: f64,
}

/// Weighted template sentences for synthetic corpora.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Grammar {
    pub templates: Vec<Template>,
}

impl Grammar {
    /// Parses `{"templates":[{"tokens":["form","sense"],"weight":9.0}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let grammar: Grammar =
            serde_json::from_str(text).map_err(|e| EvalError::Grammar(e.to_string()))?;
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(EvalError::Grammar("no templates".into()));
        }
        for (i, t) in self.templates.iter().enumerate() {
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(EvalError::Grammar(format!(
                    "template {i} has weight {}, expected a positive finite number",
                    t.weight
                )));
            }
            if t.tokens.is_empty() {
                return Err(EvalError::Grammar(format!("template {i} has no tokens")));
            }
            for tok in &t.tokens {
                TagToken::new(tok.as_str())
                    .map_err(|e| EvalError::Grammar(format!("template {i}: {e}")))?;
            }
        }
        Ok(())
    }
}

/// Draws `size` sentences i.i.d. from the weighted templates.
pub fn generate_synthetic_corpus(
    grammar: &Grammar,
    size: usize,
    seed: u64,
    tier_name: &str,
) -> Result<TagCorpus> {
    grammar.validate()?;
    if size == 0 {
        return Err(EvalError::Grammar("corpus size must be at least 1".into()));
    }
    let templates: Vec<Vec<TagToken>> = grammar
        .templates
        .iter()
        .map(|t| t.tokens.iter().map(|s| TagToken::new(s.as_str())).collect())
        .collect::<Result<_, _>>()?;
    let weights = WeightedIndex::new(grammar.templates.iter().map(|t| t.weight))
        .map_err(|e| EvalError::Grammar(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..size)
        .map(|i| TagSentence {
            entry: EntryRef::new(tier_name, i),
            tokens: templates[weights.sample(&mut rng)].clone(),
        })
        .collect();
    Ok(TagCorpus::new(tier_name, sentences)?)
}

/// Structural corruptions applied to a tag sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Corruption {
    SwapAdjacent,
    DeleteToken,
    InsertRandomToken,
    ReplaceToken,
    /// Moves one token, standing for a misplaced branch, to another position.
    MoveSubtreeToken,
}

impl Corruption {
    pub const ALL: [Corruption; 5] = [
        Corruption::SwapAdjacent,
        Corruption::DeleteToken,
        Corruption::InsertRandomToken,
        Corruption::ReplaceToken,
        Corruption::MoveSubtreeToken,
    ];

    /// Whether the corruption can change `tokens` at all.
    fn applies(self, tokens: &[TagToken], vocab: &[TagToken]) -> bool {
        match self {
            Corruption::SwapAdjacent => tokens.windows(2).any(|w| w[0] != w[1]),
            Corruption::DeleteToken => tokens.len() >= 2,
            Corruption::InsertRandomToken => !vocab.is_empty(),
            Corruption::ReplaceToken => !tokens.is_empty() && vocab.len() >= 2,
            Corruption::MoveSubtreeToken => {
                tokens.len() >= 2 && tokens.iter().any(|t| *t != tokens[0])
            }
        }
    }

    /// Applies the corruption; the result always differs from the input.
    /// Callers check [`Corruption::applies`] first.
    fn apply<R: Rng>(self, tokens: &[TagToken], vocab: &[TagToken], rng: &mut R) -> Vec<TagToken> {
        let mut out = tokens.to_vec();
        match self {
            Corruption::SwapAdjacent => {
                let spots: Vec<usize> = (0..tokens.len() - 1)
                    .filter(|&i| tokens[i] != tokens[i + 1])
                    .collect();
                let i = *spots.choose(rng).expect("applicable swap");
                out.swap(i, i + 1);
            }
            Corruption::DeleteToken => {
                out.remove(rng.gen_range(0..tokens.len()));
            }
            Corruption::InsertRandomToken => {
                let at = rng.gen_range(0..=tokens.len());
                out.insert(at, vocab.choose(rng).expect("vocabulary").clone());
            }
            Corruption::ReplaceToken => {
                let i = rng.gen_range(0..tokens.len());
                let others: Vec<&TagToken> = vocab.iter().filter(|t| **t != tokens[i]).collect();
                out[i] = (*others.choose(rng).expect("replacement token")).clone();
            }
            Corruption::MoveSubtreeToken => {
                let n = tokens.len();
                let moves: Vec<(usize, usize)> = (0..n)
                    .flat_map(|from| (0..n).map(move |to| (from, to)))
                    .filter(|&(from, to)| from != to && moved(tokens, from, to) != tokens)
                    .collect();
                let &(from, to) = moves.choose(rng).expect("applicable move");
                out = moved(tokens, from, to);
            }
        }
        out
    }
}

fn moved(tokens: &[TagToken], from: usize, to: usize) -> Vec<TagToken> {
    let mut out = tokens.to_vec();
    let t = out.remove(from);
    out.insert(to, t);
    out
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corruption::SwapAdjacent => "swap_adjacent",
            Corruption::DeleteToken => "delete_token",
            Corruption::InsertRandomToken => "insert_random_token",
            Corruption::ReplaceToken => "replace_token",
            Corruption::MoveSubtreeToken => "move_subtree_token",
        })
    }
}

impl FromStr for Corruption {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Corruption::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| format!("unknown corruption {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSpec {
    /// Fraction of entries to corrupt, in (0, 1).
    pub rate: f64,
    pub operations: Vec<(Corruption, f64)>,
    pub seed: u64,
}

impl InjectionSpec {
    /// All corruptions, equally weighted.
    pub fn uniform(rate: f64, seed: u64) -> Self {
        InjectionSpec {
            rate,
            operations: Corruption::ALL.iter().map(|&c| (c, 1.0)).collect(),
            seed,
        }
    }

    /// Number of entries corrupted in a corpus of `n`: ⌈rate·n⌉.
    pub fn target_count(&self, n: usize) -> usize {
        // Slack absorbs products like 0.07 * 100 = 7.000000000000001.
        (self.rate * n as f64 - 1e-9).ceil().max(0.0) as usize
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(EvalError::Spec(format!("rate {} outside (0, 1)", self.rate)));
        }
        if self.operations.is_empty() {
            return Err(EvalError::Spec("no corruption operations".into()));
        }
        if let Some((op, w)) = self
            .operations
            .iter()
            .find(|(_, w)| !(w.is_finite() && *w > 0.0))
        {
            return Err(EvalError::Spec(format!("weight {w} for {op} is not positive and finite")));
        }
        if self.rate * n as f64 + 1e-9 < 1.0 {
            return Err(EvalError::Spec(format!(
                "rate {} corrupts no entries of a {n}-entry corpus",
                self.rate
            )));
        }
        Ok(())
    }
}

/// Corrupts ⌈rate·N⌉ distinct sentences, one operation each, and returns
/// the corrupted corpus with the set of corrupted refs.
///
/// Targets come from a seeded shuffle of the corpus. An operation that
/// cannot change the current target moves on to the next candidate in the
/// shuffle; an operation that fits no remaining sentence is dropped and
/// another one is drawn.
pub fn inject_errors(corpus: &TagCorpus, spec: &InjectionSpec) -> Result<(TagCorpus, GoldErrorSet)> {
    let n = corpus.len();
    spec.validate(n)?;
    let target = spec.target_count(n);
    let vocab: Vec<TagToken> = corpus.vocabulary().iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool: Vec<usize> = (0..n).collect();
    pool.shuffle(&mut rng);

    let mut sentences = corpus.sentences().to_vec();
    let mut gold = GoldErrorSet::new(corpus.tier_name.clone());
    for _ in 0..target {
        let mut ops = spec.operations.clone();
        loop {
            if ops.is_empty() {
                return Err(EvalError::Injection(format!(
                    "no operation fits the {} remaining sentences",
                    pool.len()
                )));
            }
            let pick = WeightedIndex::new(ops.iter().map(|(_, w)| *w))
                .expect("validated weights")
                .sample(&mut rng);
            let op = ops[pick].0;
            let Some(slot) = pool
                .iter()
                .position(|&i| op.applies(&sentences[i].tokens, &vocab))
            else {
                ops.remove(pick);
                continue;
            };
            let i = pool.remove(slot);
            sentences[i].tokens = op.apply(&sentences[i].tokens, &vocab, &mut rng);
            gold.insert(sentences[i].entry.clone());
            break;
        }
    }
    let corrupted = TagCorpus::new(corpus.tier_name.clone(), sentences)?;
    Ok((corrupted, gold))
}

/// Ten ENTRY-tier templates (collapsed FORM/SENSE branches plus small
/// sibling elements) with skewed weights, used for desk-scale runs.
pub fn dictionary_grammar() -> Grammar {
    let t = |tokens: &str, weight: f64| Template {
        tokens: tokens.split(' ').map(str::to_string).collect(),
        weight,
    };
    Grammar {
        templates: vec![
            t("form sense", 30.0),
            t("form sense sense", 20.0),
            t("form pos sense", 12.0),
            t("form form sense", 8.0),
            t("form pos sense sense sense", 7.0),
            t("form etym sense", 6.0),
            t("form pos etym sense sense", 5.0),
            t("form sense xr", 5.0),
            t("form usg sense sense", 4.0),
            t("form pos sense note", 3.0),
        ],
    }
}

/// Distinct tokens of a grammar, sorted.
pub fn grammar_vocabulary(grammar: &Grammar) -> BTreeSet<String> {
    grammar
        .templates
        .iter()
        .flat_map(|t| t.tokens.iter().cloned())
        .collect()
}
