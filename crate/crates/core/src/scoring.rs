//! Sentence scores (LOGPROB, PPW, PPWET) and anomaly rankings.
//!
//! LOGPROB and PPWET score the padded sentence `<s> t1 .. tN </s>`; the
//! events are t1..tN and `</s>`. PPW ignores the padding and scores only
//! events between real tokens.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{EntryRef, TagCorpus, TagSentence};
use crate::ngram_lm::{LanguageModel, BOS_ID, EOS_ID};
use crate::scalar::Prob;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("{measure} must be ranked in {expected} order, not {got}")]
    Direction {
        measure: Measure,
        expected: Direction,
        got: Direction,
    },
    #[error("nothing to rank")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    LogProb,
    Ppw,
    Ppwet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

impl Measure {
    /// Most anomalous first: lowest LOGPROB, highest perplexity.
    pub fn direction(self) -> Direction {
        match self {
            Measure::LogProb => Direction::Ascending,
            Measure::Ppw | Measure::Ppwet => Direction::Descending,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::LogProb => "logprob",
            Measure::Ppw => "ppw",
            Measure::Ppwet => "ppwet",
        })
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "logprob" => Ok(Measure::LogProb),
            "ppw" => Ok(Measure::Ppw),
            "ppwet" => Ok(Measure::Ppwet),
            _ => Err(format!("unknown measure {s:?}, expected logprob, ppw or ppwet")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Ascending => "ascending",
            Direction::Descending => "descending",
        })
    }
}

/// Scores of one entry. `None` marks a measure with no events (UNSCORABLE).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord<F: Prob> {
    pub entry: EntryRef,
    pub n_tokens: usize,
    pub logprob: F,
    pub ppw: Option<F>,
    pub ppwet: Option<F>,
}

impl<F: Prob> ScoreRecord<F> {
    /// The value ranked under `measure`. Empty sentences are unscorable
    /// under every measure.
    pub fn value(&self, measure: Measure) -> Option<F> {
        match measure {
            Measure::LogProb => (self.n_tokens > 0).then_some(self.logprob),
            Measure::Ppw => self.ppw,
            Measure::Ppwet => self.ppwet,
        }
    }
}

fn ids<F: Prob>(model: &LanguageModel<F>, sentence: &TagSentence) -> Vec<u32> {
    let words: Vec<&str> = sentence.tokens.iter().map(|t| t.as_str()).collect();
    model.ids(&words)
}

/// Sum of event log probabilities for the events at `positions` of `seq`,
/// each conditioned on at most `order - 1` preceding items of `seq`.
fn sum_events<F: Prob>(
    model: &LanguageModel<F>,
    seq: &[u32],
    positions: std::ops::Range<usize>,
) -> F {
    let history = model.order() - 1;
    positions.fold(F::zero(), |acc, i| {
        let start = i.saturating_sub(history);
        acc + model.logprob_ids(&seq[start..i], seq[i])
    })
}

fn padded_logprob<F: Prob>(model: &LanguageModel<F>, tokens: &[u32]) -> F {
    let mut padded = Vec::with_capacity(tokens.len() + 2);
    padded.push(BOS_ID);
    padded.extend_from_slice(tokens);
    padded.push(EOS_ID);
    sum_events(model, &padded, 1..padded.len())
}

/// log10 probability of `<s> t1 .. tN </s>`: events t1..tN and `</s>`.
pub fn score_logprob<F: Prob>(model: &LanguageModel<F>, sentence: &TagSentence) -> F {
    padded_logprob(model, &ids(model, sentence))
}

/// 10^(−LOGPROB/(N+1)); `None` for an empty sentence.
pub fn score_ppwet<F: Prob>(model: &LanguageModel<F>, sentence: &TagSentence) -> Option<F> {
    ppwet_from(score_logprob(model, sentence), sentence.len())
}

fn ppwet_from<F: Prob>(logprob: F, n_tokens: usize) -> Option<F> {
    (n_tokens > 0).then(|| exp10_unfloored(-logprob / F::of((n_tokens + 1) as f64)))
}

fn exp10_unfloored<F: Prob>(x: F) -> F {
    F::of(10.0).powf(x)
}

/// Perplexity over events among real tokens only: t2..tN for order ≥ 2,
/// t1..tN for unigram models. `None` when there are no such events.
pub fn score_ppw<F: Prob>(model: &LanguageModel<F>, sentence: &TagSentence) -> Option<F> {
    ppw_ids(model, &ids(model, sentence))
}

fn ppw_ids<F: Prob>(model: &LanguageModel<F>, tokens: &[u32]) -> Option<F> {
    let first = if model.order() == 1 { 0 } else { 1 };
    let events = tokens.len().saturating_sub(first);
    if events == 0 {
        return None;
    }
    let total = sum_events(model, tokens, first..tokens.len());
    Some(exp10_unfloored(-total / F::of(events as f64)))
}

/// All three measures for one sentence.
pub fn score_sentence<F: Prob>(model: &LanguageModel<F>, sentence: &TagSentence) -> ScoreRecord<F> {
    let tokens = ids(model, sentence);
    let logprob = padded_logprob(model, &tokens);
    ScoreRecord {
        entry: sentence.entry.clone(),
        n_tokens: tokens.len(),
        logprob,
        ppw: ppw_ids(model, &tokens),
        ppwet: ppwet_from(logprob, tokens.len()),
    }
}

/// Scores every sentence, in corpus order. Work is spread over the rayon
/// pool; the result does not depend on the number of threads.
pub fn score_corpus<F: Prob>(model: &LanguageModel<F>, corpus: &TagCorpus) -> Vec<ScoreRecord<F>> {
    corpus
        .sentences()
        .par_iter()
        .map(|s| score_sentence(model, s))
        .collect()
}

/// Entries in decreasing order of anomalousness under one measure.
#[derive(Debug, Clone)]
pub struct RankedReport<F: Prob> {
    pub measure: Measure,
    pub direction: Direction,
    pub entries: Vec<ScoreRecord<F>>,
    pub model_id: String,
}

/// Sorts records by `measure` in its fixed direction. Ties go to the lower
/// ordinal; unscorable records come last, in ordinal order.
pub fn rank<F: Prob>(
    mut records: Vec<ScoreRecord<F>>,
    measure: Measure,
    direction: Direction,
    model_id: impl Into<String>,
) -> Result<RankedReport<F>, ScoringError> {
    if direction != measure.direction() {
        return Err(ScoringError::Direction {
            measure,
            expected: measure.direction(),
            got: direction,
        });
    }
    if records.is_empty() {
        return Err(ScoringError::Empty);
    }
    records.sort_by(|a, b| {
        let by_value = match (a.value(measure), b.value(measure)) {
            (Some(x), Some(y)) => {
                let ord = x.as_f64().total_cmp(&y.as_f64());
                match direction {
                    Direction::Ascending => ord,
                    Direction::Descending => ord.reverse(),
                }
            }
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_value.then(a.entry.ordinal.cmp(&b.entry.ordinal))
    });
    Ok(RankedReport {
        measure,
        direction,
        entries: records,
        model_id: model_id.into(),
    })
}

pub const REPORT_HEADER: &str = "rank\tentry_ref\tn_tokens\tlogprob\tppw\tppwet";

fn fmt_value<F: Prob>(v: Option<F>) -> String {
    match v {
        Some(v) => {
            let v = v.as_f64();
            format!("{:.7}", if v == 0.0 { 0.0 } else { v })
        }
        None => "NA".to_string(),
    }
}

impl<F: Prob> RankedReport<F> {
    pub fn entry_refs(&self) -> Vec<EntryRef> {
        self.entries.iter().map(|r| r.entry.clone()).collect()
    }

    /// TSV report with 1-based ranks, optionally truncated to the top rows.
    pub fn to_tsv(&self, top: Option<usize>) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        let rows = top.unwrap_or(self.entries.len()).min(self.entries.len());
        for (i, r) in self.entries[..rows].iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                i + 1,
                r.entry,
                r.n_tokens,
                fmt_value(Some(r.logprob)),
                fmt_value(r.ppw),
                fmt_value(r.ppwet),
            ));
        }
        out
    }
}

/// Reads the entry order back from a ranked TSV report.
pub fn parse_ranked_tsv(text: &str) -> Result<Vec<EntryRef>, (usize, String)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == REPORT_HEADER => {}
        _ => return Err((1, format!("expected header `{REPORT_HEADER}`"))),
    }
    let mut refs = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let rank = fields.next().and_then(|r| r.parse::<usize>().ok());
        if rank != Some(refs.len() + 1) {
            return Err((i + 1, format!("expected rank {}", refs.len() + 1)));
        }
        let entry = fields
            .next()
            .ok_or_else(|| (i + 1, "missing entry_ref".to_string()))?
            .parse::<EntryRef>()
            .map_err(|e| (i + 1, e))?;
        refs.push(entry);
    }
    Ok(refs)
}
