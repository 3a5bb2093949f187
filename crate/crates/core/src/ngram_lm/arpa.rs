use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{Key, LanguageModel, LmError, Result, Smoothing, Vocab, DEFAULT_GTMAX, MAX_ORDER};
use crate::scalar::{floor, Prob};

/// Fixed 7-decimal rendering; negative zero prints as `0.0000000`.
fn fmt_log<F: Prob>(x: F) -> String {
    let x = x.as_f64();
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.7}")
}

/// Serialises a model in ARPA format. Sections are in ascending order and
/// n-grams within a section are sorted by token sequence.
pub fn write_arpa<F: Prob>(model: &LanguageModel<F>) -> String {
    let mut out = String::from("\n\\data\\\n");
    for (k, n) in model.ngram_counts().iter().enumerate() {
        let _ = writeln!(out, "ngram {}={}", k + 1, n);
    }
    for k in 1..=model.order {
        let _ = write!(out, "\n\\{k}-grams:\n");
        for (words, lp, bo) in model.entries(k) {
            out.push_str(&fmt_log(lp));
            out.push('\t');
            out.push_str(&words.join(" "));
            if let Some(bo) = bo {
                out.push('\t');
                out.push_str(&fmt_log(bo));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

/// Hex SHA-256 of the model text, used to tag ranked reports.
pub fn model_id(arpa_text: &str) -> String {
    Sha256::digest(arpa_text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn format_err(line: usize, message: impl Into<String>) -> LmError {
    LmError::Format {
        line,
        message: message.into(),
    }
}

/// Parses a log10 value; `-inf` maps to the floor. Probabilities must be
/// ≤ 0, back-off weights may be positive.
fn parse_log<F: Prob>(s: &str, line: usize, is_prob: bool) -> Result<F> {
    let v: f64 = s
        .parse()
        .map_err(|_| format_err(line, format!("unparsable number {s:?}")))?;
    if v == f64::NEG_INFINITY {
        return Ok(floor());
    }
    if !v.is_finite() || (is_prob && v > 0.0) {
        return Err(format_err(line, format!("log value {s} out of range")));
    }
    Ok(F::of(v.max(floor::<f64>())))
}

/// Parses ARPA text. Fields may be separated by tabs or spaces. A model
/// with any back-off weight is treated as Katz-smoothed.
pub fn read_arpa<F: Prob>(text: &str) -> Result<LanguageModel<F>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

    // Header.
    let mut last_line = 0;
    loop {
        let Some((no, line)) = lines.next() else {
            return Err(format_err(last_line, "missing \\data\\ header"));
        };
        last_line = no;
        if line.trim() == "\\data\\" {
            break;
        }
    }
    let mut declared: Vec<usize> = Vec::new();
    let mut pending = None;
    for (no, line) in lines.by_ref() {
        last_line = no;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("ngram ") {
            let (k, n) = rest
                .split_once('=')
                .ok_or_else(|| format_err(no, "expected `ngram k=COUNT`"))?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| format_err(no, format!("bad order {k:?}")))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| format_err(no, format!("bad count {n:?}")))?;
            if k != declared.len() + 1 || k > MAX_ORDER {
                return Err(format_err(no, format!("unexpected declaration for order {k}")));
            }
            declared.push(n);
        } else {
            pending = Some((no, line.to_string()));
            break;
        }
    }
    if declared.is_empty() {
        return Err(format_err(last_line, "no `ngram k=COUNT` declarations"));
    }
    let order = declared.len();

    let mut vocab = Vocab::default();
    let mut logprob: Vec<HashMap<Key, F>> = vec![HashMap::new(); order];
    let mut backoff: Vec<HashMap<Key, F>> = vec![HashMap::new(); order.saturating_sub(1)];
    let mut section: Option<(usize, usize)> = None; // (k, header line)
    let mut next_section = 1;
    let mut ended = false;

    let close = |section: Option<(usize, usize)>, logprob: &[HashMap<Key, F>]| -> Result<()> {
        if let Some((k, header)) = section {
            let found = logprob[k - 1].len();
            if found != declared[k - 1] {
                return Err(format_err(
                    header,
                    format!(
                        "\\{k}-grams: section lists {found} n-grams but the header declares {}",
                        declared[k - 1]
                    ),
                ));
            }
        }
        Ok(())
    };

    for (no, line) in pending.into_iter().chain(lines.map(|(n, l)| (n, l.to_string()))) {
        last_line = no;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(format_err(no, "content after \\end\\"));
        }
        if line == "\\end\\" {
            close(section.take(), &logprob)?;
            ended = true;
            continue;
        }
        if let Some(k) = line
            .strip_prefix('\\')
            .and_then(|s| s.strip_suffix("-grams:"))
        {
            close(section.take(), &logprob)?;
            let k: usize = k
                .parse()
                .map_err(|_| format_err(no, format!("bad section header {line:?}")))?;
            if k != next_section || k > order {
                return Err(format_err(no, format!("expected \\{next_section}-grams: section")));
            }
            next_section += 1;
            section = Some((k, no));
            continue;
        }
        let Some((k, _)) = section else {
            return Err(format_err(no, "n-gram line outside a section"));
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bo = match fields.len() {
            n if n == k + 1 => None,
            n if n == k + 2 && k < order => Some(parse_log::<F>(fields[k + 1], no, false)?),
            _ => {
                return Err(format_err(
                    no,
                    format!("expected a log probability and {k} tokens"),
                ))
            }
        };
        let lp = parse_log::<F>(fields[0], no, true)?;
        let key: Key = fields[1..=k].iter().map(|w| vocab.intern(w)).collect();
        if let Some(bo) = bo {
            backoff[k - 1].insert(key.clone(), bo);
        }
        if logprob[k - 1].insert(key, lp).is_some() {
            return Err(format_err(no, "duplicate n-gram"));
        }
    }
    if !ended {
        return Err(format_err(last_line, "missing \\end\\"));
    }
    if next_section <= order {
        return Err(format_err(
            last_line,
            format!("missing \\{next_section}-grams: section"),
        ));
    }
    let smoothing = if backoff.iter().any(|b| !b.is_empty()) {
        Smoothing::GoodTuringKatz
    } else {
        Smoothing::None
    };
    Ok(LanguageModel::from_tables(
        order,
        vocab,
        logprob,
        backoff,
        smoothing,
        DEFAULT_GTMAX,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TagCorpus;
    use crate::ngram_lm::{count_ngrams, estimate_katz, estimate_mle};

    fn toy_mle() -> LanguageModel<f64> {
        let corpus = TagCorpus::from_texts("T", &["A B C", "A B D"]).unwrap();
        estimate_mle(&count_ngrams(&corpus, 2).unwrap())
    }

    #[test]
    fn smallest_model() {
        let corpus = TagCorpus::from_texts("T", &["A"]).unwrap();
        let m: LanguageModel<f64> = estimate_mle(&count_ngrams(&corpus, 1).unwrap());
        let text = write_arpa(&m);
        assert_eq!(
            text,
            "\n\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3010300\t</s>\n-0.3010300\tA\n\n\\end\\\n"
        );
    }

    #[test]
    fn toy_layout() {
        let text = write_arpa(&toy_mle());
        assert!(text.contains("ngram 1=5\nngram 2=6\n"));
        assert!(text.contains("\n0.0000000\t<s> A\n"));
        assert!(text.contains("\n-0.3010300\tB C\n"));
        assert!(!text.contains('\r'));
        assert!(!text.contains("-0.0000000"));
    }

    #[test]
    fn backoff_columns_only_below_top_order() {
        let texts = ["a", "b", "c", "d", "e", "f", "f", "g", "g", "h", "h", "h"];
        let corpus = TagCorpus::from_texts("T", &texts).unwrap();
        let m = estimate_katz::<f64>(&count_ngrams(&corpus, 2).unwrap(), 2)
            .unwrap()
            .model;
        let text = write_arpa(&m);
        let mut section = 0;
        for line in text.lines() {
            if let Some(k) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                section = k.parse().unwrap();
                continue;
            }
            if section == 0 || line.is_empty() || line.starts_with('\\') {
                continue;
            }
            let cols = line.split('\t').count();
            if section == 2 {
                assert_eq!(cols, 2, "{line}");
            }
            if line.ends_with("\t<s>") {
                panic!("<s> unigram should carry a back-off weight: {line}");
            }
        }
        assert!(text.contains("-99.0000000\t<s>\t"));
        let back: LanguageModel<f64> = read_arpa(&text).unwrap();
        assert_eq!(back.smoothing(), Smoothing::GoodTuringKatz);
    }

    #[test]
    fn round_trip() {
        let m = toy_mle();
        let back: LanguageModel<f64> = read_arpa(&write_arpa(&m)).unwrap();
        assert_eq!(back.order(), 2);
        assert_eq!(back.smoothing(), Smoothing::None);
        for k in 1..=2 {
            let a = m.entries(k);
            let b = back.entries(k);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.0, y.0);
                assert!((x.1 - y.1).abs() <= 5e-8);
            }
        }
        assert_eq!(write_arpa(&back), write_arpa(&m));
        assert_eq!(back.cond_logprob(&["A"], "C").unwrap(), -99.0);
    }

    #[test]
    fn count_mismatch_reports_section_line() {
        let text = "\\data\\\nngram 1=2\nngram 2=5\n\n\\1-grams:\n-0.3\tA\n-0.3\t</s>\n\n\\2-grams:\n0\t<s> A\n-0.3\tA </s>\n-0.3\tA A\n-0.3\tA B\n\n\\end\\\n";
        match read_arpa::<f64>(text) {
            Err(LmError::Format { line, message }) => {
                assert_eq!(line, 9, "{message}");
                assert!(message.contains("2-grams"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn format_errors() {
        let missing_end = "\\data\\\nngram 1=1\n\\1-grams:\n-0.5\tA\n";
        assert!(matches!(read_arpa::<f64>(missing_end), Err(LmError::Format { .. })));
        let bad_line = "\\data\\\nngram 1=1\n\\1-grams:\nxyz\tA\n\\end\\\n";
        match read_arpa::<f64>(bad_line) {
            Err(LmError::Format { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(read_arpa::<f64>("").is_err());
        let positive = "\\data\\\nngram 1=1\n\\1-grams:\n0.5\tA\n\\end\\\n";
        assert!(read_arpa::<f64>(positive).is_err());
    }

    #[test]
    fn hand_written_unigram_file() {
        let text = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.25 A\n-0.25 </s>\n\n\\end\\\n";
        let m: LanguageModel<f64> = read_arpa(text).unwrap();
        assert_eq!(m.cond_logprob(&[], "A").unwrap(), -0.25);
        assert_eq!(m.cond_logprob(&[], "B").unwrap(), -99.0);
    }

    #[test]
    fn model_id_is_stable() {
        let text = write_arpa(&toy_mle());
        assert_eq!(model_id(&text), model_id(&text));
        assert_eq!(model_id(&text).len(), 64);
        assert_ne!(model_id(&text), model_id(""));
    }
}
