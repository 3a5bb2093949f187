//! The `treelint` command line: file-based pipeline stages.
//!
//! `extract` → corpus file, `train` → ARPA model, `rank` → ranked TSV,
//! `eval` → precision TSV, `inject` → corrupted corpus + gold list, and
//! `run-all` chaining them from one JSON config. Exit codes: 2 for
//! configuration errors, 3 for input errors, 4 for internal failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{self, CorpusError, TagCorpus};
use crate::evaluation::{self, EvalError, Grammar, InjectionSpec, DEFAULT_CUTOFFS};
use crate::ngram_lm::{self, LmError, Smoothing, DEFAULT_GTMAX};
use crate::scoring::{self, Measure};
use crate::NGramModel;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Config { .. } | CorpusError::Validation { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::Order(_) | LmError::Gtmax(_) | LmError::ContextTooLong { .. } => {
                CliError::Config(e.to_string())
            }
            LmError::EmptyTraining | LmError::Format { .. } => CliError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Cutoff { .. }
            | EvalError::Cutoffs(_)
            | EvalError::Spec(_)
            | EvalError::Grammar(_) => CliError::Config(e.to_string()),
            EvalError::Corpus(inner) => inner.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "treelint", version, about = "Rank XML entries by structural surprise under an n-gram model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flatten entries of one tier into a tag-sentence corpus file.
    Extract(ExtractArgs),
    /// Train an n-gram model and write it in ARPA format.
    Train(TrainArgs),
    /// Score a corpus against a model and write a ranked report.
    Rank(RankArgs),
    /// Precision at rank of a ranked report against a gold list.
    Eval(EvalArgs),
    /// Corrupt a corpus (or a generated one) and write the gold list.
    Inject(InjectArgs),
    /// Run extract, (inject,) train, rank and eval from one JSON config.
    RunAll(RunAllArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub tiers: PathBuf,
    #[arg(long)]
    pub tier: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value = "none")]
    pub smoothing: Smoothing,
    #[arg(long, default_value_t = DEFAULT_GTMAX)]
    pub gtmax: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write raw n-gram counts as `k<TAB>tokens<TAB>count`.
    #[arg(long)]
    pub dump_counts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "logprob")]
    pub measure: Measure,
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ranked: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CUTOFFS)]
    pub cutoffs: Vec<usize>,
    /// Two decimals instead of four.
    #[arg(long)]
    pub paper_style: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long, conflicts_with = "grammar", required_unless_present = "grammar")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    /// Sentences to generate from `--grammar`.
    #[arg(long, default_value_t = 15_000)]
    pub size: usize,
    /// Tier name for generated corpora.
    #[arg(long, default_value = "ENTRY")]
    pub tier: String,
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Corruption weights, e.g. `swap_adjacent=2,delete_token=1`. Defaults to all, equally weighted.
    #[arg(long, value_delimiter = ',')]
    pub ops: Vec<String>,
    #[arg(long)]
    pub out_corpus: PathBuf,
    #[arg(long)]
    pub out_gold: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    #[arg(long)]
    pub config: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn say(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::Internal(e.to_string()))
}

fn read_corpus(path: &Path) -> Result<TagCorpus> {
    TagCorpus::parse_file_text(&read(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn cmd_extract(args: &ExtractArgs, out: &mut dyn Write) -> Result<()> {
    let tiers = corpus::parse_tier_config(&read(&args.tiers)?)?;
    let tier = tiers.iter().find(|t| t.name == args.tier).ok_or_else(|| {
        let names: Vec<&str> = tiers.iter().map(|t| t.name.as_str()).collect();
        CliError::Config(format!(
            "tier {:?} not in {}; available tiers: {}",
            args.tier,
            args.tiers.display(),
            names.join(", ")
        ))
    })?;
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.input.display())))?;
    let corpus = corpus::extract_from_reader(std::io::BufReader::new(file), tier)?;
    write(&args.out, &corpus.to_file_text())?;
    let empty = corpus.sentences().iter().filter(|s| s.is_empty()).count();
    say(
        out,
        format!(
            "tier {}\tentries {}\tunique_tokens {}\tempty {}",
            corpus.tier_name,
            corpus.len(),
            corpus.vocabulary().len(),
            empty
        ),
    )
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let counts = ngram_lm::count_ngrams(&corpus, args.order)?;
    if let Some(path) = &args.dump_counts {
        write(path, &counts.dump_tsv())?;
    }
    let model: NGramModel = match args.smoothing {
        Smoothing::None => ngram_lm::estimate_mle(&counts),
        Smoothing::GoodTuringKatz => {
            // Degenerate-discount warnings are logged by the estimator.
            ngram_lm::estimate_katz(&counts, args.gtmax)?.model
        }
    };
    write(&args.out, &ngram_lm::write_arpa(&model))?;
    say(
        out,
        format!(
            "sentences {}\tunique_tokens {}\tsmoothing {}",
            counts.sentence_count(),
            counts.unique_tokens(),
            args.smoothing
        ),
    )?;
    for (k, n) in model.ngram_counts().iter().enumerate() {
        say(out, format!("ngram {}={}", k + 1, n))?;
    }
    Ok(())
}

pub fn cmd_rank(args: &RankArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let arpa = read(&args.model)?;
    let model: NGramModel = ngram_lm::read_arpa(&arpa)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.model.display())))?;
    if !corpus.vocabulary().iter().any(|t| model.contains_token(t.as_str())) {
        log::warn!("corpus and model vocabularies are disjoint; every event scores the floor");
    }
    let records = scoring::score_corpus(&model, &corpus);
    let report = scoring::rank(
        records,
        args.measure,
        args.measure.direction(),
        ngram_lm::model_id(&arpa),
    )
    .map_err(|e| CliError::Input(e.to_string()))?;
    write(&args.out, &report.to_tsv(args.top))?;
    say(
        out,
        format!(
            "measure {}\tdirection {}\tentries {}\tmodel {}",
            report.measure,
            report.direction,
            report.entries.len(),
            report.model_id
        ),
    )
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let ranked = scoring::parse_ranked_tsv(&read(&args.ranked)?).map_err(|(line, m)| {
        CliError::Input(format!("{}: line {line}: {m}", args.ranked.display()))
    })?;
    let tier = ranked
        .first()
        .map(|e| e.tier_name.clone())
        .ok_or_else(|| CliError::Input(format!("{}: no ranked entries", args.ranked.display())))?;
    let gold = evaluation::load_gold(&read(&args.gold)?, &tier)?;
    let table = evaluation::precision_at(&ranked, &gold, &args.cutoffs)?;
    let decimals = if args.paper_style { 2 } else { 4 };
    let tsv = table.to_tsv(decimals);
    write(&args.out, &tsv)?;
    out.write_all(tsv.as_bytes())
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn parse_ops(ops: &[String]) -> Result<Vec<(evaluation::Corruption, f64)>> {
    ops.iter()
        .map(|spec| {
            let (name, weight) = spec.split_once('=').unwrap_or((spec, "1"));
            let op = name.trim().parse().map_err(CliError::Config)?;
            let weight: f64 = weight
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad weight in {spec:?}")))?;
            Ok((op, weight))
        })
        .collect()
}

pub fn cmd_inject(args: &InjectArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = match (&args.corpus, &args.grammar) {
        (Some(path), _) => read_corpus(path)?,
        (None, Some(path)) => {
            let grammar = Grammar::from_json(&read(path)?)?;
            evaluation::generate_synthetic_corpus(&grammar, args.size, args.seed, &args.tier)?
        }
        (None, None) => return Err(CliError::Config("one of --corpus or --grammar is required".into())),
    };
    let mut spec = InjectionSpec::uniform(args.rate, args.seed);
    if !args.ops.is_empty() {
        spec.operations = parse_ops(&args.ops)?;
    }
    let (corrupted, gold) = evaluation::inject_errors(&corpus, &spec)?;
    write(&args.out_corpus, &corrupted.to_file_text())?;
    write(&args.out_gold, &gold.to_file_text())?;
    say(
        out,
        format!(
            "seed {}\tentries {}\tcorrupted {}",
            args.seed,
            corrupted.len(),
            gold.len()
        ),
    )
}

fn default_order() -> usize {
    2
}
fn default_smoothing() -> String {
    "none".into()
}
fn default_gtmax() -> usize {
    DEFAULT_GTMAX
}
fn default_measure() -> String {
    "logprob".into()
}
fn default_cutoffs() -> Vec<usize> {
    DEFAULT_CUTOFFS.to_vec()
}
fn default_seed() -> u64 {
    42
}

/// One-file configuration for `run-all`. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input_path: PathBuf,
    pub tier_config_path: PathBuf,
    pub tier_name: String,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing: String,
    #[serde(default = "default_gtmax")]
    pub gtmax: usize,
    #[serde(default = "default_measure")]
    pub measure: String,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Corrupt the extracted corpus at this rate and evaluate against the
    /// generated gold list.
    #[serde(default)]
    pub inject_rate: Option<f64>,
    #[serde(default)]
    pub gold_path: Option<PathBuf>,
    pub out_dir: PathBuf,
}

pub fn cmd_run_all(args: &RunAllArgs, out: &mut dyn Write) -> Result<()> {
    let text = read(&args.config)?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let smoothing: Smoothing = cfg.smoothing.parse().map_err(CliError::Config)?;
    let measure: Measure = cfg.measure.parse().map_err(CliError::Config)?;
    if !(1..=ngram_lm::MAX_ORDER).contains(&cfg.order) {
        return Err(LmError::Order(cfg.order).into());
    }
    if cfg.cutoffs.is_empty() || cfg.cutoffs[0] == 0 || !cfg.cutoffs.windows(2).all(|w| w[0] < w[1]) {
        return Err(EvalError::Cutoffs(cfg.cutoffs.clone()).into());
    }
    let dir = resolve(&cfg.out_dir);
    fs::create_dir_all(&dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;

    let corpus_path = dir.join("corpus.txt");
    cmd_extract(
        &ExtractArgs {
            input: resolve(&cfg.input_path),
            tiers: resolve(&cfg.tier_config_path),
            tier: cfg.tier_name.clone(),
            out: corpus_path.clone(),
        },
        out,
    )?;

    let mut gold = cfg.gold_path.as_deref().map(resolve);
    let mut train_corpus = corpus_path;
    if let Some(rate) = cfg.inject_rate {
        let corrupted = dir.join("corrupted.txt");
        let gold_out = dir.join("gold.txt");
        cmd_inject(
            &InjectArgs {
                corpus: Some(train_corpus.clone()),
                grammar: None,
                size: 0,
                tier: cfg.tier_name.clone(),
                rate,
                seed: cfg.seed,
                ops: Vec::new(),
                out_corpus: corrupted.clone(),
                out_gold: gold_out.clone(),
            },
            out,
        )?;
        train_corpus = corrupted;
        gold = Some(gold_out);
    }

    let model = dir.join("model.arpa");
    cmd_train(
        &TrainArgs {
            corpus: train_corpus.clone(),
            order: cfg.order,
            smoothing,
            gtmax: cfg.gtmax,
            out: model.clone(),
            dump_counts: None,
        },
        out,
    )?;
    let ranked = dir.join("ranked.tsv");
    cmd_rank(
        &RankArgs {
            corpus: train_corpus,
            model,
            measure,
            top: None,
            out: ranked.clone(),
        },
        out,
    )?;
    if let Some(gold) = gold {
        cmd_eval(
            &EvalArgs {
                ranked,
                gold,
                cutoffs: cfg.cutoffs.clone(),
                paper_style: false,
                out: dir.join("precision.tsv"),
            },
            out,
        )?;
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => cmd_extract(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Rank(a) => cmd_rank(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Inject(a) => cmd_inject(a, out),
        Command::RunAll(a) => cmd_run_all(a, out),
    }
}
