//! `onto-dst` command-line front end.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use onto_dst::corpus::{
    convert_trade, corpus_to_json, emit_fixture, off_catalog_values, parse_state_records,
    state_records_to_jsonl,
};
use onto_dst::correct::CorrectionPolicy;
use onto_dst::eval::render_table;
use onto_dst::kb::{EntitySource, KnowledgeBase};
use onto_dst::matcher::{build_lexicon, Speakers};
use onto_dst::pipeline::{
    self, align_predictions, correct_grouped, format_corpus, gold_grouped, load_corpus,
    load_tokenizer, match_corpus, metrics_for, records_from_grouped, to_jsonl, write_atomic,
    PipelineConfig,
};
use onto_dst::tokenizer::{
    check_intuitive, patch_vocab, wordpiece_tokenize, SubwordVocab, FIXTURE_VOCAB,
};

#[derive(Parser)]
#[command(
    name = "onto-dst",
    version,
    about = "Ontology-grounded dialogue state tracking toolkit"
)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpeakersArg {
    User,
    Both,
}

impl From<SpeakersArg> for Speakers {
    fn from(s: SpeakersArg) -> Self {
        match s {
            SpeakersArg::User => Speakers::User,
            SpeakersArg::Both => Speakers::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Db,
    Ontology,
    Both,
}

impl From<SourceArg> for EntitySource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Db => EntitySource::Db,
            SourceArg::Ontology => EntitySource::Ontology,
            SourceArg::Both => EntitySource::Both,
        }
    }
}

#[derive(Args)]
struct KbArgs {
    #[arg(long)]
    ontology: PathBuf,
    /// Directory holding `<domain>_db.json` files.
    #[arg(long)]
    db_dir: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    entity_source: SourceArg,
}

impl KbArgs {
    fn load(&self) -> Result<KnowledgeBase> {
        let (kb, skipped) =
            KnowledgeBase::load(&self.ontology, &self.db_dir, self.entity_source.into())
                .context("loading knowledge base")?;
        if skipped > 0 {
            log::warn!("skipped {skipped} database rows without a name");
        }
        for issue in kb.validate() {
            log::warn!(
                "{} has {} `{}` outside the ontology",
                issue.entity,
                issue.slot,
                issue.value
            );
        }
        Ok(kb)
    }
}

#[derive(Args)]
struct TokArgs {
    /// WordPiece vocabulary; whitespace tokenization when omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Add `pricerange` and `dontcare` to the vocabulary as whole tokens.
    #[arg(long)]
    tokenization_fix: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus, optionally converting or extracting dialogues.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Read the TRADE-style layout instead of the native one.
        #[arg(long)]
        trade: bool,
        /// Check values against this ontology.
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Keep only these dialogue ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        emit_fixture: Vec<String>,
        /// Write the normalized corpus here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find knowledge-base entities mentioned in each turn.
    Match {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "user")]
        speakers: SpeakersArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build encoder input sequences with `[DB]` segments.
    FormatInput {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "user")]
        speakers: SpeakersArg,
        #[arg(long, default_value_t = 384)]
        max_len: usize,
        #[command(flatten)]
        tok: TokArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overwrite predicted attribute slots that contradict the knowledge base.
    Correct {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-turn correction report (JSON lines).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score predictions against gold states.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// A second prediction file to score side by side.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Show how words from stdin segment, one word per line.
    TokenizeCheck {
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        tokenization_fix: bool,
    },
    /// Run every stage and write all artifacts to `--out-dir`.
    Run {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 384)]
        max_len: usize,
        #[arg(long, value_enum, default_value = "user")]
        speakers: SpeakersArg,
        #[command(flatten)]
        tok: TokArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            write_atomic(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_policy(path: Option<&Path>) -> Result<CorrectionPolicy> {
    Ok(match path {
        Some(p) => CorrectionPolicy::load(p).context("loading correction policy")?,
        None => CorrectionPolicy::default(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            corpus,
            trade,
            ontology,
            emit_fixture: ids,
            out,
        } => {
            let text = read(&corpus)?;
            let parsed = if trade {
                convert_trade(&text)
            } else {
                onto_dst::corpus::ingest_corpus(&text)
            }
            .with_context(|| format!("parsing {}", corpus.display()))?;
            eprintln!(
                "{} dialogues, {} turns, {} dropped",
                parsed.dialogues.len(),
                parsed
                    .dialogues
                    .iter()
                    .map(|d| d.turns.len())
                    .sum::<usize>(),
                parsed.dropped
            );
            if let Some(path) = ontology {
                let catalog = onto_dst::kb::parse_ontology(&read(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?;
                for flag in off_catalog_values(&parsed.dialogues, &catalog) {
                    log::warn!(
                        "{} turn {}: {} = `{}` is not an ontology value",
                        flag.dialogue,
                        flag.turn,
                        flag.slot,
                        flag.value
                    );
                }
            }
            let body = if ids.is_empty() {
                corpus_to_json(&parsed.dialogues)
            } else {
                let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
                emit_fixture(&parsed.dialogues, &ids)?
            };
            if out.is_some() || trade || !ids.is_empty() {
                emit(out.as_deref(), &body)?;
            }
        }
        Command::Match {
            kb,
            corpus,
            speakers,
            out,
        } => {
            let kb = kb.load()?;
            let index = build_lexicon(&kb)?;
            let corpus = load_corpus(&corpus)?;
            let matches = match_corpus(&index, &corpus.dialogues, speakers.into());
            emit(out.as_deref(), &to_jsonl(&matches))?;
        }
        Command::FormatInput {
            kb,
            corpus,
            speakers,
            max_len,
            tok,
            out,
        } => {
            let kb = kb.load()?;
            let index = build_lexicon(&kb)?;
            let tokenizer = load_tokenizer(tok.vocab.as_deref(), tok.tokenization_fix)?;
            let corpus = load_corpus(&corpus)?;
            let inputs = format_corpus(
                &corpus.dialogues,
                &index,
                speakers.into(),
                max_len,
                &tokenizer,
            )?;
            emit(out.as_deref(), &to_jsonl(&inputs))?;
        }
        Command::Correct {
            kb,
            corpus,
            predictions,
            policy,
            out,
            report,
        } => {
            let kb = kb.load()?;
            let policy = load_policy(policy.as_deref())?;
            let corpus = load_corpus(&corpus)?;
            let records = parse_state_records(&read(&predictions)?)
                .with_context(|| format!("parsing {}", predictions.display()))?;
            let preds = align_predictions(&corpus.dialogues, &records)?;
            let (fixed, reports) = correct_grouped(&corpus.dialogues, &preds, &kb, &policy);
            let totals = pipeline::totals(&reports);
            eprintln!(
                "{} conflicts, {} corrected, {} skipped",
                totals.conflicts, totals.applied, totals.skipped
            );
            emit(
                out.as_deref(),
                &state_records_to_jsonl(&records_from_grouped(&corpus.dialogues, &fixed)),
            )?;
            if let Some(path) = report {
                write_atomic(&path, &to_jsonl(&reports))?;
            }
        }
        Command::Evaluate {
            corpus,
            predictions,
            compare,
        } => {
            let corpus = load_corpus(&corpus)?;
            let gold = gold_grouped(&corpus.dialogues);
            let mut rows = Vec::new();
            for path in std::iter::once(&predictions).chain(compare.as_ref()) {
                let records = parse_state_records(&read(path)?)
                    .with_context(|| format!("parsing {}", path.display()))?;
                let preds = align_predictions(&corpus.dialogues, &records)?;
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                rows.push((label, metrics_for(&preds, &gold)?));
            }
            let table: Vec<(&str, &_)> = rows.iter().map(|(l, m)| (l.as_str(), m)).collect();
            print!("{}", render_table(&table));
        }
        Command::TokenizeCheck {
            vocab,
            tokenization_fix,
        } => {
            let mut v = match vocab {
                Some(path) => SubwordVocab::from_vocab_text(&read(&path)?)?,
                None => SubwordVocab::from_vocab_text(FIXTURE_VOCAB)?,
            };
            if tokenization_fix {
                v = patch_vocab(&v, &pipeline::SLOT_WORDS);
            }
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for line in io::stdin().lock().lines() {
                for word in line?.split_whitespace() {
                    let word = word.to_lowercase();
                    let pieces = wordpiece_tokenize(&v, &word)?;
                    let verdict = if check_intuitive(&v, &word) {
                        "ok"
                    } else {
                        "split"
                    };
                    writeln!(out, "{word}\t{}\t{verdict}", pieces.join(" "))?;
                }
            }
        }
        Command::Run {
            kb,
            corpus,
            predictions,
            policy,
            max_len,
            speakers,
            tok,
            out_dir,
        } => {
            let mut config = PipelineConfig::new(kb.ontology, kb.db_dir, corpus, out_dir);
            config.predictions = predictions;
            config.policy = policy;
            config.max_len = max_len;
            config.speakers = speakers.into();
            config.entity_source = kb.entity_source.into();
            config.vocab = tok.vocab;
            config.tokenization_fix = tok.tokenization_fix;
            config.jobs = if cli.jobs == 0 {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            } else {
                cli.jobs
            };
            let out = pipeline::run_pipeline(&config)?;
            print!(
                "{}",
                render_table(&[
                    ("before", &out.metrics.before),
                    ("after", &out.metrics.after)
                ])
            );
            let t = &out.report.totals;
            let impact = out.report.impact.total();
            eprintln!(
                "{} corrections applied ({} fixed, {} broken); artifacts in {}",
                t.applied,
                impact.fixed,
                impact.broken,
                config.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ONTO_DST_LOG", "warn")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            log::warn!("could not size the worker pool: {err}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
