//! End-to-end run: match entities, format encoder inputs, post-correct
//! predictions and score them before and after correction.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ingest_corpus, parse_state_records, Corpus, Dialogue, StateRecord};
use crate::correct::{
    correct, correction_impact, CorrectionImpact, CorrectionPolicy, CorrectionReport,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_grouped, render_table, Metrics};
use crate::input::{build_input, render_db_entries, InputSequence, TurnText, DEFAULT_MAX_LEN};
use crate::kb::{EntitySource, KnowledgeBase};
use crate::matcher::{
    build_lexicon, match_utterance, EntityAccumulator, MatchSpan, MatcherIndex, Speakers,
};
use crate::schema::Domain;
use crate::state::DialogueState;
use crate::tokenizer::{patch_vocab, SubwordVocab, Tokenize, WordTokenizer};

/// Words added to the vocabulary by the tokenization fix.
pub const SLOT_WORDS: [&str; 2] = ["pricerange", "dontcare"];

/// Everything a pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ontology: PathBuf,
    pub db_dir: PathBuf,
    pub corpus: PathBuf,
    pub predictions: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub tokenization_fix: bool,
    pub max_len: usize,
    pub speakers: Speakers,
    pub entity_source: EntitySource,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl PipelineConfig {
    pub fn new(
        ontology: impl Into<PathBuf>,
        db_dir: impl Into<PathBuf>,
        corpus: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        PipelineConfig {
            ontology: ontology.into(),
            db_dir: db_dir.into(),
            corpus: corpus.into(),
            predictions: None,
            policy: None,
            vocab: None,
            tokenization_fix: false,
            max_len: DEFAULT_MAX_LEN,
            speakers: Speakers::default(),
            entity_source: EntitySource::default(),
            out_dir: out_dir.into(),
            jobs: 1,
        }
    }

    /// SHA-256 over the run-relevant settings and the bytes of every input
    /// file. Output location and worker count do not contribute.
    pub fn digest(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        let settings = serde_json::json!({
            "tokenization_fix": self.tokenization_fix,
            "max_len": self.max_len,
            "speakers": self.speakers,
            "entity_source": self.entity_source,
        });
        hasher.update(settings.to_string().as_bytes());
        let mut files: Vec<(&str, PathBuf)> = vec![
            ("ontology", self.ontology.clone()),
            ("corpus", self.corpus.clone()),
        ];
        for (label, path) in [
            ("predictions", &self.predictions),
            ("policy", &self.policy),
            ("vocab", &self.vocab),
        ] {
            if let Some(p) = path {
                files.push((label, p.clone()));
            }
        }
        if self.db_dir.is_dir() {
            for domain in Domain::ALL {
                let p = self.db_dir.join(format!("{domain}_db.json"));
                if p.exists() {
                    files.push(("db", p));
                }
            }
        }
        for (label, path) in files {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            hasher.update(label.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

/// Tokenizer selected by configuration.
#[derive(Debug, Clone)]
pub enum TokenizerChoice {
    Words(WordTokenizer),
    Subword(SubwordVocab),
}

impl Tokenize for TokenizerChoice {
    fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            TokenizerChoice::Words(t) => t.tokenize(text),
            TokenizerChoice::Subword(v) => v.tokenize(text),
        }
    }
}

pub fn load_tokenizer(vocab: Option<&Path>, fix: bool) -> Result<TokenizerChoice> {
    let Some(path) = vocab else {
        return Ok(TokenizerChoice::Words(WordTokenizer));
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let vocab = SubwordVocab::from_vocab_text(&text)?;
    Ok(TokenizerChoice::Subword(if fix {
        patch_vocab(&vocab, &SLOT_WORDS)
    } else {
        vocab
    }))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    ingest_corpus(&read_text(path)?)
}

/// A match annotated with where it was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnMatch {
    pub dialogue_id: String,
    pub turn: usize,
    pub speaker: String,
    #[serde(flatten)]
    pub span: MatchSpan,
}

/// Match one turn, returning spans tagged with the speaker.
fn match_turn(
    index: &MatcherIndex,
    system: &str,
    user: &str,
    speakers: Speakers,
) -> Vec<(&'static str, MatchSpan)> {
    let mut out = Vec::new();
    if speakers == Speakers::Both {
        out.extend(
            match_utterance(index, system)
                .into_iter()
                .map(|s| ("system", s)),
        );
    }
    out.extend(
        match_utterance(index, user)
            .into_iter()
            .map(|s| ("user", s)),
    );
    out
}

/// Entity mentions for every turn of every dialogue.
pub fn match_corpus(
    index: &MatcherIndex,
    dialogues: &[Dialogue],
    speakers: Speakers,
) -> Vec<TurnMatch> {
    dialogues
        .par_iter()
        .map(|d| {
            d.turns
                .iter()
                .flat_map(|t| {
                    match_turn(index, &t.system, &t.user, speakers)
                        .into_iter()
                        .map(|(speaker, span)| TurnMatch {
                            dialogue_id: d.id.clone(),
                            turn: t.index,
                            speaker: speaker.to_string(),
                            span,
                        })
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

/// Formatted encoder input for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnInput {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(flatten)]
    pub input: InputSequence,
}

/// Encoder inputs for a dialogue. The previous state at turn `t` is the gold
/// state of turn `t - 1`; `[DB]` entries accumulate over turns `0..=t`.
pub fn format_dialogue(
    dialogue: &Dialogue,
    index: &MatcherIndex,
    speakers: Speakers,
    max_len: usize,
    tok: &(impl Tokenize + ?Sized),
) -> Result<Vec<TurnInput>> {
    let mut acc = EntityAccumulator::new();
    let mut out = Vec::with_capacity(dialogue.turns.len());
    let empty_state = DialogueState::empty();
    let empty_turn = TurnText::default();
    let mut prev: Option<(TurnText, &DialogueState)> = None;
    for t in &dialogue.turns {
        let spans: Vec<MatchSpan> = match_turn(index, &t.system, &t.user, speakers)
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        acc.extend(&spans, t.index);
        let cur = TurnText::new(t.system.clone(), t.user.clone());
        let (prev_text, prev_state) = match &prev {
            Some((text, state)) => (text, *state),
            None => (&empty_turn, &empty_state),
        };
        let db = render_db_entries(&acc, tok);
        let input = build_input(prev_text, &cur, prev_state, &db, max_len, tok)?;
        out.push(TurnInput {
            dialogue_id: dialogue.id.clone(),
            turn: t.index,
            input,
        });
        prev = Some((cur, &t.state));
    }
    Ok(out)
}

pub fn format_corpus(
    dialogues: &[Dialogue],
    index: &MatcherIndex,
    speakers: Speakers,
    max_len: usize,
    tok: &(impl Tokenize + Sync + ?Sized),
) -> Result<Vec<TurnInput>> {
    let per: Vec<Vec<TurnInput>> = dialogues
        .par_iter()
        .map(|d| format_dialogue(d, index, speakers, max_len, tok))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Predictions aligned to the corpus: one state per gold turn, grouped by dialogue.
pub fn align_predictions(
    dialogues: &[Dialogue],
    records: &[StateRecord],
) -> Result<Vec<Vec<DialogueState>>> {
    let mut by_key: BTreeMap<(&str, usize), &DialogueState> = BTreeMap::new();
    for r in records {
        if by_key
            .insert((r.dialogue_id.as_str(), r.turn), &r.state)
            .is_some()
        {
            return Err(Error::InvalidDocument(format!(
                "duplicate prediction for `{}` turn {}",
                r.dialogue_id, r.turn
            )));
        }
    }
    let mut out = Vec::with_capacity(dialogues.len());
    for d in dialogues {
        let mut states = Vec::with_capacity(d.turns.len());
        for t in &d.turns {
            let state = by_key.remove(&(d.id.as_str(), t.index)).ok_or_else(|| {
                Error::InvalidDocument(format!("no prediction for `{}` turn {}", d.id, t.index))
            })?;
            states.push(state.clone());
        }
        out.push(states);
    }
    if let Some(((id, turn), _)) = by_key.into_iter().next() {
        return Err(Error::InvalidDocument(format!(
            "prediction for `{id}` turn {turn} has no gold turn"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnCorrection {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(flatten)]
    pub report: CorrectionReport,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionTotals {
    pub conflicts: usize,
    pub applied: usize,
    pub skipped: usize,
}

/// Correct every predicted state; returns corrected states (same grouping)
/// and the non-empty per-turn reports in corpus order.
pub fn correct_grouped(
    dialogues: &[Dialogue],
    preds: &[Vec<DialogueState>],
    kb: &KnowledgeBase,
    policy: &CorrectionPolicy,
) -> (Vec<Vec<DialogueState>>, Vec<TurnCorrection>) {
    let per: Vec<(Vec<DialogueState>, Vec<TurnCorrection>)> = dialogues
        .par_iter()
        .zip(preds.par_iter())
        .map(|(d, states)| {
            let mut fixed = Vec::with_capacity(states.len());
            let mut reports = Vec::new();
            for (t, s) in d.turns.iter().zip(states) {
                let (next, report) = correct(s, kb, policy);
                if !report.is_empty() {
                    reports.push(TurnCorrection {
                        dialogue_id: d.id.clone(),
                        turn: t.index,
                        report,
                    });
                }
                fixed.push(next);
            }
            (fixed, reports)
        })
        .collect();
    let mut states = Vec::with_capacity(per.len());
    let mut reports = Vec::new();
    for (s, r) in per {
        states.push(s);
        reports.extend(r);
    }
    (states, reports)
}

pub fn totals(reports: &[TurnCorrection]) -> CorrectionTotals {
    reports
        .iter()
        .fold(CorrectionTotals::default(), |mut t, r| {
            t.conflicts += r.report.conflicts.len();
            t.applied += r.report.applied.len();
            t.skipped += r.report.skipped.len();
            t
        })
}

pub fn gold_grouped(dialogues: &[Dialogue]) -> Vec<Vec<DialogueState>> {
    dialogues
        .iter()
        .map(|d| d.turns.iter().map(|t| t.state.clone()).collect())
        .collect()
}

fn flatten(groups: &[Vec<DialogueState>]) -> Vec<DialogueState> {
    groups.iter().flatten().cloned().collect()
}

pub fn records_from_grouped(
    dialogues: &[Dialogue],
    groups: &[Vec<DialogueState>],
) -> Vec<StateRecord> {
    dialogues
        .iter()
        .zip(groups)
        .flat_map(|(d, states)| {
            d.turns.iter().zip(states).map(|(t, s)| StateRecord {
                dialogue_id: d.id.clone(),
                turn: t.index,
                state: s.clone(),
            })
        })
        .collect()
}

pub fn metrics_for(preds: &[Vec<DialogueState>], golds: &[Vec<DialogueState>]) -> Result<Metrics> {
    let groups: Vec<(Vec<DialogueState>, Vec<DialogueState>)> =
        preds.iter().cloned().zip(golds.iter().cloned()).collect();
    evaluate_grouped(&groups)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReportFile {
    pub config_digest: String,
    pub policy: CorrectionPolicy,
    pub totals: CorrectionTotals,
    pub impact: CorrectionImpact,
    pub turns: Vec<TurnCorrection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_digest: String,
    pub note: String,
    pub before: Metrics,
    pub after: Metrics,
}

pub const METRICS_NOTE: &str =
    "slot accuracy counts NONE cells; slot F1 is micro-averaged over non-NONE (turn, slot, value) triples";

/// Everything a run produced, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub digest: String,
    pub matches: Vec<TurnMatch>,
    pub inputs: Vec<TurnInput>,
    pub corrected: Vec<StateRecord>,
    pub report: CorrectionReportFile,
    pub metrics: MetricsReport,
    pub kb_skipped_rows: usize,
    pub dropped_dialogues: usize,
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("records always serialize") + "\n")
        .collect()
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports always serialize");
    text.push('\n');
    text
}

/// Compute every artifact without touching the output directory.
pub fn execute(config: &PipelineConfig) -> Result<RunOutput> {
    let digest = config.digest().map_err(|e| e.in_stage("config"))?;
    let (kb, kb_skipped_rows) =
        KnowledgeBase::load(&config.ontology, &config.db_dir, config.entity_source)
            .map_err(|e| e.in_stage("kb"))?;
    let policy = match &config.policy {
        Some(p) => CorrectionPolicy::load(p).map_err(|e| e.in_stage("policy"))?,
        None => CorrectionPolicy::default(),
    };
    let tok = load_tokenizer(config.vocab.as_deref(), config.tokenization_fix)
        .map_err(|e| e.in_stage("tokenizer"))?;
    let corpus = load_corpus(&config.corpus).map_err(|e| e.in_stage("corpus"))?;
    let dialogues = &corpus.dialogues;
    let index = build_lexicon(&kb).map_err(|e| e.in_stage("match"))?;

    let matches = match_corpus(&index, dialogues, config.speakers);
    let inputs = format_corpus(dialogues, &index, config.speakers, config.max_len, &tok)
        .map_err(|e| e.in_stage("format"))?;

    let gold = gold_grouped(dialogues);
    let before = match &config.predictions {
        Some(p) => {
            let text = read_text(p).map_err(|e| e.in_stage("correct"))?;
            let records = parse_state_records(&text).map_err(|e| e.in_stage("correct"))?;
            align_predictions(dialogues, &records).map_err(|e| e.in_stage("correct"))?
        }
        None => gold.clone(),
    };
    let (after, reports) = correct_grouped(dialogues, &before, &kb, &policy);
    let impact = correction_impact(&flatten(&before), &flatten(&after), &flatten(&gold))
        .map_err(|e| e.in_stage("correct"))?;

    let metrics = MetricsReport {
        config_digest: digest.clone(),
        note: METRICS_NOTE.to_string(),
        before: metrics_for(&before, &gold).map_err(|e| e.in_stage("evaluate"))?,
        after: metrics_for(&after, &gold).map_err(|e| e.in_stage("evaluate"))?,
    };
    let report = CorrectionReportFile {
        config_digest: digest.clone(),
        policy,
        totals: totals(&reports),
        impact,
        turns: reports,
    };
    Ok(RunOutput {
        digest,
        matches,
        inputs,
        corrected: records_from_grouped(dialogues, &after),
        report,
        metrics,
        kb_skipped_rows,
        dropped_dialogues: corpus.dropped,
    })
}

/// Write `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub const ARTIFACTS: [&str; 6] = [
    "matches.jsonl",
    "inputs.jsonl",
    "corrected.jsonl",
    "correction_report.json",
    "metrics.json",
    "metrics.txt",
];

/// Run every stage and write the artifacts into `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidDocument(e.to_string()).in_stage("config"))?;
    let out = pool.install(|| execute(config))?;

    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).in_stage("write"))?;
    let table = render_table(&[
        ("before", &out.metrics.before),
        ("after", &out.metrics.after),
    ]);
    let contents = [
        to_jsonl(&out.matches),
        to_jsonl(&out.inputs),
        to_jsonl(&out.corrected),
        pretty(&out.report),
        pretty(&out.metrics),
        format!("# config digest {}\n{table}", out.digest),
    ];
    // Stage everything first so a failure leaves no partial artifact set.
    let mut staged = Vec::with_capacity(ARTIFACTS.len());
    for (name, text) in ARTIFACTS.iter().zip(&contents) {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .map_err(|e| Error::io(dir, e).in_stage("write"))?;
        tmp.write_all(text.as_bytes())
            .map_err(|e| Error::io(dir.join(name), e).in_stage("write"))?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(&path)
            .map_err(|e| Error::io(&path, e.error).in_stage("write"))?;
    }
    Ok(out)
}
