//! JSON-in/JSON-out handle for embedding the toolkit in other runtimes.
//!
//! Every call takes and returns plain JSON text, so a foreign-language
//! wrapper only has to move strings across the boundary. Each [`Engine`]
//! owns its own entity accumulator; handles never share dialogue state.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correct::{correct, CorrectionPolicy, CorrectionReport};
use crate::error::Result;
use crate::eval::evaluate;
use crate::input::{build_input, render_db_entries, TurnText, DEFAULT_MAX_LEN};
use crate::kb::{EntitySource, KnowledgeBase};
use crate::matcher::{
    build_lexicon, match_utterance, AccEntry, EntityAccumulator, MatchSpan, MatcherIndex,
};
use crate::state::DialogueState;
use crate::tokenizer::{SubwordVocab, Tokenize};

pub struct Engine {
    kb: KnowledgeBase,
    index: MatcherIndex,
    policy: CorrectionPolicy,
    vocab: SubwordVocab,
    acc: EntityAccumulator,
    turn: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResponse {
    pub turn: usize,
    pub matches: Vec<MatchSpan>,
    pub accumulated: Vec<AccEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectResponse {
    pub state: DialogueState,
    pub report: CorrectionReport,
}

#[derive(Deserialize)]
struct FormatRequest {
    #[serde(default)]
    previous: TurnText,
    current: TurnText,
    #[serde(default)]
    previous_state: BTreeMap<String, String>,
    #[serde(default)]
    max_len: Option<usize>,
}

/// Parse a `{"domain-slot": "value"}` object, naming any unknown key.
pub fn state_from_json(text: &str) -> Result<DialogueState> {
    let pairs: BTreeMap<String, String> = serde_json::from_str(text)?;
    state_from_map(&pairs)
}

fn state_from_map(pairs: &BTreeMap<String, String>) -> Result<DialogueState> {
    DialogueState::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
}

impl Engine {
    pub fn load(ontology: &Path, db_dir: &Path, policy: Option<&Path>) -> Result<Self> {
        let (kb, _) = KnowledgeBase::load(ontology, db_dir, EntitySource::default())?;
        let policy = match policy {
            Some(p) => CorrectionPolicy::load(p)?,
            None => CorrectionPolicy::default(),
        };
        Engine::new(kb, policy)
    }

    pub fn new(kb: KnowledgeBase, policy: CorrectionPolicy) -> Result<Self> {
        policy.validate()?;
        let index = build_lexicon(&kb)?;
        Ok(Engine {
            kb,
            index,
            policy,
            vocab: SubwordVocab::fixture(),
            acc: EntityAccumulator::new(),
            turn: 0,
        })
    }

    pub fn with_vocab(mut self, vocab: SubwordVocab) -> Self {
        self.vocab = vocab;
        self
    }

    /// Start a new dialogue.
    pub fn reset(&mut self) {
        self.acc = EntityAccumulator::new();
        self.turn = 0;
    }

    /// Match one user utterance, fold it into this handle's accumulator and
    /// return the spans plus the accumulated entities as JSON.
    pub fn match_json(&mut self, utterance: &str) -> String {
        let matches = match_utterance(&self.index, utterance);
        self.acc.extend(&matches, self.turn);
        let response = MatchResponse {
            turn: self.turn,
            matches,
            accumulated: self.acc.entries().cloned().collect(),
        };
        self.turn += 1;
        serde_json::to_string(&response).expect("responses always serialize")
    }

    /// Post-correct a state given as a JSON object.
    pub fn correct_json(&self, state_json: &str) -> Result<String> {
        let state = state_from_json(state_json)?;
        let (state, report) = correct(&state, &self.kb, &self.policy);
        Ok(
            serde_json::to_string(&CorrectResponse::from((state, report)))
                .expect("responses always serialize"),
        )
    }

    /// Build the encoder input for a turn, using this handle's accumulator for
    /// the `[DB]` segments.
    pub fn format_json(&self, request_json: &str) -> Result<String> {
        let req: FormatRequest = serde_json::from_str(request_json)?;
        let prev_state = state_from_map(&req.previous_state)?;
        let db = render_db_entries(&self.acc, &self.vocab);
        let input = build_input(
            &req.previous,
            &req.current,
            &prev_state,
            &db,
            req.max_len.unwrap_or(DEFAULT_MAX_LEN),
            &self.vocab,
        )?;
        Ok(input.to_json())
    }

    pub fn tokenize_json(&self, text: &str) -> String {
        serde_json::to_string(&self.vocab.tokenize(text)).expect("tokens always serialize")
    }
}

impl From<(DialogueState, CorrectionReport)> for CorrectResponse {
    fn from((state, report): (DialogueState, CorrectionReport)) -> Self {
        CorrectResponse { state, report }
    }
}

/// Score two JSON arrays of state objects against each other.
pub fn evaluate_json(predictions_json: &str, gold_json: &str) -> Result<String> {
    let parse = |text: &str| -> Result<Vec<DialogueState>> {
        let maps: Vec<BTreeMap<String, String>> = serde_json::from_str(text)?;
        maps.iter().map(state_from_map).collect()
    };
    let metrics = evaluate(&parse(predictions_json)?, &parse(gold_json)?)?;
    Ok(serde_json::to_string(&metrics).expect("metrics always serialize"))
}
