//! Encoder input layout: `[CLS] prev [SEP] cur [SEP]`, then one segment per
//! slot, then the accumulated `[DB] <entity> - <domain>` entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::EntityAccumulator;
use crate::schema::SlotId;
use crate::state::{DialogueState, Value};
use crate::tokenizer::Tokenize;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const DB: &str = "[DB]";
pub const SLOT: &str = "[SLOT]";
pub const NULL: &str = "[NULL]";
/// Joins the system and user utterances of one turn.
pub const TURN_JOINER: &str = ";";
pub const DEFAULT_MAX_LEN: usize = 384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Special,
    UtterancePrev,
    UtteranceCur,
    SlotValue,
    DbEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub tokens: Vec<String>,
    pub uses_position_embeddings: bool,
}

impl Segment {
    pub fn new(kind: SegmentKind, tokens: Vec<String>) -> Self {
        Segment {
            kind,
            tokens,
            uses_position_embeddings: kind != SegmentKind::DbEntry,
        }
    }

    fn special(token: &str) -> Self {
        Segment::new(SegmentKind::Special, vec![token.to_string()])
    }
}

/// System and user utterances of one turn.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnText {
    pub system: String,
    pub user: String,
}

impl TurnText {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        TurnText {
            system: system.into(),
            user: user.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSequence {
    pub segments: Vec<Segment>,
    pub total_len: usize,
}

impl InputSequence {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.segments
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
    }

    pub fn segments_of(&self, kind: SegmentKind) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("input sequences always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One `[DB]` segment per accumulated entity, in first-seen order.
pub fn render_db_entries(acc: &EntityAccumulator, tok: &(impl Tokenize + ?Sized)) -> Vec<Segment> {
    acc.entries()
        .map(|e| {
            let mut tokens = vec![DB.to_string()];
            tokens.extend(tok.tokenize(&e.entity));
            tokens.push("-".to_string());
            tokens.extend(tok.tokenize(e.domain.as_str()));
            Segment::new(SegmentKind::DbEntry, tokens)
        })
        .collect()
}

fn turn_tokens(turn: &TurnText, tok: &(impl Tokenize + ?Sized)) -> Vec<String> {
    let sys = tok.tokenize(&turn.system);
    let user = tok.tokenize(&turn.user);
    let mut out = sys;
    if !out.is_empty() && !user.is_empty() {
        out.push(TURN_JOINER.to_string());
    }
    out.extend(user);
    out
}

/// `[SLOT] <domain> - <slotname> - <value>`, with `[NULL]` for unfilled slots.
pub fn slot_segment(slot: SlotId, value: &Value, tok: &(impl Tokenize + ?Sized)) -> Segment {
    let mut tokens = vec![SLOT.to_string()];
    tokens.extend(tok.tokenize(slot.domain().as_str()));
    tokens.push("-".to_string());
    tokens.extend(tok.tokenize(slot.name()));
    tokens.push("-".to_string());
    match value {
        Value::None => tokens.push(NULL.to_string()),
        other => tokens.extend(tok.tokenize(other.as_text())),
    }
    Segment::new(SegmentKind::SlotValue, tokens)
}

/// Assemble the encoder input for one turn.
///
/// When the sequence is too long, previous-turn tokens are dropped from the
/// front first, then current-turn tokens. Slot and `[DB]` segments are never
/// truncated; if they alone exceed `max_len` the call fails.
pub fn build_input(
    prev: &TurnText,
    cur: &TurnText,
    prev_state: &DialogueState,
    db: &[Segment],
    max_len: usize,
    tok: &(impl Tokenize + ?Sized),
) -> Result<InputSequence> {
    let slots: Vec<Segment> = prev_state
        .iter()
        .map(|(slot, value)| slot_segment(slot, value, tok))
        .collect();
    let fixed = 3
        + slots.iter().map(|s| s.tokens.len()).sum::<usize>()
        + db.iter().map(|s| s.tokens.len()).sum::<usize>();
    if fixed > max_len {
        return Err(Error::MaxLenTooSmall {
            max_len,
            required: fixed,
        });
    }

    let mut prev_tokens = turn_tokens(prev, tok);
    let mut cur_tokens = turn_tokens(cur, tok);
    let budget = max_len - fixed;
    let overflow = (prev_tokens.len() + cur_tokens.len()).saturating_sub(budget);
    if overflow > 0 {
        let from_prev = overflow.min(prev_tokens.len());
        prev_tokens.drain(..from_prev);
        cur_tokens.drain(..overflow - from_prev);
    }

    let mut segments = Vec::with_capacity(5 + slots.len() + db.len());
    segments.push(Segment::special(CLS));
    segments.push(Segment::new(SegmentKind::UtterancePrev, prev_tokens));
    segments.push(Segment::special(SEP));
    segments.push(Segment::new(SegmentKind::UtteranceCur, cur_tokens));
    segments.push(Segment::special(SEP));
    segments.extend(slots);
    segments.extend(db.iter().cloned());
    let total_len = segments.iter().map(|s| s.tokens.len()).sum();
    Ok(InputSequence {
        segments,
        total_len,
    })
}
