//! Dialogue corpora: the internal JSON schema, a converter for the
//! TRADE-style preprocessed layout, fixture emission and per-turn state files.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::kb::SlotCatalog;
use crate::schema::{classify_domain, parse_slot_key, Domain, DomainClass, SlotId, SlotKey};
use crate::state::{DialogueState, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    #[serde(default)]
    pub system: String,
    pub user: String,
    pub state: DialogueState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    #[serde(default)]
    pub domains: Vec<Domain>,
    pub turns: Vec<Turn>,
}

/// Result of ingesting a corpus file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    /// Dialogues dropped because they only touch excluded domains.
    pub dropped: usize,
}

#[derive(Debug, Deserialize)]
struct RawTurn {
    index: usize,
    #[serde(default)]
    system: String,
    user: String,
    #[serde(default)]
    state: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct RawDialogue {
    id: String,
    #[serde(default)]
    domains: Vec<String>,
    turns: Vec<RawTurn>,
}

fn build(raw: Vec<RawDialogue>) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut ids = BTreeSet::new();
    for d in raw {
        if !ids.insert(d.id.clone()) {
            return Err(Error::InvalidDocument(format!(
                "duplicate dialogue id `{}`",
                d.id
            )));
        }
        if d.turns.is_empty() {
            return Err(Error::InvalidDocument(format!(
                "dialogue `{}` has no turns",
                d.id
            )));
        }
        let mut domains = BTreeSet::new();
        let mut excluded = false;
        for name in &d.domains {
            match classify_domain(name)? {
                DomainClass::InScope(dom) => {
                    domains.insert(dom);
                }
                DomainClass::Excluded => excluded = true,
            }
        }
        let mut turns = Vec::with_capacity(d.turns.len());
        for (pos, t) in d.turns.into_iter().enumerate() {
            if t.index != pos {
                return Err(Error::InvalidDocument(format!(
                    "dialogue `{}`: turn index {} at position {pos}",
                    d.id, t.index
                )));
            }
            for (key, value) in &t.state {
                let filled = !Value::parse(value).is_none();
                match parse_slot_key(key)? {
                    _ if !filled => {}
                    SlotKey::Tracked(slot) => {
                        domains.insert(slot.domain());
                    }
                    SlotKey::Excluded => excluded = true,
                }
            }
            let state =
                DialogueState::from_pairs(t.state.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
            turns.push(Turn {
                index: t.index,
                system: t.system,
                user: t.user,
                state,
            });
        }
        if domains.is_empty() && excluded {
            corpus.dropped += 1;
            continue;
        }
        corpus.dialogues.push(Dialogue {
            id: d.id,
            domains: domains.into_iter().collect(),
            turns,
        });
    }
    corpus.dialogues.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(corpus)
}

/// Parse the internal corpus format.
pub fn ingest_corpus(document: &str) -> Result<Corpus> {
    let raw: Vec<RawDialogue> = serde_json::from_str(document)?;
    build(raw)
}

/// Convert the TRADE-style preprocessed layout (`dialogue_idx`, `dialogue`
/// with `system_transcript` / `transcript` / `belief_state`).
pub fn convert_trade(document: &str) -> Result<Corpus> {
    let parsed: Json = serde_json::from_str(document)?;
    let Json::Array(items) = parsed else {
        return Err(Error::InvalidDocument(
            "expected an array of dialogues".into(),
        ));
    };
    let field = |obj: &Json, key: &str| -> Result<Json> {
        obj.get(key)
            .cloned()
            .ok_or_else(|| Error::InvalidDocument(format!("missing field `{key}`")))
    };
    let mut raw = Vec::with_capacity(items.len());
    for item in &items {
        let id = field(item, "dialogue_idx")?
            .as_str()
            .ok_or_else(|| Error::InvalidDocument("`dialogue_idx` must be a string".into()))?
            .to_string();
        let domains = item
            .get("domains")
            .and_then(Json::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(Json::as_str)
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        let Json::Array(turns) = field(item, "dialogue")? else {
            return Err(Error::InvalidDocument(format!(
                "`dialogue` of `{id}` must be an array"
            )));
        };
        let mut raw_turns = Vec::with_capacity(turns.len());
        for (pos, turn) in turns.iter().enumerate() {
            let text = |key: &str| {
                turn.get(key)
                    .and_then(Json::as_str)
                    .unwrap_or("")
                    .to_string()
            };
            let mut state = BTreeMap::new();
            for belief in turn
                .get("belief_state")
                .and_then(Json::as_array)
                .into_iter()
                .flatten()
            {
                for pair in belief
                    .get("slots")
                    .and_then(Json::as_array)
                    .into_iter()
                    .flatten()
                {
                    if let Some([k, v]) = pair.as_array().map(Vec::as_slice) {
                        if let (Some(k), Some(v)) = (k.as_str(), v.as_str()) {
                            state.insert(k.to_string(), v.to_string());
                        }
                    }
                }
            }
            raw_turns.push(RawTurn {
                index: turn
                    .get("turn_idx")
                    .and_then(Json::as_u64)
                    .map(|i| i as usize)
                    .unwrap_or(pos),
                system: text("system_transcript"),
                user: text("transcript"),
                state,
            });
        }
        raw.push(RawDialogue {
            id,
            domains,
            turns: raw_turns,
        });
    }
    build(raw)
}

pub fn corpus_to_json(dialogues: &[Dialogue]) -> String {
    let mut text = serde_json::to_string_pretty(dialogues).expect("dialogues always serialize");
    text.push('\n');
    text
}

/// Pretty-printed subset of `dialogues`, sorted by id.
pub fn emit_fixture(dialogues: &[Dialogue], ids: &[&str]) -> Result<String> {
    let by_id: BTreeMap<&str, &Dialogue> = dialogues.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut selected = BTreeMap::new();
    for id in ids {
        let d = by_id
            .get(id)
            .ok_or_else(|| Error::UnknownDialogue(id.to_string()))?;
        selected.insert(*id, (*d).clone());
    }
    Ok(corpus_to_json(&selected.into_values().collect::<Vec<_>>()))
}

/// A gold value that is not among the catalog candidates for its slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValueFlag {
    pub dialogue: String,
    pub turn: usize,
    pub slot: SlotId,
    pub value: String,
}

pub fn off_catalog_values(dialogues: &[Dialogue], catalog: &SlotCatalog) -> Vec<ValueFlag> {
    let mut flags = Vec::new();
    for d in dialogues {
        for t in &d.turns {
            for (slot, value) in t.state.iter() {
                if let Value::Literal(v) = value {
                    if !catalog.admits(slot, v) {
                        flags.push(ValueFlag {
                            dialogue: d.id.clone(),
                            turn: t.index,
                            slot,
                            value: v.clone(),
                        });
                    }
                }
            }
        }
    }
    flags
}

/// One line of a prediction or gold state file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRecord {
    pub dialogue_id: String,
    pub turn: usize,
    pub state: DialogueState,
}

pub fn gold_records(dialogues: &[Dialogue]) -> Vec<StateRecord> {
    dialogues
        .iter()
        .flat_map(|d| {
            d.turns.iter().map(|t| StateRecord {
                dialogue_id: d.id.clone(),
                turn: t.index,
                state: t.state.clone(),
            })
        })
        .collect()
}

pub fn parse_state_records(text: &str) -> Result<Vec<StateRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: StateRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn state_records_to_jsonl(records: &[StateRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records always serialize") + "\n")
        .collect()
}

/// Group records by dialogue id, each group ordered by turn.
pub fn group_by_dialogue(
    records: &[StateRecord],
) -> BTreeMap<String, BTreeMap<usize, DialogueState>> {
    let mut out: BTreeMap<String, BTreeMap<usize, DialogueState>> = BTreeMap::new();
    for r in records {
        out.entry(r.dialogue_id.clone())
            .or_default()
            .insert(r.turn, r.state.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"[
      {"id": "b.json", "turns": [
        {"index": 0, "system": "", "user": "i need a cheap restaurant", "state": {"restaurant-pricerange": "cheap"}},
        {"index": 1, "system": "how about nandos?", "user": "sure, and a train on monday",
         "state": {"restaurant-pricerange": "cheap", "restaurant-name": "nandos", "train-day": "monday"}}
      ]},
      {"id": "a.json", "turns": [{"index": 0, "user": "hello", "state": {}}]},
      {"id": "h.json", "domains": ["hospital"], "turns": [
        {"index": 0, "user": "i need a hospital", "state": {"hospital-department": "acute medicine"}}
      ]}
    ]"#;

    #[test]
    fn ingest_filters_and_sorts() {
        let corpus = ingest_corpus(SMALL).unwrap();
        assert_eq!(corpus.dropped, 1);
        let ids: Vec<&str> = corpus.dialogues.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a.json", "b.json"]);
        let a = &corpus.dialogues[0];
        assert_eq!(a.turns[0].state, DialogueState::empty());
        let b = &corpus.dialogues[1];
        assert_eq!(b.domains, vec![Domain::Restaurant, Domain::Train]);
        let day: SlotId = "train-day".parse().unwrap();
        assert_eq!(b.turns[1].state.get(day).as_text(), "monday");
    }

    #[test]
    fn round_trip() {
        let corpus = ingest_corpus(SMALL).unwrap();
        let again = ingest_corpus(&corpus_to_json(&corpus.dialogues)).unwrap();
        assert_eq!(again.dialogues, corpus.dialogues);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(ingest_corpus("[{"), Err(Error::Parse { .. })));
        let gap = r#"[{"id": "x", "turns": [{"index": 1, "user": "hi"}]}]"#;
        assert!(matches!(ingest_corpus(gap), Err(Error::InvalidDocument(_))));
        let empty = r#"[{"id": "x", "turns": []}]"#;
        assert!(ingest_corpus(empty).is_err());
        let unknown = r#"[{"id": "x", "turns": [{"index": 0, "user": "hi", "state": {"bus-day": "monday"}}]}]"#;
        assert!(matches!(
            ingest_corpus(unknown),
            Err(Error::UnknownDomain(_))
        ));
        let dup = r#"[{"id": "x", "turns": [{"index": 0, "user": "a"}]}, {"id": "x", "turns": [{"index": 0, "user": "b"}]}]"#;
        assert!(ingest_corpus(dup).is_err());
    }

    #[test]
    fn fixtures_are_sorted_and_deterministic() {
        let corpus = ingest_corpus(SMALL).unwrap();
        let one = emit_fixture(&corpus.dialogues, &["b.json"]).unwrap();
        assert_eq!(ingest_corpus(&one).unwrap().dialogues.len(), 1);
        let shuffled = emit_fixture(&corpus.dialogues, &["b.json", "a.json"]).unwrap();
        let ordered = emit_fixture(&corpus.dialogues, &["a.json", "b.json"]).unwrap();
        assert_eq!(shuffled, ordered);
        assert!(matches!(
            emit_fixture(&corpus.dialogues, &["zzz"]),
            Err(Error::UnknownDialogue(_))
        ));
    }

    #[test]
    fn trade_layout_conversion() {
        let doc = r#"[{
          "dialogue_idx": "PMUL0001.json",
          "domains": ["hotel", "train"],
          "dialogue": [
            {"turn_idx": 0, "system_transcript": "", "transcript": "i need a place to stay in the east",
             "belief_state": [{"slots": [["hotel-area", "east"]], "act": "inform"}]},
            {"turn_idx": 1, "system_transcript": "any price range?", "transcript": "i do n't care",
             "belief_state": [{"slots": [["hotel-area", "east"]], "act": "inform"},
                              {"slots": [["hotel-pricerange", "do n't care"]], "act": "inform"}]}
          ]
        }, {
          "dialogue_idx": "SNG0001.json",
          "domains": ["police"],
          "dialogue": [{"turn_idx": 0, "system_transcript": "", "transcript": "police please", "belief_state": []}]
        }]"#;
        let corpus = convert_trade(doc).unwrap();
        assert_eq!(corpus.dropped, 1);
        let d = &corpus.dialogues[0];
        assert_eq!(d.turns[1].user, "i do n't care");
        let price: SlotId = "hotel-pricerange".parse().unwrap();
        assert_eq!(d.turns[1].state.get(price), &Value::DontCare);
    }

    #[test]
    fn off_catalog_flags() {
        let corpus = ingest_corpus(SMALL).unwrap();
        let mut catalog = SlotCatalog::empty();
        let price: SlotId = "restaurant-pricerange".parse().unwrap();
        catalog.insert(price, "moderate");
        let flags = off_catalog_values(&corpus.dialogues, &catalog);
        assert_eq!(flags.len(), 2);
        assert!(flags.iter().all(|f| f.value == "cheap"));
    }

    #[test]
    fn state_record_lines() {
        let corpus = ingest_corpus(SMALL).unwrap();
        let recs = gold_records(&corpus.dialogues);
        assert_eq!(recs.len(), 3);
        let text = state_records_to_jsonl(&recs);
        assert_eq!(parse_state_records(&text).unwrap(), recs);
        let err = parse_state_records("\n{bad").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let grouped = group_by_dialogue(&recs);
        assert_eq!(grouped["b.json"].len(), 2);
    }
}
