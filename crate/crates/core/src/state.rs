//! Dialogue states and the CARRYOVER / UPDATE / DELETE / DONTCARE slot operations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kb::normalize_value;
use crate::schema::{parse_slot_key, SlotId, SlotKey, SLOT_COUNT};

pub const NONE_TEXT: &str = "none";
pub const DONTCARE_TEXT: &str = "dontcare";

/// A slot value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Value {
    #[default]
    None,
    DontCare,
    Literal(String),
}

impl Value {
    /// Parse serialized text; `none`/`dontcare` are the sentinels, and the
    /// common MultiWOZ spellings of "don't care" map to `DontCare`.
    pub fn parse(text: &str) -> Value {
        let v = normalize_value(text);
        match v.as_str() {
            "" | NONE_TEXT => Value::None,
            DONTCARE_TEXT | "dont care" | "don't care" | "do n't care" | "do nt care" => {
                Value::DontCare
            }
            _ => Value::Literal(v),
        }
    }

    pub fn literal(&self) -> Option<&str> {
        match self {
            Value::Literal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Value::None)
    }

    pub fn as_text(&self) -> &str {
        match self {
            Value::None => NONE_TEXT,
            Value::DontCare => DONTCARE_TEXT,
            Value::Literal(s) => s,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_text())
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_text())
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(Value::parse(&String::deserialize(deserializer)?))
    }
}

/// A full 30-slot dialogue state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct DialogueState {
    values: [Value; SLOT_COUNT],
}

impl DialogueState {
    /// All slots NONE.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, slot: SlotId) -> &Value {
        &self.values[slot.index()]
    }

    pub fn set(&mut self, slot: SlotId, value: Value) {
        self.values[slot.index()] = value;
    }

    pub fn with(mut self, slot: SlotId, value: Value) -> Self {
        self.set(slot, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (SlotId, &Value)> {
        SlotId::all().zip(self.values.iter())
    }

    /// Slots holding something other than NONE.
    pub fn filled(&self) -> impl Iterator<Item = (SlotId, &Value)> {
        self.iter().filter(|(_, v)| !v.is_none())
    }

    /// Build from `domain-slot` → text pairs. Excluded-domain keys are
    /// dropped; unknown keys are errors. Missing slots are NONE.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut state = DialogueState::empty();
        for (key, value) in pairs {
            if let SlotKey::Tracked(slot) = parse_slot_key(key)? {
                state.set(slot, Value::parse(value));
            }
        }
        Ok(state)
    }
}

impl Serialize for DialogueState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, &Value> = self.iter().map(|(s, v)| (s.to_string(), v)).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DialogueState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, String>::deserialize(deserializer)?;
        DialogueState::from_pairs(map.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(serde::de::Error::custom)
    }
}

/// Per-slot operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SlotOperation {
    Carryover,
    Update(String),
    Delete,
    DontCare,
}

/// Serialized form: `{"op": "update", "value": "..."}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawOperation {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl SlotOperation {
    pub fn from_raw(slot: SlotId, raw: &RawOperation) -> Result<Self> {
        match raw.op.to_lowercase().as_str() {
            "carryover" => Ok(SlotOperation::Carryover),
            "delete" => Ok(SlotOperation::Delete),
            "dontcare" => Ok(SlotOperation::DontCare),
            "update" => match raw.value.as_deref().map(normalize_value) {
                Some(v) if !v.is_empty() => Ok(SlotOperation::Update(v)),
                _ => Err(Error::UpdateWithoutValue(slot.to_string())),
            },
            other => Err(Error::InvalidOperation(format!(
                "`{other}` for slot `{slot}`"
            ))),
        }
    }

    pub fn to_raw(&self) -> RawOperation {
        let (op, value) = match self {
            SlotOperation::Carryover => ("carryover", None),
            SlotOperation::Update(v) => ("update", Some(v.clone())),
            SlotOperation::Delete => ("delete", None),
            SlotOperation::DontCare => ("dontcare", None),
        };
        RawOperation {
            op: op.to_string(),
            value,
        }
    }
}

pub type Operations = BTreeMap<SlotId, SlotOperation>;

/// Parse a serialized `{"domain-slot": {"op": ...}}` map.
pub fn parse_operations(raw: &BTreeMap<String, RawOperation>) -> Result<Operations> {
    let mut ops = Operations::new();
    for (key, op) in raw {
        let slot: SlotId = key.parse()?;
        ops.insert(slot, SlotOperation::from_raw(slot, op)?);
    }
    Ok(ops)
}

/// Apply one operation per slot to `prev`, producing the next state.
pub fn apply_operations(prev: &DialogueState, ops: &Operations) -> Result<DialogueState> {
    let mut next = prev.clone();
    for slot in SlotId::all() {
        let op = ops
            .get(&slot)
            .ok_or_else(|| Error::MissingOperation(slot.to_string()))?;
        match op {
            SlotOperation::Carryover => {}
            SlotOperation::Update(v) => {
                let v = normalize_value(v);
                if v.is_empty() {
                    return Err(Error::UpdateWithoutValue(slot.to_string()));
                }
                next.set(slot, Value::parse(&v));
            }
            SlotOperation::Delete => next.set(slot, Value::None),
            SlotOperation::DontCare => next.set(slot, Value::DontCare),
        }
    }
    Ok(next)
}

/// Oracle labels that turn `prev` into `gold`.
///
/// A DONTCARE → literal change is labelled UPDATE.
pub fn derive_operations(prev: &DialogueState, gold: &DialogueState) -> Operations {
    SlotId::all()
        .map(|slot| {
            let (p, g) = (prev.get(slot), gold.get(slot));
            let op = if p == g {
                SlotOperation::Carryover
            } else {
                match g {
                    Value::DontCare => SlotOperation::DontCare,
                    Value::None => SlotOperation::Delete,
                    Value::Literal(v) => SlotOperation::Update(v.clone()),
                }
            };
            (slot, op)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slot(s: &str) -> SlotId {
        s.parse().unwrap()
    }

    fn all(op: SlotOperation) -> Operations {
        SlotId::all().map(|s| (s, op.clone())).collect()
    }

    #[test]
    fn carryover_is_identity() {
        let prev = DialogueState::empty()
            .with(slot("hotel-area"), Value::parse("east"))
            .with(slot("train-day"), Value::DontCare);
        let next = apply_operations(&prev, &all(SlotOperation::Carryover)).unwrap();
        assert_eq!(next, prev);
        let again = apply_operations(&next, &all(SlotOperation::Carryover)).unwrap();
        assert_eq!(again, prev);
    }

    #[test]
    fn update_sets_value() {
        let prev = DialogueState::empty();
        let mut ops = all(SlotOperation::Carryover);
        ops.insert(
            slot("restaurant-name"),
            SlotOperation::Update("prezzo".into()),
        );
        let next = apply_operations(&prev, &ops).unwrap();
        assert_eq!(
            next.get(slot("restaurant-name")),
            &Value::Literal("prezzo".into())
        );
        assert!(prev.get(slot("restaurant-name")).is_none());
    }

    #[test]
    fn truth_table() {
        let s = slot("hotel-parking");
        let starts = [Value::None, Value::DontCare, Value::Literal("yes".into())];
        let cases = [
            (SlotOperation::Carryover, None),
            (
                SlotOperation::Update("no".into()),
                Some(Value::Literal("no".into())),
            ),
            (SlotOperation::Delete, Some(Value::None)),
            (SlotOperation::DontCare, Some(Value::DontCare)),
        ];
        for start in &starts {
            for (op, expected) in &cases {
                let prev = DialogueState::empty().with(s, start.clone());
                let mut ops = all(SlotOperation::Carryover);
                ops.insert(s, op.clone());
                let next = apply_operations(&prev, &ops).unwrap();
                let want = expected.clone().unwrap_or_else(|| start.clone());
                assert_eq!(next.get(s), &want, "{start:?} + {op:?}");
            }
        }
    }

    #[test]
    fn operation_errors() {
        let prev = DialogueState::empty();
        let mut ops = all(SlotOperation::Carryover);
        ops.remove(&slot("taxi-leaveat"));
        assert!(matches!(
            apply_operations(&prev, &ops),
            Err(Error::MissingOperation(s)) if s == "taxi-leaveat"
        ));
        let mut ops = all(SlotOperation::Carryover);
        ops.insert(slot("taxi-leaveat"), SlotOperation::Update("  ".into()));
        assert!(matches!(
            apply_operations(&prev, &ops),
            Err(Error::UpdateWithoutValue(_))
        ));
        let raw = RawOperation {
            op: "UPDATE".into(),
            value: None,
        };
        assert!(SlotOperation::from_raw(slot("taxi-leaveat"), &raw).is_err());
        let raw = RawOperation {
            op: "swap".into(),
            value: None,
        };
        assert!(SlotOperation::from_raw(slot("taxi-leaveat"), &raw).is_err());
    }

    #[test]
    fn derive_examples() {
        let area = slot("restaurant-area");
        let day = slot("train-day");
        let prev = DialogueState::empty()
            .with(area, Value::parse("centre"))
            .with(day, Value::parse("monday"));
        let gold = DialogueState::empty().with(area, Value::parse("east"));
        let ops = derive_operations(&prev, &gold);
        assert_eq!(ops[&area], SlotOperation::Update("east".into()));
        assert_eq!(ops[&day], SlotOperation::Delete);
        assert!(derive_operations(&gold, &gold)
            .values()
            .all(|o| *o == SlotOperation::Carryover));
        let dc = DialogueState::empty().with(day, Value::DontCare);
        let back = DialogueState::empty().with(day, Value::parse("friday"));
        assert_eq!(
            derive_operations(&dc, &back)[&day],
            SlotOperation::Update("friday".into())
        );
    }

    #[test]
    fn serialization_uses_lowercase_sentinels() {
        let state = DialogueState::empty()
            .with(slot("hotel-internet"), Value::DontCare)
            .with(slot("taxi-leaveat"), Value::parse("12:30"));
        let json = serde_json::to_value(&state).unwrap();
        assert_eq!(json["hotel-internet"], "dontcare");
        assert_eq!(json["hotel-area"], "none");
        assert_eq!(json["taxi-leaveat"], "12:30");
        assert_eq!(json.as_object().unwrap().len(), 30);
        let back: DialogueState = serde_json::from_value(json).unwrap();
        assert_eq!(back, state);
        assert!(serde_json::from_str::<DialogueState>(r#"{"hotel-colour": "red"}"#).is_err());
        let partial: DialogueState =
            serde_json::from_str(r#"{"hotel-area": "North", "police-name": "x"}"#).unwrap();
        assert_eq!(partial.filled().count(), 1);
    }

    #[test]
    fn dontcare_spellings() {
        for s in ["dontcare", "don't care", "do n't care", "Dont Care"] {
            assert_eq!(Value::parse(s), Value::DontCare, "{s}");
        }
        assert_eq!(Value::parse(""), Value::None);
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::None),
            Just(Value::DontCare),
            "[a-z]{1,6}( [a-z]{1,6})?".prop_map(|s| Value::parse(&s)),
        ]
    }

    fn arb_state() -> impl Strategy<Value = DialogueState> {
        proptest::collection::vec(arb_value(), SLOT_COUNT).prop_map(|vals| {
            let mut s = DialogueState::empty();
            for (slot, v) in SlotId::all().zip(vals) {
                s.set(slot, v);
            }
            s
        })
    }

    proptest! {
        #[test]
        fn apply_derive_round_trip(prev in arb_state(), gold in arb_state()) {
            let ops = derive_operations(&prev, &gold);
            prop_assert_eq!(apply_operations(&prev, &ops).unwrap(), gold);
        }

        #[test]
        fn raw_round_trip(prev in arb_state(), gold in arb_state()) {
            let ops = derive_operations(&prev, &gold);
            let raw: BTreeMap<String, RawOperation> =
                ops.iter().map(|(s, o)| (s.to_string(), o.to_raw())).collect();
            prop_assert_eq!(parse_operations(&raw).unwrap(), ops);
        }
    }
}
