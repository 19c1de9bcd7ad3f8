//! The fixed multi-domain slot schema: 5 domains, 30 slots.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// The in-scope task domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Attraction,
    Hotel,
    Restaurant,
    Taxi,
    Train,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Attraction,
        Domain::Hotel,
        Domain::Restaurant,
        Domain::Taxi,
        Domain::Train,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Attraction => "attraction",
            Domain::Hotel => "hotel",
            Domain::Restaurant => "restaurant",
            Domain::Taxi => "taxi",
            Domain::Train => "train",
        }
    }

    /// The slot holding the entity name, if the domain has one.
    pub fn name_slot(self) -> Option<SlotId> {
        SlotId::all().find(|s| s.domain() == self && s.name() == "name")
    }

    /// Slots belonging to this domain, in catalog order.
    pub fn slots(self) -> impl Iterator<Item = SlotId> {
        SlotId::all().filter(move |s| s.domain() == self)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Domains that exist in MultiWOZ but are excluded from tracking.
pub const EXCLUDED_DOMAINS: [&str; 2] = ["hospital", "police"];

/// Result of classifying a raw domain string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainClass {
    InScope(Domain),
    Excluded,
}

/// Classify a raw domain name against the seven MultiWOZ domains.
pub fn classify_domain(raw: &str) -> Result<DomainClass, Error> {
    let raw = raw.trim().to_lowercase();
    if let Ok(d) = raw.parse::<Domain>() {
        return Ok(DomainClass::InScope(d));
    }
    if EXCLUDED_DOMAINS.contains(&raw.as_str()) {
        return Ok(DomainClass::Excluded);
    }
    Err(Error::UnknownDomain(raw))
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "attraction" => Ok(Domain::Attraction),
            "hotel" => Ok(Domain::Hotel),
            "restaurant" => Ok(Domain::Restaurant),
            "taxi" => Ok(Domain::Taxi),
            "train" => Ok(Domain::Train),
            other => Err(Error::UnknownDomain(other.to_string())),
        }
    }
}

const SLOT_TABLE: [(Domain, &str); 30] = [
    (Domain::Attraction, "area"),
    (Domain::Attraction, "name"),
    (Domain::Attraction, "type"),
    (Domain::Hotel, "area"),
    (Domain::Hotel, "book day"),
    (Domain::Hotel, "book people"),
    (Domain::Hotel, "book stay"),
    (Domain::Hotel, "internet"),
    (Domain::Hotel, "name"),
    (Domain::Hotel, "parking"),
    (Domain::Hotel, "pricerange"),
    (Domain::Hotel, "stars"),
    (Domain::Hotel, "type"),
    (Domain::Restaurant, "area"),
    (Domain::Restaurant, "book day"),
    (Domain::Restaurant, "book people"),
    (Domain::Restaurant, "book time"),
    (Domain::Restaurant, "food"),
    (Domain::Restaurant, "name"),
    (Domain::Restaurant, "pricerange"),
    (Domain::Taxi, "arriveby"),
    (Domain::Taxi, "departure"),
    (Domain::Taxi, "destination"),
    (Domain::Taxi, "leaveat"),
    (Domain::Train, "arriveby"),
    (Domain::Train, "book people"),
    (Domain::Train, "day"),
    (Domain::Train, "departure"),
    (Domain::Train, "destination"),
    (Domain::Train, "leaveat"),
];

/// Number of tracked slots.
pub const SLOT_COUNT: usize = SLOT_TABLE.len();

/// A `<domain>-<slotname>` identifier from the fixed 30-slot schema.
///
/// Stored as an index into the schema table, so every value is valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotId(u8);

impl SlotId {
    pub fn all() -> impl Iterator<Item = SlotId> + Clone {
        (0..SLOT_COUNT as u8).map(SlotId)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(index: usize) -> Option<SlotId> {
        (index < SLOT_COUNT).then_some(SlotId(index as u8))
    }

    pub fn domain(self) -> Domain {
        SLOT_TABLE[self.index()].0
    }

    pub fn name(self) -> &'static str {
        SLOT_TABLE[self.index()].1
    }

    pub fn is_name_slot(self) -> bool {
        self.name() == "name"
    }

    /// Look up a slot by domain and (canonicalized) slot name.
    pub fn lookup(domain: Domain, name: &str) -> Option<SlotId> {
        let name = canonical_slot_name(name);
        SLOT_TABLE
            .iter()
            .position(|&(d, n)| d == domain && n == name)
            .map(|i| SlotId(i as u8))
    }
}

/// Map the spelling variants used across MultiWOZ releases onto the
/// preprocessed slot names (`price range` -> `pricerange`, `semi-` prefix, ...).
pub fn canonical_slot_name(raw: &str) -> String {
    let lowered = raw.trim().to_lowercase();
    let mut name = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    if let Some(rest) = name.strip_prefix("semi-") {
        name = rest.to_string();
    }
    match name.as_str() {
        "price range" => "pricerange".to_string(),
        "leave at" | "leaveat" => "leaveat".to_string(),
        "arrive by" | "arriveby" => "arriveby".to_string(),
        _ => name,
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.domain(), self.name())
    }
}

/// A parsed `domain-slot` key that may belong to an excluded domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKey {
    Tracked(SlotId),
    Excluded,
}

/// Parse a `domain-slotname` key, tolerating excluded domains.
pub fn parse_slot_key(key: &str) -> Result<SlotKey, Error> {
    let (domain, name) = key
        .split_once('-')
        .ok_or_else(|| Error::UnknownSlot(key.to_string()))?;
    match classify_domain(domain)? {
        DomainClass::Excluded => Ok(SlotKey::Excluded),
        DomainClass::InScope(d) => SlotId::lookup(d, name)
            .map(SlotKey::Tracked)
            .ok_or_else(|| Error::UnknownSlot(key.to_string())),
    }
}

impl FromStr for SlotId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse_slot_key(s) {
            Ok(SlotKey::Tracked(id)) => Ok(id),
            _ => Err(Error::UnknownSlot(s.to_string())),
        }
    }
}

impl Serialize for SlotId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
