//! Ontology slot catalog and per-domain entity databases.
//!
//! The ontology file maps `domain-slotname` keys to arrays of candidate
//! values. Entity databases are JSON arrays of objects carrying a `name`
//! field plus attribute fields. Both are normalized on the way in so that
//! utterance text, database entries and predicted states compare as plain
//! strings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::schema::{parse_slot_key, Domain, SlotId, SlotKey};

/// Lowercase, map punctuation to spaces, collapse whitespace and trim.
pub fn normalize_surface(text: &str) -> String {
    let mapped: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalization for slot values: lowercase, collapse whitespace and trim.
///
/// Punctuation is kept so that times such as `12:30` survive.
pub fn normalize_value(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Slots whose values form a closed set in the ontology.
pub fn is_categorical(slot: SlotId) -> bool {
    match slot.name() {
        "name" | "book time" | "leaveat" | "arriveby" => false,
        "departure" | "destination" => slot.domain() != Domain::Taxi,
        _ => true,
    }
}

/// The 30 tracked slots and their candidate values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotCatalog {
    candidates: BTreeMap<SlotId, BTreeSet<String>>,
}

impl SlotCatalog {
    /// A catalog with every slot present and no candidate values.
    pub fn empty() -> Self {
        SlotCatalog {
            candidates: SlotId::all().map(|s| (s, BTreeSet::new())).collect(),
        }
    }

    pub fn slots(&self) -> impl Iterator<Item = SlotId> + '_ {
        self.candidates.keys().copied()
    }

    pub fn candidates(&self, slot: SlotId) -> &BTreeSet<String> {
        &self.candidates[&slot]
    }

    pub fn insert(&mut self, slot: SlotId, value: &str) {
        let value = normalize_value(value);
        if !value.is_empty() {
            self.candidates.entry(slot).or_default().insert(value);
        }
    }

    /// Whether `value` is acceptable for `slot`. Slots without a closed
    /// candidate list accept anything.
    pub fn admits(&self, slot: SlotId, value: &str) -> bool {
        let set = self.candidates(slot);
        !is_categorical(slot) || set.is_empty() || set.contains(value)
    }

    /// Categorical slots that have no candidate values.
    pub fn missing_categorical(&self) -> Vec<SlotId> {
        self.slots()
            .filter(|&s| is_categorical(s) && self.candidates(s).is_empty())
            .collect()
    }
}

/// Parse an ontology document (`{"domain-slot": [values...]}`).
///
/// Hospital and police entries are dropped; other unknown domains are errors.
pub fn parse_ontology(document: &str) -> Result<SlotCatalog> {
    if document.trim().is_empty() {
        return Err(Error::InvalidDocument("empty ontology document".into()));
    }
    let parsed: Json = serde_json::from_str(document)?;
    let Json::Object(map) = parsed else {
        return Err(Error::InvalidDocument(
            "ontology must be a JSON object".into(),
        ));
    };
    if map.is_empty() {
        return Err(Error::InvalidDocument("ontology has no slots".into()));
    }
    let mut catalog = SlotCatalog::empty();
    for (key, values) in &map {
        let slot = match parse_slot_key(key)? {
            SlotKey::Excluded => continue,
            SlotKey::Tracked(slot) => slot,
        };
        let Json::Array(values) = values else {
            return Err(Error::InvalidDocument(format!(
                "values of `{key}` must be an array"
            )));
        };
        for v in values {
            let Json::String(v) = v else {
                return Err(Error::InvalidDocument(format!(
                    "non-string value under `{key}`"
                )));
            };
            catalog.insert(slot, v);
        }
    }
    Ok(catalog)
}

/// A named entity with its domain and attribute values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub name: String,
    pub domain: Domain,
    pub attributes: BTreeMap<String, String>,
    pub aliases: BTreeSet<String>,
}

impl EntityRecord {
    /// Build a record, normalizing the name and generating article aliases.
    pub fn new(name: &str, domain: Domain, attributes: BTreeMap<String, String>) -> Self {
        let name = normalize_surface(name);
        let aliases = article_aliases(&name);
        EntityRecord {
            name,
            domain,
            attributes,
            aliases,
        }
    }

    /// Attribute value for a slot of this record's domain.
    pub fn attribute(&self, slot: SlotId) -> Option<&str> {
        if slot.domain() != self.domain {
            return None;
        }
        self.attributes.get(slot.name()).map(String::as_str)
    }
}

fn article_aliases(name: &str) -> BTreeSet<String> {
    let mut aliases = BTreeSet::new();
    if name.is_empty() {
        return aliases;
    }
    aliases.insert(name.to_string());
    match name.strip_prefix("the ") {
        Some(rest) => {
            aliases.insert(rest.to_string());
        }
        None => {
            aliases.insert(format!("the {name}"));
        }
    }
    aliases
}

/// Records parsed from one entity database plus the rows that were skipped.
#[derive(Debug, Clone, Default)]
pub struct DbParse {
    pub records: Vec<EntityRecord>,
    pub skipped_rows: usize,
}

fn scalar_text(value: &Json) -> Option<String> {
    match value {
        Json::String(s) => Some(s.clone()),
        Json::Number(n) => Some(n.to_string()),
        Json::Bool(b) => Some(if *b { "yes" } else { "no" }.to_string()),
        _ => None,
    }
}

/// Parse an entity database for one domain.
pub fn parse_entity_db(document: &str, domain: Domain) -> Result<DbParse> {
    if domain == Domain::Taxi {
        return Err(Error::NoEntityDb(domain.to_string()));
    }
    let parsed: Json = serde_json::from_str(document)?;
    let Json::Array(rows) = parsed else {
        return Err(Error::InvalidDocument(
            "entity database must be a JSON array".into(),
        ));
    };
    let mut out = DbParse::default();
    for row in &rows {
        let Json::Object(fields) = row else {
            return Err(Error::InvalidDocument(
                "entity database rows must be objects".into(),
            ));
        };
        let name = fields
            .get("name")
            .or_else(|| {
                (domain == Domain::Train)
                    .then(|| fields.get("trainID"))
                    .flatten()
            })
            .and_then(scalar_text)
            .map(|n| normalize_surface(&n))
            .filter(|n| !n.is_empty());
        let Some(name) = name else {
            out.skipped_rows += 1;
            continue;
        };
        let mut attributes = BTreeMap::new();
        for (key, value) in fields {
            let Some(slot) = SlotId::lookup(domain, key) else {
                continue;
            };
            if slot.is_name_slot() {
                continue;
            }
            if let Some(text) = scalar_text(value) {
                let text = normalize_value(&text);
                if !text.is_empty() {
                    attributes.insert(slot.name().to_string(), text);
                }
            }
        }
        out.records
            .push(EntityRecord::new(&name, domain, attributes));
    }
    Ok(out)
}

/// Serialize records back into the entity database layout.
pub fn entity_db_to_json(records: &[EntityRecord]) -> String {
    let rows: Vec<Json> = records
        .iter()
        .map(|r| {
            let mut obj = serde_json::Map::new();
            obj.insert("name".into(), Json::String(r.name.clone()));
            for (k, v) in &r.attributes {
                obj.insert(k.clone(), Json::String(v.clone()));
            }
            Json::Object(obj)
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("json values always serialize")
}

/// Which sources contribute entity names.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntitySource {
    Db,
    Ontology,
    #[default]
    Both,
}

/// Index into [`KnowledgeBase::records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityRef(pub u32);

/// An attribute value that falls outside its slot's candidate list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeIssue {
    pub entity: String,
    pub slot: SlotId,
    pub value: String,
}

/// Entity records plus a name index, immutable after construction.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    catalog: SlotCatalog,
    records: Vec<EntityRecord>,
    by_name: HashMap<(String, Domain), Vec<EntityRef>>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    catalog: SlotCatalog,
    records: Vec<EntityRecord>,
}

impl KnowledgeBase {
    pub fn new(catalog: SlotCatalog, records: Vec<EntityRecord>) -> Self {
        let mut by_name: HashMap<(String, Domain), Vec<EntityRef>> = HashMap::new();
        for (i, rec) in records.iter().enumerate() {
            for alias in &rec.aliases {
                by_name
                    .entry((alias.clone(), rec.domain))
                    .or_default()
                    .push(EntityRef(i as u32));
            }
        }
        KnowledgeBase {
            catalog,
            records,
            by_name,
        }
    }

    /// Combine database records with name-slot candidates from the catalog.
    ///
    /// Catalog names already covered by a database record (through any
    /// alias) are not duplicated.
    pub fn from_sources(
        catalog: SlotCatalog,
        db_records: Vec<EntityRecord>,
        source: EntitySource,
    ) -> Self {
        let mut records = match source {
            EntitySource::Ontology => Vec::new(),
            _ => db_records,
        };
        if source != EntitySource::Db {
            let mut known: BTreeSet<(String, Domain)> = records
                .iter()
                .flat_map(|r| r.aliases.iter().map(move |a| (a.clone(), r.domain)))
                .collect();
            for domain in Domain::ALL {
                let Some(slot) = domain.name_slot() else {
                    continue;
                };
                for value in catalog.candidates(slot) {
                    let rec = EntityRecord::new(value, domain, BTreeMap::new());
                    if rec.name.is_empty() || rec.name == "dontcare" || rec.name == "none" {
                        continue;
                    }
                    if known.contains(&(rec.name.clone(), domain)) {
                        continue;
                    }
                    known.extend(rec.aliases.iter().map(|a| (a.clone(), domain)));
                    records.push(rec);
                }
            }
        }
        KnowledgeBase::new(catalog, records)
    }

    /// Load an ontology file and the `<domain>_db.json` files found in `db_dir`.
    pub fn load(ontology: &Path, db_dir: &Path, source: EntitySource) -> Result<(Self, usize)> {
        let text = fs::read_to_string(ontology).map_err(|e| Error::io(ontology, e))?;
        let catalog = parse_ontology(&text)?;
        let mut records = Vec::new();
        let mut skipped = 0;
        if source != EntitySource::Ontology {
            if !db_dir.is_dir() {
                return Err(Error::io(
                    db_dir,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "db directory not found"),
                ));
            }
            for domain in [
                Domain::Attraction,
                Domain::Hotel,
                Domain::Restaurant,
                Domain::Train,
            ] {
                let path = db_dir.join(format!("{domain}_db.json"));
                if !path.exists() {
                    continue;
                }
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let parsed = parse_entity_db(&text, domain)?;
                skipped += parsed.skipped_rows;
                records.extend(parsed.records);
            }
        }
        Ok((
            KnowledgeBase::from_sources(catalog, records, source),
            skipped,
        ))
    }

    pub fn catalog(&self) -> &SlotCatalog {
        &self.catalog
    }

    pub fn records(&self) -> &[EntityRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: EntityRef) -> &EntityRecord {
        &self.records[id.0 as usize]
    }

    /// Records whose name or alias equals `name` after normalization.
    pub fn lookup(&self, name: &str, domain: Domain) -> &[EntityRef] {
        self.by_name
            .get(&(normalize_surface(name), domain))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Attribute values of categorical slots that are not in the catalog.
    pub fn validate(&self) -> Vec<AttributeIssue> {
        let mut issues = Vec::new();
        for rec in &self.records {
            for (key, value) in &rec.attributes {
                let Some(slot) = SlotId::lookup(rec.domain, key) else {
                    continue;
                };
                if !self.catalog.admits(slot, value) {
                    issues.push(AttributeIssue {
                        entity: rec.name.clone(),
                        slot,
                        value: value.clone(),
                    });
                }
            }
        }
        issues
    }

    /// Normalized snapshot for caching.
    pub fn to_snapshot_json(&self) -> String {
        let snap = Snapshot {
            catalog: self.catalog.clone(),
            records: self.records.clone(),
        };
        serde_json::to_string_pretty(&snap).expect("snapshot always serializes")
    }

    pub fn from_snapshot_json(text: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(text)?;
        Ok(KnowledgeBase::new(snap.catalog, snap.records))
    }
}
