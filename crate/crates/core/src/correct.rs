//! Knowledge-base post-correction of predicted dialogue states.
//!
//! When a domain's name slot resolves to a known entity, every attribute
//! slot whose predicted literal disagrees with the entity's recorded
//! attribute is a conflict. The name slot is trusted; attributes are
//! overwritten according to a [`CorrectionPolicy`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{EntityRef, KnowledgeBase};
use crate::schema::{Domain, SlotId};
use crate::state::{DialogueState, Value};

/// A predicted attribute that disagrees with the resolved entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub name_slot: SlotId,
    pub entity: EntityRef,
    pub entity_name: String,
    pub attribute_slot: SlotId,
    pub predicted: String,
    pub kb_value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    AmbiguousEntity,
    SlotNotCorrectable,
    DomainDisabled,
    /// The recorded attribute is not a catalog value for the slot.
    EntityNotFound,
}

/// Which conflicts may be overwritten.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionPolicy {
    pub enabled_domains: BTreeSet<Domain>,
    pub correctable_slots: BTreeSet<SlotId>,
    pub require_unambiguous: bool,
}

impl Default for CorrectionPolicy {
    /// Restaurant price range, area and food; hotel area and internet.
    fn default() -> Self {
        let slots = [
            "restaurant-pricerange",
            "restaurant-area",
            "restaurant-food",
            "hotel-area",
            "hotel-internet",
        ];
        CorrectionPolicy {
            enabled_domains: [Domain::Restaurant, Domain::Hotel].into_iter().collect(),
            correctable_slots: slots
                .iter()
                .map(|s| s.parse().expect("known slot"))
                .collect(),
            require_unambiguous: true,
        }
    }
}

impl CorrectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.correctable_slots.iter().find(|s| s.is_name_slot()) {
            return Err(Error::Policy(format!(
                "name slot `{s}` cannot be correctable"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let policy: CorrectionPolicy = serde_json::from_str(text)?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CorrectionPolicy::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy always serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedCorrection {
    pub slot: SlotId,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedConflict {
    pub conflict: Conflict,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub conflicts: Vec<Conflict>,
    pub applied: Vec<AppliedCorrection>,
    pub skipped: Vec<SkippedConflict>,
}

impl CorrectionReport {
    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }
}

/// Records matching the domain's name slot value. NONE/DONTCARE names
/// and domains without a name slot resolve to nothing.
pub fn resolve_entity<'kb>(
    state: &DialogueState,
    domain: Domain,
    kb: &'kb KnowledgeBase,
) -> &'kb [EntityRef] {
    let Some(name_slot) = domain.name_slot() else {
        return &[];
    };
    match state.get(name_slot) {
        Value::Literal(name) => kb.lookup(name, domain),
        _ => &[],
    }
}

fn conflicts_with(
    state: &DialogueState,
    kb: &KnowledgeBase,
    name_slot: SlotId,
    entity: EntityRef,
) -> Vec<Conflict> {
    let record = kb.record(entity);
    name_slot
        .domain()
        .slots()
        .filter(|s| !s.is_name_slot())
        .filter_map(|slot| {
            let predicted = state.get(slot).literal()?;
            let kb_value = record.attribute(slot)?;
            (predicted != kb_value).then(|| Conflict {
                name_slot,
                entity,
                entity_name: record.name.clone(),
                attribute_slot: slot,
                predicted: predicted.to_string(),
                kb_value: kb_value.to_string(),
            })
        })
        .collect()
}

/// Every conflict across all name-bearing domains, tagged with the reason
/// it must not be applied (if any).
fn scan(
    state: &DialogueState,
    kb: &KnowledgeBase,
    policy: &CorrectionPolicy,
) -> Vec<(Conflict, Option<SkipReason>)> {
    let mut out = Vec::new();
    for domain in Domain::ALL {
        let Some(name_slot) = domain.name_slot() else {
            continue;
        };
        let candidates = resolve_entity(state, domain, kb);
        let ambiguous = candidates.len() > 1;
        let considered: &[EntityRef] = if ambiguous && !policy.require_unambiguous {
            &candidates[..1]
        } else {
            candidates
        };
        for &entity in considered {
            for conflict in conflicts_with(state, kb, name_slot, entity) {
                let reason = if !policy.enabled_domains.contains(&domain) {
                    Some(SkipReason::DomainDisabled)
                } else if ambiguous && policy.require_unambiguous {
                    Some(SkipReason::AmbiguousEntity)
                } else if !policy.correctable_slots.contains(&conflict.attribute_slot) {
                    Some(SkipReason::SlotNotCorrectable)
                } else if !kb
                    .catalog()
                    .admits(conflict.attribute_slot, &conflict.kb_value)
                {
                    Some(SkipReason::EntityNotFound)
                } else {
                    None
                };
                out.push((conflict, reason));
            }
        }
    }
    out
}

/// Conflicts in enabled domains whose entity resolution satisfies the policy.
pub fn find_conflicts(
    state: &DialogueState,
    kb: &KnowledgeBase,
    policy: &CorrectionPolicy,
) -> Vec<Conflict> {
    scan(state, kb, policy)
        .into_iter()
        .filter(|(_, reason)| {
            !matches!(
                reason,
                Some(SkipReason::DomainDisabled | SkipReason::AmbiguousEntity)
            )
        })
        .map(|(c, _)| c)
        .collect()
}

/// Overwrite conflicting attribute slots with knowledge-base values.
pub fn correct(
    state: &DialogueState,
    kb: &KnowledgeBase,
    policy: &CorrectionPolicy,
) -> (DialogueState, CorrectionReport) {
    let mut next = state.clone();
    let mut report = CorrectionReport::default();
    for (conflict, reason) in scan(state, kb, policy) {
        match reason {
            None => {
                next.set(
                    conflict.attribute_slot,
                    Value::Literal(conflict.kb_value.clone()),
                );
                report.applied.push(AppliedCorrection {
                    slot: conflict.attribute_slot,
                    old: conflict.predicted.clone(),
                    new: conflict.kb_value.clone(),
                });
            }
            Some(reason) => {
                if reason == SkipReason::EntityNotFound {
                    log::warn!(
                        "{} records `{}` for {}, which is not a catalog value; not correcting",
                        conflict.entity_name,
                        conflict.kb_value,
                        conflict.attribute_slot
                    );
                }
                report.skipped.push(SkippedConflict {
                    conflict: conflict.clone(),
                    reason,
                });
            }
        }
        report.conflicts.push(conflict);
    }
    (next, report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactTally {
    pub fixed: usize,
    pub broken: usize,
}

/// Per-slot counts of turns fixed and broken by correction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionImpact {
    pub per_slot: BTreeMap<SlotId, ImpactTally>,
}

impl CorrectionImpact {
    pub fn get(&self, slot: SlotId) -> ImpactTally {
        self.per_slot.get(&slot).copied().unwrap_or_default()
    }

    pub fn total(&self) -> ImpactTally {
        self.per_slot
            .values()
            .fold(ImpactTally::default(), |a, t| ImpactTally {
                fixed: a.fixed + t.fixed,
                broken: a.broken + t.broken,
            })
    }

    pub fn is_zero(&self) -> bool {
        self.total() == ImpactTally::default()
    }
}

pub fn correction_impact(
    before: &[DialogueState],
    after: &[DialogueState],
    gold: &[DialogueState],
) -> Result<CorrectionImpact> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch {
            left: before.len(),
            right: after.len(),
        });
    }
    if before.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: before.len(),
            right: gold.len(),
        });
    }
    let mut per_slot: BTreeMap<SlotId, ImpactTally> =
        SlotId::all().map(|s| (s, ImpactTally::default())).collect();
    for ((b, a), g) in before.iter().zip(after).zip(gold) {
        for slot in SlotId::all() {
            let (bv, av, gv) = (b.get(slot), a.get(slot), g.get(slot));
            let tally = per_slot.get_mut(&slot).expect("all slots present");
            if bv != gv && av == gv {
                tally.fixed += 1;
            } else if bv == gv && av != gv {
                tally.broken += 1;
            }
        }
    }
    Ok(CorrectionImpact { per_slot })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{EntityRecord, SlotCatalog};

    fn slot(s: &str) -> SlotId {
        s.parse().unwrap()
    }

    fn record(name: &str, domain: Domain, attrs: &[(&str, &str)]) -> EntityRecord {
        EntityRecord::new(
            name,
            domain,
            attrs
                .iter()
                .map(|&(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    fn fixture_kb() -> KnowledgeBase {
        KnowledgeBase::new(
            SlotCatalog::empty(),
            vec![
                record(
                    "the gardenia",
                    Domain::Restaurant,
                    &[
                        ("pricerange", "expensive"),
                        ("area", "centre"),
                        ("food", "mediterranean"),
                    ],
                ),
                record(
                    "pipasha restaurant",
                    Domain::Restaurant,
                    &[
                        ("pricerange", "expensive"),
                        ("area", "east"),
                        ("food", "indian"),
                    ],
                ),
                record("nameless diner", Domain::Restaurant, &[("area", "north")]),
                record(
                    "twin lodge",
                    Domain::Hotel,
                    &[("area", "north"), ("stars", "4")],
                ),
                record(
                    "twin lodge",
                    Domain::Hotel,
                    &[("area", "south"), ("stars", "2")],
                ),
                record(
                    "acorn guest house",
                    Domain::Hotel,
                    &[("area", "north"), ("stars", "4"), ("internet", "yes")],
                ),
            ],
        )
    }

    fn state(pairs: &[(&str, &str)]) -> DialogueState {
        DialogueState::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn resolve() {
        let kb = fixture_kb();
        let s = state(&[("restaurant-name", "Pipasha Restaurant")]);
        let found = resolve_entity(&s, Domain::Restaurant, &kb);
        assert_eq!(found.len(), 1);
        assert_eq!(kb.record(found[0]).attributes["area"], "east");
        assert!(resolve_entity(&DialogueState::empty(), Domain::Restaurant, &kb).is_empty());
        let dc = state(&[("restaurant-name", "dontcare")]);
        assert!(resolve_entity(&dc, Domain::Restaurant, &kb).is_empty());
        let twins = state(&[("hotel-name", "twin lodge")]);
        assert_eq!(resolve_entity(&twins, Domain::Hotel, &kb).len(), 2);
        assert!(resolve_entity(&twins, Domain::Taxi, &kb).is_empty());
    }

    #[test]
    fn gardenia_conflict_and_correction() {
        let kb = fixture_kb();
        let policy = CorrectionPolicy::default();
        let s = state(&[
            ("restaurant-name", "the gardenia"),
            ("restaurant-pricerange", "moderate"),
        ]);
        let conflicts = find_conflicts(&s, &kb, &policy);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].kb_value, "expensive");
        assert_eq!(conflicts[0].predicted, "moderate");
        assert_eq!(conflicts[0].attribute_slot, slot("restaurant-pricerange"));

        let (fixed, report) = correct(&s, &kb, &policy);
        assert_eq!(
            fixed.get(slot("restaurant-pricerange")).as_text(),
            "expensive"
        );
        assert_eq!(report.applied.len(), 1);
        assert_eq!(report.applied[0].old, "moderate");
        let (again, report2) = correct(&fixed, &kb, &policy);
        assert_eq!(again, fixed);
        assert!(report2.applied.is_empty());
    }

    #[test]
    fn pipasha_area() {
        let kb = fixture_kb();
        let s = state(&[
            ("restaurant-name", "pipasha restaurant"),
            ("restaurant-area", "centre"),
            ("restaurant-food", "indian"),
        ]);
        let (fixed, report) = correct(&s, &kb, &CorrectionPolicy::default());
        assert_eq!(fixed.get(slot("restaurant-area")).as_text(), "east");
        assert_eq!(report.conflicts.len(), 1);
    }

    #[test]
    fn no_conflicts_cases() {
        let kb = fixture_kb();
        let policy = CorrectionPolicy::default();
        let s = state(&[("restaurant-name", "the gardenia")]);
        assert!(find_conflicts(&s, &kb, &policy).is_empty());
        let (same, report) = correct(&s, &kb, &policy);
        assert_eq!(same, s);
        assert!(report.is_empty());
        let s = state(&[
            ("restaurant-name", "the gardenia"),
            ("restaurant-pricerange", "dontcare"),
        ]);
        assert!(find_conflicts(&s, &kb, &policy).is_empty());
        // The record has no food attribute, so food never conflicts.
        let s = state(&[
            ("restaurant-name", "nameless diner"),
            ("restaurant-food", "thai"),
            ("restaurant-area", "south"),
        ]);
        let slots: Vec<SlotId> = find_conflicts(&s, &kb, &policy)
            .iter()
            .map(|c| c.attribute_slot)
            .collect();
        assert_eq!(slots, vec![slot("restaurant-area")]);
    }

    #[test]
    fn hotel_stars_not_correctable_by_default() {
        let kb = fixture_kb();
        let s = state(&[
            ("hotel-name", "acorn guest house"),
            ("hotel-stars", "3"),
            ("hotel-area", "east"),
        ]);
        let (fixed, report) = correct(&s, &kb, &CorrectionPolicy::default());
        assert_eq!(fixed.get(slot("hotel-stars")).as_text(), "3");
        assert_eq!(fixed.get(slot("hotel-area")).as_text(), "north");
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].reason, SkipReason::SlotNotCorrectable);
    }

    #[test]
    fn ambiguous_entities() {
        let kb = fixture_kb();
        let s = state(&[("hotel-name", "twin lodge"), ("hotel-area", "east")]);
        let policy = CorrectionPolicy::default();
        assert!(find_conflicts(&s, &kb, &policy).is_empty());
        let (same, report) = correct(&s, &kb, &policy);
        assert_eq!(same, s);
        assert_eq!(report.skipped.len(), 2);
        assert!(report
            .skipped
            .iter()
            .all(|k| k.reason == SkipReason::AmbiguousEntity));

        let lax = CorrectionPolicy {
            require_unambiguous: false,
            ..CorrectionPolicy::default()
        };
        let (fixed, report) = correct(&s, &kb, &lax);
        assert_eq!(fixed.get(slot("hotel-area")).as_text(), "north");
        assert_eq!(report.applied.len(), 1);
    }

    #[test]
    fn disabled_domain_and_off_catalog_values() {
        let mut catalog = SlotCatalog::empty();
        catalog.insert(slot("restaurant-area"), "centre");
        catalog.insert(slot("restaurant-area"), "west");
        let kb = KnowledgeBase::new(
            catalog,
            vec![record("odd place", Domain::Restaurant, &[("area", "mars")])],
        );
        let s = state(&[
            ("restaurant-name", "odd place"),
            ("restaurant-area", "west"),
        ]);
        let (same, report) = correct(&s, &kb, &CorrectionPolicy::default());
        assert_eq!(same, s);
        assert_eq!(report.skipped[0].reason, SkipReason::EntityNotFound);

        let policy = CorrectionPolicy {
            enabled_domains: BTreeSet::new(),
            ..CorrectionPolicy::default()
        };
        let (_, report) = correct(&s, &kb, &policy);
        assert_eq!(report.skipped[0].reason, SkipReason::DomainDisabled);
        assert!(find_conflicts(&s, &kb, &policy).is_empty());
    }

    #[test]
    fn policy_json() {
        let policy = CorrectionPolicy::default();
        let back = CorrectionPolicy::from_json(&policy.to_json()).unwrap();
        assert_eq!(back, policy);
        let bad = r#"{"enabled_domains": ["hotel"], "correctable_slots": ["hotel-name"], "require_unambiguous": true}"#;
        assert!(matches!(
            CorrectionPolicy::from_json(bad),
            Err(Error::Policy(_))
        ));
        assert!(!policy.correctable_slots.contains(&slot("hotel-stars")));
    }

    #[test]
    fn impact_tallies() {
        let area = slot("restaurant-area");
        let stars = slot("hotel-stars");
        let gold = vec![
            state(&[("restaurant-area", "east")]),
            state(&[("hotel-stars", "4")]),
            DialogueState::empty(),
        ];
        let before = vec![
            state(&[("restaurant-area", "centre")]),
            state(&[("hotel-stars", "4")]),
            DialogueState::empty(),
        ];
        let after = vec![
            state(&[("restaurant-area", "east")]),
            state(&[("hotel-stars", "2")]),
            DialogueState::empty(),
        ];
        let impact = correction_impact(&before, &after, &gold).unwrap();
        assert_eq!(
            impact.get(area),
            ImpactTally {
                fixed: 1,
                broken: 0
            }
        );
        assert_eq!(
            impact.get(stars),
            ImpactTally {
                fixed: 0,
                broken: 1
            }
        );
        assert_eq!(
            impact.total(),
            ImpactTally {
                fixed: 1,
                broken: 1
            }
        );
        assert!(correction_impact(&before, &before, &gold)
            .unwrap()
            .is_zero());
        assert!(matches!(
            correction_impact(&before[..2], &after, &gold),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
