use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use onto_dst::correct::{correct, find_conflicts, CorrectionPolicy};
use onto_dst::eval::evaluate;
use onto_dst::kb::{EntityRecord, EntitySource, KnowledgeBase, SlotCatalog};
use onto_dst::matcher::{build_lexicon, match_utterance};
use onto_dst::schema::{Domain, SlotId};
use onto_dst::state::{DialogueState, Value};

fn arb_state() -> impl Strategy<Value = DialogueState> {
    proptest::collection::vec(
        prop_oneof![
            4 => Just("none"),
            1 => Just("dontcare"),
            1 => Just("east"),
            1 => Just("west"),
            1 => Just("2"),
        ],
        30,
    )
    .prop_map(|values| {
        let mut s = DialogueState::empty();
        for (id, v) in SlotId::all().zip(values) {
            s.set(id, Value::parse(v));
        }
        s
    })
}

proptest! {
    #[test]
    fn metrics_ignore_joint_permutation(
        pairs in proptest::collection::vec((arb_state(), arb_state()), 1..12),
        seed in any::<u64>(),
    ) {
        let (preds, golds): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let mut shuffled = pairs;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (sp, sg): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let a = evaluate(&preds, &golds).unwrap();
        let b = evaluate(&sp, &sg).unwrap();
        prop_assert!((a.jga - b.jga).abs() < 1e-12);
        prop_assert!((a.slot_accuracy - b.slot_accuracy).abs() < 1e-12);
        prop_assert!((a.slot_f1 - b.slot_f1).abs() < 1e-12);
        for m in [&a, &b] {
            for r in [m.jga, m.slot_accuracy, m.slot_f1] {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn correction_is_idempotent_and_spares_names(raw in arb_state(), pick in 0usize..100) {
        let f = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        let (kb, _) = KnowledgeBase::load(&f.join("ontology.json"), &f.join("db"), EntitySource::Both).unwrap();
        let mut state = raw;
        let restaurants: Vec<&EntityRecord> =
            kb.records().iter().filter(|r| r.domain == Domain::Restaurant).collect();
        let name = &restaurants[pick % restaurants.len()].name;
        state.set("restaurant-name".parse().unwrap(), Value::parse(name));
        let policy = CorrectionPolicy::default();
        let (once, report) = correct(&state, &kb, &policy);
        let (twice, _) = correct(&once, &kb, &policy);
        prop_assert_eq!(&once, &twice);
        prop_assert!(find_conflicts(&once, &kb, &policy)
            .iter()
            .all(|c| !policy.correctable_slots.contains(&c.attribute_slot)
                || !kb.catalog().admits(c.attribute_slot, &c.kb_value)));
        for id in SlotId::all().filter(|s| s.is_name_slot()) {
            prop_assert_eq!(once.get(id), state.get(id));
        }
        let applied: BTreeSet<SlotId> = report.applied.iter().map(|a| a.slot).collect();
        prop_assert_eq!(applied.len(), report.applied.len());
    }
}

/// Every occurrence of every surface, by scanning each surface separately.
fn per_surface_scan(surfaces: &BTreeMap<String, ()>, words: &[&str]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for surface in surfaces.keys() {
        let pat: Vec<&str> = surface.split(' ').collect();
        if pat.len() > words.len() {
            continue;
        }
        for start in 0..=words.len() - pat.len() {
            if words[start..start + pat.len()] == pat[..] {
                out.push((start, start + pat.len()));
            }
        }
    }
    out
}

fn longest_first(mut found: Vec<(usize, usize)>) -> BTreeSet<(usize, usize)> {
    found.sort_by_key(|&(s, e)| (std::cmp::Reverse(e - s), s));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (s, e) in found {
        if kept.iter().all(|&(ks, ke)| e <= ks || ke <= s) {
            kept.push((s, e));
        }
    }
    kept.into_iter().collect()
}

#[test]
fn thousand_record_kb_matches_naive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let vocab: Vec<String> = (0..120).map(|i| format!("w{i}")).collect();
    let domains = [
        Domain::Attraction,
        Domain::Hotel,
        Domain::Restaurant,
        Domain::Train,
    ];
    let records: Vec<EntityRecord> = (0..1000)
        .map(|_| {
            let n = rng.gen_range(1..=4);
            let name: Vec<&str> = (0..n)
                .map(|_| vocab.choose(&mut rng).unwrap().as_str())
                .collect();
            EntityRecord::new(
                &name.join(" "),
                *domains.choose(&mut rng).unwrap(),
                BTreeMap::new(),
            )
        })
        .collect();
    let mut surfaces = BTreeMap::new();
    for r in &records {
        for a in &r.aliases {
            surfaces.insert(a.clone(), ());
        }
    }
    let kb = KnowledgeBase::new(SlotCatalog::empty(), records);
    let index = build_lexicon(&kb).unwrap();
    assert_eq!(index.surface_count(), surfaces.len());

    let mut total = 0;
    for _ in 0..100 {
        let len = rng.gen_range(0..=40);
        let words: Vec<&str> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    "the"
                } else {
                    vocab.choose(&mut rng).unwrap().as_str()
                }
            })
            .collect();
        let want = longest_first(per_surface_scan(&surfaces, &words));
        let have: BTreeSet<(usize, usize)> = match_utterance(&index, &words.join(" "))
            .into_iter()
            .map(|m| (m.start, m.end))
            .collect();
        assert_eq!(have, want, "utterance {:?}", words.join(" "));
        total += want.len();
    }
    assert!(
        total > 100,
        "only {total} spans; the sample is too sparse to mean much"
    );
}
