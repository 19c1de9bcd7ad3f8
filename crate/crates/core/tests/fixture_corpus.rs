use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use onto_dst::corpus::{
    convert_trade, corpus_to_json, emit_fixture, ingest_corpus, off_catalog_values,
};
use onto_dst::kb::{parse_ontology, EntitySource, KnowledgeBase};
use onto_dst::schema::Domain;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

#[test]
fn shipped_corpus_round_trips() {
    let corpus = ingest_corpus(&read("corpus.json")).unwrap();
    assert_eq!(corpus.dialogues.len(), 10);
    assert_eq!(corpus.dropped, 1);
    let text = corpus_to_json(&corpus.dialogues);
    let again = ingest_corpus(&text).unwrap();
    assert_eq!(again.dialogues, corpus.dialogues);
    assert_eq!(corpus_to_json(&again.dialogues), text);
}

#[test]
fn shipped_corpus_agrees_with_ontology() {
    let corpus = ingest_corpus(&read("corpus.json")).unwrap();
    let catalog = parse_ontology(&read("ontology.json")).unwrap();
    assert!(catalog.missing_categorical().is_empty());
    let flags = off_catalog_values(&corpus.dialogues, &catalog);
    assert!(flags.is_empty(), "{flags:?}");
}

#[test]
fn emitted_fixture_digest_is_stable() {
    let corpus = ingest_corpus(&read("corpus.json")).unwrap();
    let ids: Vec<&str> = corpus.dialogues.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids.len(), 10);
    let digest = |ids: &[&str]| {
        hex::encode(Sha256::digest(
            emit_fixture(&corpus.dialogues, ids).unwrap(),
        ))
    };
    let first = digest(&ids);
    let reversed: Vec<&str> = ids.iter().rev().copied().collect();
    assert_eq!(digest(&ids), first);
    assert_eq!(digest(&reversed), first);
    let reloaded = ingest_corpus(&read("corpus.json")).unwrap();
    assert_eq!(
        hex::encode(Sha256::digest(
            emit_fixture(&reloaded.dialogues, &ids).unwrap()
        )),
        first
    );
}

#[test]
fn trade_sample_converts_to_the_same_dialogues() {
    let converted = convert_trade(&read("trade_sample.json")).unwrap();
    assert_eq!(converted.dropped, 1);
    let native = ingest_corpus(&read("corpus.json")).unwrap();
    for d in &converted.dialogues {
        let twin = native.dialogues.iter().find(|n| n.id == d.id).unwrap();
        assert_eq!(d, twin);
    }
}

#[test]
fn fixture_kb_loads() {
    let f = fixtures();
    let (kb, skipped) =
        KnowledgeBase::load(&f.join("ontology.json"), &f.join("db"), EntitySource::Both).unwrap();
    assert_eq!(skipped, 0);
    assert!(kb.validate().is_empty(), "{:?}", kb.validate());
    assert_eq!(kb.lookup("gardenia", Domain::Restaurant).len(), 1);
    assert_eq!(kb.lookup("The Gardenia", Domain::Restaurant).len(), 1);
    assert_eq!(kb.lookup("tr1234", Domain::Train).len(), 1);
    let (db_only, _) =
        KnowledgeBase::load(&f.join("ontology.json"), &f.join("db"), EntitySource::Db).unwrap();
    assert!(db_only.records().len() <= kb.records().len());
    assert!(db_only.records().iter().all(|r| !r.attributes.is_empty()));
}
