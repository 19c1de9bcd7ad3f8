//! Multi-pattern entity matching over normalized utterances.
//!
//! Entity surfaces are interned word by word and compiled into an
//! Aho-Corasick automaton whose alphabet is the word vocabulary. Matching on
//! whole words gives word-boundary alignment for free: `ash` can never fire
//! inside `washington`.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{normalize_surface, EntityRef, KnowledgeBase};
use crate::schema::Domain;

/// Which speakers' utterances feed entity matching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speakers {
    #[default]
    User,
    Both,
}

#[derive(Debug, Clone)]
struct Pattern {
    surface: String,
    len: usize,
    payloads: Vec<(Domain, EntityRef, String)>,
}

#[derive(Debug, Clone, Default)]
struct Node {
    next: HashMap<u32, usize>,
    fail: usize,
    output: Option<usize>,
    /// Nearest proper suffix state (via failure links) that ends a pattern.
    dict: Option<usize>,
}

/// Immutable entity matcher built from a knowledge base.
#[derive(Debug, Clone)]
pub struct MatcherIndex {
    words: HashMap<String, u32>,
    nodes: Vec<Node>,
    patterns: Vec<Pattern>,
}

/// One entity mention in a normalized utterance. Offsets are word indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSpan {
    pub surface: String,
    /// Canonical record name the surface resolves to.
    pub entity: String,
    pub start: usize,
    pub end: usize,
    pub domain: Domain,
    pub record: EntityRef,
}

/// Build the matcher over every name and alias in `kb`.
pub fn build_lexicon(kb: &KnowledgeBase) -> Result<MatcherIndex> {
    if kb.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    let mut by_surface: HashMap<&str, usize> = HashMap::new();
    let mut patterns: Vec<Pattern> = Vec::new();
    for (i, rec) in kb.records().iter().enumerate() {
        for alias in &rec.aliases {
            let id = *by_surface.entry(alias.as_str()).or_insert_with(|| {
                patterns.push(Pattern {
                    surface: alias.clone(),
                    len: alias.split(' ').count(),
                    payloads: Vec::new(),
                });
                patterns.len() - 1
            });
            patterns[id]
                .payloads
                .push((rec.domain, EntityRef(i as u32), rec.name.clone()));
        }
    }
    for p in &mut patterns {
        p.payloads.sort();
        p.payloads.dedup();
    }

    let mut words: HashMap<String, u32> = HashMap::new();
    let mut nodes = vec![Node::default()];
    for (pid, pattern) in patterns.iter().enumerate() {
        let mut state = 0;
        for word in pattern.surface.split(' ') {
            let next_id = words.len() as u32;
            let sym = *words.entry(word.to_string()).or_insert(next_id);
            state = match nodes[state].next.get(&sym) {
                Some(&s) => s,
                None => {
                    nodes.push(Node::default());
                    let s = nodes.len() - 1;
                    nodes[state].next.insert(sym, s);
                    s
                }
            };
        }
        nodes[state].output = Some(pid);
    }

    // Breadth-first failure links.
    let mut queue = VecDeque::new();
    let root_children: Vec<usize> = nodes[0].next.values().copied().collect();
    for child in root_children {
        nodes[child].fail = 0;
        queue.push_back(child);
    }
    while let Some(state) = queue.pop_front() {
        let edges: Vec<(u32, usize)> = nodes[state].next.iter().map(|(&k, &v)| (k, v)).collect();
        for (sym, child) in edges {
            let mut f = nodes[state].fail;
            let fail = loop {
                if let Some(&t) = nodes[f].next.get(&sym) {
                    break t;
                }
                if f == 0 {
                    break 0;
                }
                f = nodes[f].fail;
            };
            nodes[child].fail = fail;
            nodes[child].dict = if nodes[fail].output.is_some() {
                Some(fail)
            } else {
                nodes[fail].dict
            };
            queue.push_back(child);
        }
    }

    Ok(MatcherIndex {
        words,
        nodes,
        patterns,
    })
}

impl MatcherIndex {
    /// Number of distinct surfaces the index recognizes.
    pub fn surface_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|p| p.surface.as_str())
    }

    /// Every pattern occurrence as `(start, end, pattern id)`, overlaps included.
    fn scan(&self, tokens: &[&str]) -> Vec<(usize, usize, usize)> {
        let mut found = Vec::new();
        let mut state = 0;
        for (i, tok) in tokens.iter().enumerate() {
            let Some(&sym) = self.words.get(*tok) else {
                state = 0;
                continue;
            };
            loop {
                if let Some(&t) = self.nodes[state].next.get(&sym) {
                    state = t;
                    break;
                }
                if state == 0 {
                    break;
                }
                state = self.nodes[state].fail;
            }
            let mut out = if self.nodes[state].output.is_some() {
                Some(state)
            } else {
                self.nodes[state].dict
            };
            while let Some(s) = out {
                let pid = self.nodes[s].output.expect("dict links point at outputs");
                let len = self.patterns[pid].len;
                found.push((i + 1 - len, i + 1, pid));
                out = self.nodes[s].dict;
            }
        }
        found
    }
}

/// Keep the longest matches, breaking ties by leftmost start, dropping any
/// match that overlaps one already kept. Result is sorted by start.
fn select_longest(mut found: Vec<(usize, usize, usize)>) -> Vec<(usize, usize, usize)> {
    found.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize, usize)> = Vec::new();
    for m in found {
        if kept.iter().all(|k| m.1 <= k.0 || k.1 <= m.0) {
            kept.push(m);
        }
    }
    kept.sort();
    kept
}

/// Find entity mentions in `utterance`.
pub fn match_utterance(index: &MatcherIndex, utterance: &str) -> Vec<MatchSpan> {
    let normalized = normalize_surface(utterance);
    if normalized.is_empty() {
        return Vec::new();
    }
    let tokens: Vec<&str> = normalized.split(' ').collect();
    let mut spans = Vec::new();
    for (start, end, pid) in select_longest(index.scan(&tokens)) {
        let pattern = &index.patterns[pid];
        for (domain, record, entity) in &pattern.payloads {
            spans.push(MatchSpan {
                surface: pattern.surface.clone(),
                entity: entity.clone(),
                start,
                end,
                domain: *domain,
                record: *record,
            });
        }
    }
    spans
}

/// Serialize spans as one JSON object per line.
pub fn spans_to_jsonl(spans: &[MatchSpan]) -> String {
    spans
        .iter()
        .map(|s| serde_json::to_string(s).expect("spans always serialize") + "\n")
        .collect()
}

/// An accumulated `(entity, domain)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AccEntry {
    pub entity: String,
    pub domain: Domain,
}

/// Per-dialogue, first-seen-ordered set of matched entities.
///
/// Entries are keyed by canonical entity name so that `gardenia` and
/// `the gardenia` count as one entity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityAccumulator {
    entries: Vec<(AccEntry, usize)>,
    seen: HashSet<AccEntry>,
}

impl EntityAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> impl Iterator<Item = &AccEntry> {
        self.entries.iter().map(|(e, _)| e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_seen_turn(&self, entity: &str, domain: Domain) -> Option<usize> {
        self.entries
            .iter()
            .find(|(e, _)| e.entity == entity && e.domain == domain)
            .map(|&(_, t)| t)
    }

    /// Add new entries in place; duplicates are ignored.
    pub fn extend(&mut self, matches: &[MatchSpan], turn: usize) {
        for m in matches {
            let entry = AccEntry {
                entity: m.entity.clone(),
                domain: m.domain,
            };
            if self.seen.insert(entry.clone()) {
                self.entries.push((entry, turn));
            }
        }
    }
}

/// Return a new accumulator with `matches` from `turn` folded in.
pub fn accumulate(
    acc: &EntityAccumulator,
    matches: &[MatchSpan],
    turn: usize,
) -> EntityAccumulator {
    let mut next = acc.clone();
    next.extend(matches, turn);
    next
}
