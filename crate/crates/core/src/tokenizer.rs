//! Greedy longest-prefix WordPiece segmentation and vocabulary patching.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Prefix carried by word-internal pieces.
pub const CONTINUATION: &str = "##";
pub const DEFAULT_UNK: &str = "[UNK]";
/// Words longer than this (in chars) map straight to the unknown token.
pub const MAX_WORD_CHARS: usize = 100;

/// The fixture vocabulary shipped with the crate.
pub const FIXTURE_VOCAB: &str = include_str!("../fixtures/fixture_vocab.txt");

/// Splits text into model tokens.
pub trait Tokenize {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lowercased whitespace tokenization.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

impl Tokenize for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_lowercase).collect()
    }
}

/// WordPiece vocabulary. Token ids are line numbers of the vocab file.
#[derive(Debug, Clone)]
pub struct SubwordVocab {
    tokens: Arc<Vec<String>>,
    ids: Arc<HashMap<String, u32>>,
    unk: String,
}

impl SubwordVocab {
    /// Build from an ordered token list.
    pub fn new(tokens: Vec<String>, unk: &str) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Vocab(format!("empty token at line {}", i + 1)));
            }
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token `{tok}`")));
            }
        }
        if !ids.contains_key(unk) {
            return Err(Error::Vocab(format!("unknown token `{unk}` missing")));
        }
        Ok(SubwordVocab {
            tokens: Arc::new(tokens),
            ids: Arc::new(ids),
            unk: unk.to_string(),
        })
    }

    /// Parse the one-token-per-line format.
    pub fn from_vocab_text(text: &str) -> Result<Self> {
        let tokens = text
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .collect();
        SubwordVocab::new(tokens, DEFAULT_UNK)
    }

    pub fn fixture() -> Self {
        SubwordVocab::from_vocab_text(FIXTURE_VOCAB).expect("fixture vocab is well formed")
    }

    pub fn to_vocab_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn unk(&self) -> &str {
        &self.unk
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }
}

/// Segment a single lowercase word by greedy longest-prefix matching.
pub fn wordpiece_tokenize(vocab: &SubwordVocab, word: &str) -> Result<Vec<String>> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > MAX_WORD_CHARS {
        return Ok(vec![vocab.unk.clone()]);
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            let body: String = chars[start..end].iter().collect();
            let candidate = if start > 0 {
                format!("{CONTINUATION}{body}")
            } else {
                body
            };
            if vocab.contains(&candidate) {
                found = Some(candidate);
                break;
            }
            end -= 1;
        }
        match found {
            Some(piece) => pieces.push(piece),
            None => return Ok(vec![vocab.unk.clone()]),
        }
        start = end;
    }
    Ok(pieces)
}

/// Return a vocabulary with each of `words` appended as a whole token.
/// Words already present are left alone.
pub fn patch_vocab(vocab: &SubwordVocab, words: &[&str]) -> SubwordVocab {
    let missing: Vec<&str> = words
        .iter()
        .copied()
        .filter(|w| !w.is_empty() && !vocab.contains(w))
        .collect();
    if missing.is_empty() {
        return vocab.clone();
    }
    let mut tokens = vocab.tokens.as_ref().clone();
    let mut ids = vocab.ids.as_ref().clone();
    for w in missing {
        if !ids.contains_key(w) {
            ids.insert(w.to_string(), tokens.len() as u32);
            tokens.push(w.to_string());
        }
    }
    SubwordVocab {
        tokens: Arc::new(tokens),
        ids: Arc::new(ids),
        unk: vocab.unk.clone(),
    }
}

/// True iff `word` survives tokenization as a single whole token.
pub fn check_intuitive(vocab: &SubwordVocab, word: &str) -> bool {
    matches!(wordpiece_tokenize(vocab, word), Ok(p) if p.len() == 1 && p[0] == word)
}

impl Tokenize for SubwordVocab {
    /// Lowercase, split on whitespace and punctuation, then WordPiece each word.
    /// Bracketed special tokens present in the vocab pass through untouched.
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in text.split_whitespace() {
            if raw.starts_with('[') && self.contains(raw) {
                out.push(raw.to_string());
                continue;
            }
            let lowered = raw.to_lowercase();
            let mut word = String::new();
            let flush = |word: &mut String, out: &mut Vec<String>| {
                if !word.is_empty() {
                    out.extend(wordpiece_tokenize(self, word).unwrap_or_default());
                    word.clear();
                }
            };
            for c in lowered.chars() {
                if c.is_alphanumeric() {
                    word.push(c);
                } else {
                    flush(&mut word, &mut out);
                    let p = c.to_string();
                    out.push(if self.contains(&p) {
                        p
                    } else {
                        self.unk.clone()
                    });
                }
            }
            flush(&mut word, &mut out);
        }
        out
    }
}
