//! Comparison texts, fuzzy-matching normalization and keyword gating.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::dictionary::VariableRecord;
use crate::error::{Error, Result};

/// Rules longer than this many words are replaced by extracted keywords.
pub const KEYWORD_GATE_WORDS: usize = 20;
/// Upper bound on the number of extracted keyword words.
pub const MAX_KEYWORD_WORDS: usize = 15;
/// Joins a label and its derivation keywords.
pub const LABEL_KEY_SEPARATOR: &str = ", ";

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Number of whitespace-delimited tokens in the raw text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    /// One token per line; blank lines and `#` comments are ignored.
    pub fn parse(contents: &str) -> Self {
        let words = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StopwordList { words }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&raw))
    }

    pub fn english() -> &'static StopwordList {
        static LIST: OnceLock<StopwordList> = OnceLock::new();
        LIST.get_or_init(|| StopwordList::parse(DEFAULT_STOPWORDS))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Lowercased, stemmed, stopword-free tokens in input order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizedText {
    pub tokens: Vec<String>,
}

impl NormalizedText {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        NormalizedText { tokens: tokens.into_iter().map(Into::into).collect() }
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Fuzzy-matching preprocessor: punctuation removal, lowercasing, stopword
/// removal and Porter-style stemming.
pub struct Normalizer<'a> {
    stopwords: &'a StopwordList,
    stemmer: Stemmer,
}

impl<'a> Normalizer<'a> {
    pub fn new(stopwords: &'a StopwordList) -> Self {
        Normalizer { stopwords, stemmer: Stemmer::create(Algorithm::English) }
    }

    pub fn normalize(&self, text: &str) -> NormalizedText {
        let cleaned: String = text
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect::<String>()
            .to_lowercase();
        let tokens = cleaned
            .split_whitespace()
            .filter(|t| !self.stopwords.contains(t))
            .map(|t| self.stem_fixpoint(t))
            .filter(|t| !t.is_empty() && !self.stopwords.contains(t))
            .collect();
        NormalizedText { tokens }
    }

    // Stemming is repeated until stable so normalization is idempotent.
    fn stem_fixpoint(&self, token: &str) -> String {
        let mut cur = token.to_string();
        loop {
            let next = self.stemmer.stem(&cur).into_owned();
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }
}

/// Normalizes with the bundled English stopword list.
pub fn normalize_for_fuzzy(text: &str) -> NormalizedText {
    thread_local! {
        static NORMALIZER: Normalizer<'static> = Normalizer::new(StopwordList::english());
    }
    NORMALIZER.with(|n| n.normalize(text))
}

/// Extracts a short keyword summary from a long derivation rule.
pub trait KeywordProvider: Send + Sync {
    fn extract(&self, text: &str, max_words: usize) -> Result<String>;
}

/// Offline keyword extractor ranking words by stem frequency.
///
/// Ties go to the earlier first occurrence. Output words are the lowercased
/// source tokens with surrounding punctuation trimmed, in text order.
#[derive(Debug, Clone, Copy, Default)]
pub struct TermFrequencyExtractor;

impl KeywordProvider for TermFrequencyExtractor {
    fn extract(&self, text: &str, max_words: usize) -> Result<String> {
        let stop = StopwordList::english();
        let stemmer = Stemmer::create(Algorithm::English);
        // stem -> (count, first position, surface form)
        let mut stats: HashMap<String, (usize, usize, String)> = HashMap::new();
        for (pos, raw) in text.split_whitespace().enumerate() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            if word.is_empty() || stop.contains(&word) || word.chars().all(|c| c.is_ascii_digit()) {
                continue;
            }
            let stem = stemmer.stem(&word).into_owned();
            stats.entry(stem).and_modify(|e| e.0 += 1).or_insert((1, pos, word));
        }
        let mut ranked: Vec<_> = stats.into_values().collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked.truncate(max_words);
        ranked.sort_by_key(|e| e.1);
        Ok(ranked.into_iter().map(|e| e.2).collect::<Vec<_>>().join(" "))
    }
}

/// Keeps short rules verbatim and summarizes long ones to at most
/// [`MAX_KEYWORD_WORDS`] words.
pub fn derive_keyword_text(rule: &str, extractor: &dyn KeywordProvider) -> Result<String> {
    let rule = rule.trim();
    if rule.is_empty() {
        return Ok(String::new());
    }
    if word_count(rule) <= KEYWORD_GATE_WORDS {
        return Ok(rule.to_string());
    }
    let keywords = extractor.extract(rule, MAX_KEYWORD_WORDS)?;
    Ok(keywords.split_whitespace().take(MAX_KEYWORD_WORDS).collect::<Vec<_>>().join(" "))
}

/// The three texts compared for every variable pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchTexts {
    pub label_text: String,
    pub sheet_text: String,
    pub label_key_text: String,
}

pub fn build_match_texts(rec: &VariableRecord, keyword_text: &str) -> MatchTexts {
    let keyword_text = keyword_text.trim();
    let label_key_text = if keyword_text.is_empty() {
        rec.label.clone()
    } else {
        format!("{}{LABEL_KEY_SEPARATOR}{keyword_text}", rec.label)
    };
    MatchTexts { label_text: rec.label.clone(), sheet_text: rec.sheet_desc.clone(), label_key_text }
}
