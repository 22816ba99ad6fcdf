//! Place-name and entity normalization, alias tables and entity sets.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Marker for a field the predictor could not determine.
pub const UNKNOWN: &str = "unknown";

/// Lowercase, strip diacritics, trim and collapse internal whitespace.
///
/// Idempotent: `normalize(&normalize(s)) == normalize(s)`.
pub fn normalize(s: &str) -> String {
    let folded: String = s.to_lowercase().nfd().filter(|c| !is_combining_mark(*c)).collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Maps normalized aliases onto a normalized canonical name, e.g. `usa -> united states`.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    map: HashMap<String, String>,
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alias: &str, canonical: &str) {
        self.map.insert(normalize(alias), normalize(canonical));
    }

    /// Parses `alias<TAB>canonical` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (alias, canonical) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: "expected `alias<TAB>canonical`".into(),
            })?;
            if normalize(alias).is_empty() || normalize(canonical).is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: "empty alias or canonical name".into(),
                });
            }
            table.insert(alias, canonical);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Country/city equality after normalization and alias resolution.
#[derive(Debug, Clone, Default)]
pub struct NameMatcher {
    aliases: AliasTable,
}

impl NameMatcher {
    pub fn new(aliases: AliasTable) -> Self {
        Self { aliases }
    }

    /// Canonical form, or `None` for empty and `unknown` names.
    pub fn canonical(&self, name: &str) -> Option<String> {
        let n = normalize(name);
        if n.is_empty() || n == UNKNOWN {
            return None;
        }
        Some(self.aliases.map.get(&n).cloned().unwrap_or(n))
    }

    /// Unknown names never match anything, including other unknowns.
    pub fn matches(&self, predicted: &str, truth: &str) -> bool {
        match (self.canonical(predicted), self.canonical(truth)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }
}

/// Deduplicated set of normalized entity strings, ordered for deterministic output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct EntitySet(BTreeSet<String>);

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entity: &str) -> bool {
        let n = normalize(entity);
        !n.is_empty() && self.0.insert(n)
    }

    pub fn contains(&self, entity: &str) -> bool {
        self.0.contains(&normalize(entity))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &EntitySet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_len(&self, other: &EntitySet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    pub fn is_disjoint(&self, other: &EntitySet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    /// `|A ∩ B| / |A ∪ B|`; two empty sets have similarity 0.
    pub fn jaccard(&self, other: &EntitySet) -> f64 {
        let union = self.union_len(other);
        if union == 0 {
            return 0.0;
        }
        self.intersection_len(other) as f64 / union as f64
    }
}

impl<S: AsRef<str>> FromIterator<S> for EntitySet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = EntitySet::new();
        for s in iter {
            set.insert(s.as_ref());
        }
        set
    }
}

impl From<Vec<String>> for EntitySet {
    fn from(v: Vec<String>) -> Self {
        v.into_iter().collect()
    }
}

impl From<EntitySet> for Vec<String> {
    fn from(s: EntitySet) -> Self {
        s.0.into_iter().collect()
    }
}

/// Named-entity extraction from free-text rationales.
pub trait EntityExtractor: Send + Sync {
    fn extract(&self, text: &str) -> EntitySet;
}

/// Words that start sentences or clauses and are not entities on their own.
const STOPWORDS: &[&str] = &[
    "a",
    "an",
    "and",
    "as",
    "at",
    "based",
    "but",
    "by",
    "for",
    "from",
    "given",
    "however",
    "i",
    "if",
    "in",
    "it",
    "its",
    "of",
    "on",
    "or",
    "overall",
    "phase",
    "so",
    "the",
    "therefore",
    "these",
    "this",
    "those",
    "thus",
    "to",
    "we",
    "with",
];

/// Rule-based extractor: maximal runs of capitalized words plus gazetteer hits.
///
/// Single-word runs made of a stopword ("The", "This", ...) are dropped; longer runs
/// lose leading stopwords, so "The Eiffel Tower" yields "eiffel tower".
#[derive(Debug, Clone, Default)]
pub struct RuleBasedExtractor {
    gazetteer: Vec<String>,
}

impl RuleBasedExtractor {
    pub fn new<I, S>(gazetteer: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut gazetteer: Vec<String> = gazetteer
            .into_iter()
            .map(|s| normalize(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        gazetteer.sort();
        gazetteer.dedup();
        Self { gazetteer }
    }

    fn push_run(run: &mut Vec<&str>, out: &mut EntitySet) {
        let start = run
            .iter()
            .position(|w| !STOPWORDS.contains(&normalize(w).as_str()))
            .unwrap_or(run.len());
        if start < run.len() {
            out.insert(&run[start..].join(" "));
        }
        run.clear();
    }
}

impl EntityExtractor for RuleBasedExtractor {
    fn extract(&self, text: &str) -> EntitySet {
        let mut out = EntitySet::new();
        let mut run: Vec<&str> = Vec::new();
        for raw in text.split_whitespace() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-');
            let capitalized = word.chars().next().is_some_and(char::is_uppercase);
            if capitalized {
                run.push(word);
            } else if !run.is_empty() {
                Self::push_run(&mut run, &mut out);
            }
            // punctuation after a word closes the run
            let closes = raw.ends_with([',', '.', ';', ':', '!', '?', ')']);
            if closes && !run.is_empty() {
                Self::push_run(&mut run, &mut out);
            }
        }
        if !run.is_empty() {
            Self::push_run(&mut run, &mut out);
        }

        let haystack = format!(" {} ", tokenize_plain(text));
        for term in &self.gazetteer {
            if haystack.contains(&format!(" {term} ")) {
                out.insert(term);
            }
        }
        out
    }
}

/// Normalized text with punctuation replaced by spaces, for word-boundary matching.
fn tokenize_plain(text: &str) -> String {
    let replaced: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '\'' || c == '-' {
                c
            } else {
                ' '
            }
        })
        .collect();
    normalize(&replaced)
}
