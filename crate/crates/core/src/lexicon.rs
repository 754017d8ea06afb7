//! Unigram lexicons: frequency-table ingestion, normalization, entropy and surprisal.
//!
//! Frequency tables are UTF-8 text with one `word<TAB>count` record per line.
//! Lines starting with `#` are comments; `# language: xx` and `# source: ...`
//! comments are picked up as metadata. Counts may be integers or reals.
//!
//! The estimate is plain maximum likelihood. There is no smoothing, so querying
//! a word outside the lexicon is an error rather than a tiny probability.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use thiserror::Error;

const EN_WORDS: &str = include_str!("../assets/lexicons/en_words.tsv");
const ZH_CHARS: &str = include_str!("../assets/lexicons/zh_chars.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("empty word on line {line}")]
    EmptyWord { line: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no word has a count above the minimum of {min_count}")]
    Empty { min_count: f64 },
    #[error("word {0:?} is not in the lexicon")]
    OutOfVocabulary(String),
}

/// Lexicons shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bundled {
    /// 6,000 lowercase English words.
    English,
    /// 3,500 simplified Chinese characters.
    Chinese,
}

impl Bundled {
    pub fn source(self) -> &'static str {
        match self {
            Bundled::English => EN_WORDS,
            Bundled::Chinese => ZH_CHARS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Bundled::English => "bundled:en",
            Bundled::Chinese => "bundled:zh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "bundled:en" => Some(Bundled::English),
            "bundled:zh" => Some(Bundled::Chinese),
            _ => None,
        }
    }
}

/// A vocabulary with a normalized unigram distribution, sorted by descending
/// probability (ties broken lexicographically). Immutable once built.
#[derive(Debug, Clone)]
pub struct Lexicon {
    items: Vec<(String, f64)>,
    index: HashMap<String, usize>,
    language_tag: String,
    source_id: String,
    id: u64,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

impl Lexicon {
    /// Builds a lexicon from raw `(word, weight)` records, dropping weights
    /// `<= min_count` and renormalizing the rest.
    pub fn from_counts<I, S>(
        records: I,
        min_count: f64,
        language_tag: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut seen = HashMap::new();
        let mut kept: Vec<(String, f64)> = Vec::new();
        for (i, (word, count)) in records.into_iter().enumerate() {
            let word = word.into();
            if word.is_empty() {
                return Err(LexiconError::EmptyWord { line: i + 1 });
            }
            if !(count.is_finite() && count >= 0.0) {
                return Err(LexiconError::Parse {
                    line: i + 1,
                    message: format!("count for {word:?} must be a finite non-negative number"),
                });
            }
            if seen.insert(word.clone(), ()).is_some() {
                return Err(LexiconError::DuplicateWord(word));
            }
            if count > min_count {
                kept.push((word, count));
            }
        }
        if kept.is_empty() {
            return Err(LexiconError::Empty { min_count });
        }
        let total: f64 = kept.iter().map(|(_, c)| c).sum();
        for (_, c) in kept.iter_mut() {
            *c /= total;
        }
        kept.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_sorted(kept, language_tag.into(), source_id.into()))
    }

    fn from_sorted(items: Vec<(String, f64)>, language_tag: String, source_id: String) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i))
            .collect();
        let mut h = DefaultHasher::new();
        for (w, p) in &items {
            w.hash(&mut h);
            p.to_bits().hash(&mut h);
        }
        Self {
            items,
            index,
            language_tag,
            source_id,
            id: h.finish(),
        }
    }

    /// Parses a frequency table. See the module docs for the format.
    pub fn parse(source: &str, min_count: f64) -> Result<Self, LexiconError> {
        let mut language = String::from("und");
        let mut origin = String::from("inline");
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for (n, raw) in source.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim_end_matches('\r');
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("language:") {
                    language = v.trim().to_string();
                } else if let Some(v) = comment.strip_prefix("source:") {
                    origin = v.trim().to_string();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let word = fields.next().unwrap_or_default();
            let count = fields.next().ok_or_else(|| LexiconError::Parse {
                line: line_no,
                message: "expected `word<TAB>count`".into(),
            })?;
            if fields.next().is_some() {
                return Err(LexiconError::Parse {
                    line: line_no,
                    message: "too many fields".into(),
                });
            }
            let count: f64 = count.trim().parse().map_err(|_| LexiconError::Parse {
                line: line_no,
                message: format!("bad count {count:?}"),
            })?;
            if word.is_empty() {
                return Err(LexiconError::EmptyWord { line: line_no });
            }
            records.push((word.to_string(), count));
            lines.push(line_no);
        }
        // Re-map record positions back to file lines for error messages.
        Self::from_counts(records, min_count, language, origin).map_err(|e| match e {
            LexiconError::Parse { line, message } => LexiconError::Parse {
                line: lines[line - 1],
                message,
            },
            other => other,
        })
    }

    pub fn bundled(which: Bundled) -> Self {
        let mut lex = Self::parse(which.source(), 0.0).expect("bundled lexicon is valid");
        lex.source_id = which.name().to_string();
        lex
    }

    /// Loads either a `bundled:en` / `bundled:zh` name or a file path.
    pub fn load(path_or_name: &str, min_count: f64) -> std::io::Result<Result<Self, LexiconError>> {
        if let Some(b) = Bundled::from_name(path_or_name) {
            let mut lex = Self::parse(b.source(), min_count);
            if let Ok(l) = lex.as_mut() {
                l.source_id = b.name().to_string();
            }
            return Ok(lex);
        }
        let text = std::fs::read_to_string(path_or_name)?;
        let mut lex = Self::parse(&text, min_count);
        if let Ok(l) = lex.as_mut() {
            if l.source_id == "inline" {
                l.source_id = path_or_name.to_string();
            }
        }
        Ok(lex)
    }

    /// The `n` most probable words, renormalized.
    pub fn top_n(&self, n: usize) -> Self {
        self.restrict(self.items.iter().take(n.max(1)).map(|(w, _)| w.as_str()))
            .expect("prefix of a valid lexicon is valid")
    }

    /// Restricts to the given words (which must all be present), renormalized.
    pub fn restrict<'a, I>(&self, words: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut recs = Vec::new();
        for w in words {
            let p = self.prob(w)?;
            recs.push((w.to_string(), p));
        }
        Self::from_counts(recs, 0.0, self.language_tag.clone(), self.source_id.clone())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(String, f64)] {
        &self.items
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(w, _)| w.as_str())
    }

    pub fn word(&self, i: usize) -> &str {
        &self.items[i].0
    }

    pub fn probs(&self) -> Vec<f64> {
        self.items.iter().map(|(_, p)| *p).collect()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn prob(&self, word: &str) -> Result<f64, LexiconError> {
        self.index_of(word)
            .map(|i| self.items[i].1)
            .ok_or_else(|| LexiconError::OutOfVocabulary(word.to_string()))
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Content fingerprint; two lexicons with identical words and
    /// probabilities share it.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// H(W) = −Σ p ln p.
    pub fn entropy(&self) -> f64 {
        self.items
            .iter()
            .map(|(_, p)| -p * p.ln())
            .sum()
    }

    /// −ln p(w).
    pub fn surprisal(&self, word: &str) -> Result<f64, LexiconError> {
        Ok(-self.prob(word)?.ln())
    }

    /// Serializes back to the frequency-table format with probabilities as counts.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# language: {}", self.language_tag);
        let _ = writeln!(out, "# source: {}", self.source_id);
        for (w, p) in &self.items {
            let _ = writeln!(out, "{w}\t{p:e}");
        }
        out
    }
}

/// Loads a lexicon from frequency-table text.
pub fn load_lexicon(source: &str, min_count: f64) -> Result<Lexicon, LexiconError> {
    Lexicon::parse(source, min_count)
}

pub fn unigram_entropy(lex: &Lexicon) -> f64 {
    lex.entropy()
}

pub fn surprisal(lex: &Lexicon, word: &str) -> Result<f64, LexiconError> {
    lex.surprisal(word)
}
