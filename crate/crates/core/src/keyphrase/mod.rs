//! Keyphrase discovery and keyphrase-based sampling.
//!
//! Starter phrases are expanded with their nearest neighbours in a
//! skip-gram embedding space; a human then prunes the candidates into a
//! keyphrase file. Keyphrases stratify the corpus for annotation, and the
//! recall of the keyphrase filter is estimated from two annotated strata.

pub mod embed;
pub mod normalize;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CaseRecord;
pub use embed::{cosine, train_embeddings, EmbeddingConfig, EmbeddingSet, Vocabulary};
pub use normalize::{Normalizer, SuffixRule};

#[derive(Debug, thiserror::Error)]
pub enum KeyphraseError {
    #[error("vocabulary is empty after pruning tokens seen fewer than {min_count} times")]
    EmptyVocabulary { min_count: u64 },
    #[error("token `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("phrase `{0}` has no tokens after normalization")]
    EmptyPhrase(String),
    #[error("vectors must all share one dimension, one per token")]
    Dimension,
    #[error("invalid keyphrase pattern `{pattern}`: {reason}")]
    Pattern { pattern: String, reason: String },
    #[error("{stratum} stratum has {available} cases, {requested} requested")]
    StratumTooSmall {
        stratum: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("stratum shares sum to {0}, expected 1")]
    Shares(f64),
    #[error("no true positives in either stratum; recall is undefined")]
    ZeroDenominator,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Lowercase phrase, optionally ending in `*` to match any word with the
/// given prefix in final position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KeyphrasePattern {
    raw: String,
    words: Vec<String>,
    wildcard: bool,
}

impl KeyphrasePattern {
    pub fn parse(pattern: &str) -> Result<Self, KeyphraseError> {
        let raw = pattern.trim().to_lowercase();
        let bad = |reason: &str| KeyphraseError::Pattern {
            pattern: pattern.to_string(),
            reason: reason.to_string(),
        };
        if raw.is_empty() {
            return Err(bad("empty pattern"));
        }
        let (body, wildcard) = match raw.strip_suffix('*') {
            Some(body) => (body, true),
            None => (raw.as_str(), false),
        };
        if body.contains('*') {
            return Err(bad("`*` is only allowed at the end"));
        }
        let words: Vec<String> = normalize::words(body).collect();
        if words.is_empty() {
            return Err(bad("no word characters"));
        }
        if wildcard && body.ends_with(|c: char| !c.is_alphanumeric()) {
            return Err(bad("`*` must directly follow a word"));
        }
        Ok(KeyphrasePattern {
            raw,
            words,
            wildcard,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn is_wildcard(&self) -> bool {
        self.wildcard
    }

    fn matches_at(&self, words: &[String], start: usize) -> bool {
        let n = self.words.len();
        if start + n > words.len() {
            return false;
        }
        let (last, head) = self.words.split_last().unwrap();
        head.iter().zip(&words[start..]).all(|(p, w)| p == w)
            && if self.wildcard {
                words[start + n - 1].starts_with(last.as_str())
            } else {
                words[start + n - 1] == *last
            }
    }

    /// True when the pattern occurs in the word sequence.
    pub fn matches_words(&self, words: &[String]) -> bool {
        (0..words.len()).any(|i| self.matches_at(words, i))
    }

    /// Number of occurrences in the word sequence.
    pub fn count_in_words(&self, words: &[String]) -> usize {
        (0..words.len())
            .filter(|&i| self.matches_at(words, i))
            .count()
    }
}

impl fmt::Display for KeyphrasePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl FromStr for KeyphrasePattern {
    type Err = KeyphraseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KeyphrasePattern::parse(s)
    }
}

impl TryFrom<String> for KeyphrasePattern {
    type Error = KeyphraseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        KeyphrasePattern::parse(&s)
    }
}

impl From<KeyphrasePattern> for String {
    fn from(p: KeyphrasePattern) -> String {
        p.raw
    }
}

/// Parses a keyphrase file: one pattern per line, `#` starts a comment.
pub fn parse_keyphrase_file(text: &str) -> Result<Vec<KeyphrasePattern>, KeyphraseError> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|line| !line.is_empty())
        .map(KeyphrasePattern::parse)
        .collect()
}

/// The six most frequent keyphrases reported for the full analytic sample.
pub const DISCLOSED_KEYPHRASES: &str = include_str!("../../assets/keyphrases.txt");

/// Starter phrases for embedding expansion.
pub const STARTER_PHRASES: &str = include_str!("../../assets/starter_phrases.txt");

/// Patterns occurring in `narrative`, compared case-insensitively on whole
/// words. Plain patterns need an exact word (or word sequence) match; a
/// trailing `*` matches any final word with that prefix.
pub fn match_keyphrases<'p>(
    narrative: &str,
    patterns: &'p [KeyphrasePattern],
) -> Vec<&'p KeyphrasePattern> {
    let words: Vec<String> = normalize::words(narrative).collect();
    let mut hits: Vec<&KeyphrasePattern> = patterns
        .iter()
        .filter(|p| p.matches_words(&words))
        .collect();
    hits.sort();
    hits.dedup();
    hits
}

pub fn has_keyphrase(narrative: &str, patterns: &[KeyphrasePattern]) -> bool {
    let words: Vec<String> = normalize::words(narrative).collect();
    patterns.iter().any(|p| p.matches_words(&words))
}

/// A vocabulary token close to a starter phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCandidate {
    pub token: String,
    pub similarity: f64,
    pub source_phrase: String,
}

/// The `k` tokens nearest to `phrase` by cosine similarity.
///
/// Multi-word phrases are represented by the unweighted mean of their
/// token vectors. The phrase's own tokens are excluded; ties keep
/// vocabulary order.
pub fn most_similar(
    embeddings: &EmbeddingSet,
    normalizer: &Normalizer,
    phrase: &str,
    k: usize,
) -> Result<Vec<ExpansionCandidate>, KeyphraseError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let tokens = normalizer.normalize(phrase);
    if tokens.is_empty() {
        return Err(KeyphraseError::EmptyPhrase(phrase.to_string()));
    }
    let ids: Vec<usize> = tokens
        .iter()
        .map(|t| {
            embeddings
                .vocab
                .id(t)
                .ok_or_else(|| KeyphraseError::OutOfVocabulary(t.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut query = vec![0.0; embeddings.dimension];
    for &id in &ids {
        for (q, x) in query.iter_mut().zip(embeddings.vector(id)) {
            *q += x / ids.len() as f64;
        }
    }
    let mut scored: Vec<(usize, f64)> = (0..embeddings.vocab.len())
        .filter(|id| !ids.contains(id))
        .map(|id| (id, cosine(&query, embeddings.vector(id))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(id, similarity)| ExpansionCandidate {
            token: embeddings.vocab.tokens()[id].clone(),
            similarity,
            source_phrase: phrase.to_string(),
        })
        .collect())
}

/// Writes the expansion report: one row per candidate, grouped by starter
/// phrase in input order and ranked by similarity within each group.
pub fn write_expansion_csv<W: Write>(
    out: W,
    candidates: &[ExpansionCandidate],
) -> Result<(), KeyphraseError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source_phrase", "candidate", "similarity"])?;
    for c in candidates {
        w.write_record([
            c.source_phrase.as_str(),
            c.token.as_str(),
            &format!("{:.6}", c.similarity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Draws `n_with` cases containing a keyphrase and `n_without` cases
/// containing none, uniformly without replacement within each stratum.
/// Each sample is returned in corpus order.
pub fn sample_annotation_set(
    cases: &[CaseRecord],
    patterns: &[KeyphrasePattern],
    n_with: usize,
    n_without: usize,
    seed: u64,
) -> Result<(Vec<CaseRecord>, Vec<CaseRecord>), KeyphraseError> {
    let (with, without): (Vec<&CaseRecord>, Vec<&CaseRecord>) = cases
        .iter()
        .partition(|c| has_keyphrase(&c.pipeline_text(), patterns));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |pool: &[&CaseRecord], k: usize, stratum: &'static str| {
        if k > pool.len() {
            return Err(KeyphraseError::StratumTooSmall {
                stratum,
                requested: k,
                available: pool.len(),
            });
        }
        let mut idx = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
        idx.sort_unstable();
        Ok(idx.into_iter().map(|i| pool[i].clone()).collect::<Vec<_>>())
    };
    let with_hits = draw(&with, n_with, "keyphrase")?;
    let without_hits = draw(&without, n_without, "no-keyphrase")?;
    Ok((with_hits, without_hits))
}

/// Recall of the keyphrase filter within a population split into cases
/// with and without keyphrases: the share of relevant cases that fall in
/// the keyphrase stratum, from each stratum's share and precision.
pub fn estimate_keyphrase_recall(
    share_flagged_without_kp: f64,
    precision_without_kp: f64,
    share_flagged_with_kp: f64,
    precision_with_kp: f64,
) -> Result<f64, KeyphraseError> {
    for (name, value) in [
        ("share_flagged_without_kp", share_flagged_without_kp),
        ("precision_without_kp", precision_without_kp),
        ("share_flagged_with_kp", share_flagged_with_kp),
        ("precision_with_kp", precision_with_kp),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(KeyphraseError::OutOfRange { name, value });
        }
    }
    let total = share_flagged_with_kp + share_flagged_without_kp;
    if (total - 1.0).abs() > 1e-6 {
        return Err(KeyphraseError::Shares(total));
    }
    let inside = share_flagged_with_kp * precision_with_kp;
    let outside = share_flagged_without_kp * precision_without_kp;
    if inside + outside == 0.0 {
        return Err(KeyphraseError::ZeroDenominator);
    }
    Ok(inside / (inside + outside))
}
