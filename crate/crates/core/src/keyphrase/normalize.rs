//! Rule-based token normalization: lowercasing, punctuation stripping,
//! stop-word removal and a small ordered suffix-folding table.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Rewrites `suffix` to `replacement` when at least `min_stem` characters
/// remain in front of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuffixRule {
    pub suffix: String,
    pub replacement: String,
    pub min_stem: usize,
    /// Collapse a doubled final consonant after stripping ("chatting" -> "chat").
    #[serde(default)]
    pub undouble: bool,
}

impl SuffixRule {
    fn new(suffix: &str, replacement: &str, min_stem: usize, undouble: bool) -> Self {
        SuffixRule {
            suffix: suffix.into(),
            replacement: replacement.into(),
            min_stem,
            undouble,
        }
    }
}

/// Words that never end in a plural `s`.
const S_KEEP: [&str; 3] = ["ss", "us", "is"];

/// The default folding table. The first matching rule wins; at most one
/// rule applies per token.
///
/// | suffix | becomes | min stem | undouble |
/// |--------|---------|----------|----------|
/// | sses   | ss      | 2        | no       |
/// | ies    | y       | 2        | no       |
/// | ing    |         | 3        | yes      |
/// | ed     |         | 3        | yes      |
/// | s      |         | 3        | no (skipped after ss, us, is) |
pub fn default_rules() -> Vec<SuffixRule> {
    vec![
        SuffixRule::new("sses", "ss", 2, false),
        SuffixRule::new("ies", "y", 2, false),
        SuffixRule::new("ing", "", 3, true),
        SuffixRule::new("ed", "", 3, true),
        SuffixRule::new("s", "", 3, false),
    ]
}

pub const DEFAULT_STOP_WORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "v",
];

#[derive(Debug, Clone)]
pub struct Normalizer {
    stop_words: HashSet<String>,
    rules: Vec<SuffixRule>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::new(
            DEFAULT_STOP_WORDS.iter().map(|s| s.to_string()),
            default_rules(),
        )
    }
}

impl Normalizer {
    pub fn new<I: IntoIterator<Item = String>>(stop_words: I, rules: Vec<SuffixRule>) -> Self {
        Normalizer {
            stop_words: stop_words.into_iter().map(|w| w.to_lowercase()).collect(),
            rules,
        }
    }

    pub fn is_stop_word(&self, token: &str) -> bool {
        self.stop_words.contains(token)
    }

    pub fn normalize(&self, text: &str) -> Vec<String> {
        words(text)
            .filter(|w| !self.is_stop_word(w))
            .map(|w| self.fold(&w))
            .filter(|w| !w.is_empty() && !self.is_stop_word(w))
            .collect()
    }

    /// Applies the first matching suffix rule to one lowercase word.
    pub fn fold(&self, word: &str) -> String {
        for rule in &self.rules {
            let Some(stem) = word.strip_suffix(rule.suffix.as_str()) else {
                continue;
            };
            if stem.chars().count() < rule.min_stem {
                continue;
            }
            if rule.suffix == "s" && S_KEEP.iter().any(|k| word.ends_with(k)) {
                continue;
            }
            let mut out = stem.to_string();
            if rule.undouble {
                undouble(&mut out);
            }
            out.push_str(&rule.replacement);
            return out;
        }
        word.to_string()
    }
}

fn undouble(stem: &mut String) {
    let chars: Vec<char> = stem.chars().collect();
    if let [.., a, b] = chars.as_slice() {
        if a == b && a.is_ascii_alphabetic() && !"aeioulsz".contains(*a) {
            stem.pop();
        }
    }
}

/// Lowercase alphanumeric words. A trailing possessive `'s` is dropped and
/// every other non-alphanumeric character separates words.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower
                .strip_suffix("'s")
                .or_else(|| lower.strip_suffix("\u{2019}s"))
                .unwrap_or(&lower);
            let cleaned: String = trimmed.chars().filter(|c| c.is_alphanumeric()).collect();
            (!cleaned.is_empty()).then_some(cleaned)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text() {
        assert!(Normalizer::default().normalize("").is_empty());
    }

    #[test]
    fn worked_example() {
        assert_eq!(
            Normalizer::default().normalize("He was TEXTING his friend."),
            vec!["text", "friend"]
        );
    }

    #[test]
    fn rule_table() {
        let n = Normalizer::default();
        assert_eq!(n.fold("chatting"), "chat");
        assert_eq!(n.fold("called"), "call");
        assert_eq!(n.fold("replies"), "reply");
        assert_eq!(n.fold("messages"), "message");
        assert_eq!(n.fold("classes"), "class");
        assert_eq!(n.fold("texted"), "text");
        assert_eq!(n.fold("thing"), "thing");
        assert_eq!(n.fold("bus"), "bus");
        assert_eq!(n.fold("analysis"), "analysis");
    }

    #[test]
    fn possessives_and_punctuation() {
        assert_eq!(
            Normalizer::default().normalize("V's phone, laptop & e-mail."),
            vec!["phone", "laptop", "e", "mail"]
        );
    }

    proptest! {
        #[test]
        fn output_never_contains_stop_words(text in "[A-Za-z ,.'!?]{0,200}") {
            let n = Normalizer::default();
            for tok in n.normalize(&text) {
                prop_assert!(!n.is_stop_word(&tok));
                prop_assert!(tok.chars().all(|c| c.is_alphanumeric()));
                prop_assert_eq!(tok.to_lowercase(), tok.clone());
            }
        }
    }
}
