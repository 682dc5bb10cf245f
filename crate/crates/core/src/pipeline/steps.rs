//! The four pipeline steps and the parsers for their answers.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::prompts::{PromptKind, PromptSet, REASK_PREFIX};
use super::{CaseFlags, OnlineFlags, SentenceUnit};
use crate::llm::{extract_json_object, ChatRequest, LlmClient, LlmError};
use crate::taxonomy::{SourceOfInformation, ThemeLabel};

/// Largest tolerated edit distance between a narrative and its re-joined
/// sentences, as a share of the narrative length (whitespace ignored).
pub const SPLIT_TOLERANCE: f64 = 0.01;

/// Model, prompts and client for one run, plus the re-ask policy.
pub struct StepContext<'a> {
    pub llm: &'a dyn LlmClient,
    pub prompts: &'a PromptSet,
    pub model: &'a str,
    pub reask: bool,
}

impl StepContext<'_> {
    fn ask(&self, user: String) -> Result<String, LlmError> {
        let req = ChatRequest::new(self.model, &self.prompts.system, user);
        self.llm.complete(&req).map(|r| r.content)
    }

    /// Asks once and, if `parse` rejects the answer, asks again with a format
    /// reminder in front of the same message. Transport failures are not
    /// re-asked; the client already retried them.
    fn ask_parsed<T>(
        &self,
        user: String,
        flags: &mut CaseFlags,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Option<T> {
        let first = match self.ask(user.clone()) {
            Ok(content) => content,
            Err(e) => {
                flags.llm_errors.push(e.to_string());
                return None;
            }
        };
        if let Some(v) = parse(&first) {
            return Some(v);
        }
        if !self.reask {
            return None;
        }
        flags.reasks += 1;
        match self.ask(format!("{REASK_PREFIX}{user}")) {
            Ok(content) => parse(&content),
            Err(e) => {
                flags.llm_errors.push(e.to_string());
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub sentences: Vec<String>,
    /// True when the rule-based splitter replaced the model's answer.
    pub fallback: bool,
    /// Normalized edit distance of the model's answer, when there was one.
    pub distance: Option<f64>,
}

/// Step 1. Asks the model for the sentence list and checks that re-joining
/// it reproduces the narrative; otherwise falls back to [`fallback_split`].
pub fn split_sentences(
    narrative: &str,
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> SplitOutcome {
    if narrative.trim().is_empty() {
        return SplitOutcome {
            sentences: Vec::new(),
            fallback: false,
            distance: None,
        };
    }
    let answer = match ctx.ask(ctx.prompts.split_message(narrative)) {
        Ok(content) => Some(parse_sentence_list(&content)),
        Err(e) => {
            flags.llm_errors.push(e.to_string());
            None
        }
    };
    let distance = answer
        .as_ref()
        .filter(|s| !s.is_empty())
        .map(|s| split_distance(narrative, s));
    match (answer, distance) {
        (Some(sentences), Some(d)) if d < SPLIT_TOLERANCE => SplitOutcome {
            sentences,
            fallback: false,
            distance: Some(d),
        },
        _ => {
            flags.split_fallback = true;
            SplitOutcome {
                sentences: fallback_split(narrative),
                fallback: true,
                distance,
            }
        }
    }
}

/// Levenshtein distance between the narrative and the joined sentences with
/// all whitespace removed, divided by the narrative's length.
pub fn split_distance(narrative: &str, sentences: &[String]) -> f64 {
    let a: String = narrative.chars().filter(|c| !c.is_whitespace()).collect();
    let b: String = sentences
        .iter()
        .flat_map(|s| s.chars())
        .filter(|c| !c.is_whitespace())
        .collect();
    if a == b {
        return 0.0;
    }
    strsim::levenshtein(&a, &b) as f64 / a.chars().count().max(1) as f64
}

/// Reads a sentence list given as a JSON array, a numbered or bulleted
/// list, or one sentence per line.
pub fn parse_sentence_list(content: &str) -> Vec<String> {
    if let (Some(start), Some(end)) = (content.find('['), content.rfind(']')) {
        if start < end {
            let block = &content[start..=end];
            let parsed: Option<Vec<String>> = serde_json::from_str(block)
                .ok()
                .or_else(|| serde_json::from_str(&crate::llm::json::requote(block)).ok());
            if let Some(list) = parsed {
                let list: Vec<String> = list
                    .into_iter()
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if !list.is_empty() {
                    return list;
                }
            }
        }
    }
    let lines: Vec<&str> = content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let marked: Vec<String> = lines.iter().filter_map(|l| strip_list_marker(l)).collect();
    let items = if marked.is_empty() {
        lines.iter().map(|l| l.to_string()).collect()
    } else {
        marked
    };
    items
        .into_iter()
        .map(|s| unquote(&s).to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn strip_list_marker(line: &str) -> Option<String> {
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    let rest = if digits > 0 {
        let rest = &line[digits..];
        rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?
    } else {
        line.strip_prefix("- ")
            .or_else(|| line.strip_prefix("* "))
            .or_else(|| line.strip_prefix("\u{2022}"))?
    };
    let rest = rest.trim();
    (!rest.is_empty()).then(|| rest.to_string())
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return s[1..s.len() - 1].trim();
        }
    }
    s
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "lt", "sgt", "det", "ofc", "capt", "dept", "approx",
    "vs", "no", "inc", "co", "e.g", "i.e", "a.m", "p.m", "u.s", "mt", "ave", "blvd", "hwy",
];

/// Rule-based splitter: a sentence ends at `.`, `!` or `?` (plus closing
/// quotes or brackets) followed by whitespace and an uppercase letter,
/// digit or opening quote, unless the word before the period is a known
/// abbreviation. Blank lines always end a sentence.
pub fn fallback_split(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        let chars: Vec<char> = block.chars().collect();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if matches!(c, '.' | '!' | '?') {
                let mut end = i + 1;
                while end < chars.len() && matches!(chars[end], '"' | '\'' | ')' | ']' | '\u{201d}')
                {
                    end += 1;
                }
                let mut next = end;
                while next < chars.len() && chars[next].is_whitespace() {
                    next += 1;
                }
                let boundary = next > end
                    && next < chars.len()
                    && (chars[next].is_uppercase()
                        || chars[next].is_ascii_digit()
                        || matches!(chars[next], '"' | '\'' | '(' | '\u{201c}'))
                    && !(c == '.' && is_abbreviation(&chars[start..i]));
                if boundary {
                    push_sentence(&mut out, &chars[start..end]);
                    start = next;
                    i = next;
                    continue;
                }
            }
            i += 1;
        }
        push_sentence(&mut out, &chars[start..]);
    }
    out
}

fn push_sentence(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        out.push(s);
    }
}

fn is_abbreviation(before: &[char]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|c| !c.is_whitespace() && **c != '(')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOutcome {
    pub flags: OnlineFlags,
    pub parse_failed: bool,
}

/// Step 2. Parses the JSON answer into [`OnlineFlags`]; an unreadable
/// answer (after one re-ask) yields all-false flags.
pub fn detect_online(
    sentence: &str,
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> OnlineOutcome {
    let msg = ctx.prompts.sentence_message(PromptKind::Online, sentence);
    match ctx.ask_parsed(msg, flags, parse_online_answer) {
        Some(f) => OnlineOutcome {
            flags: f,
            parse_failed: false,
        },
        None => {
            flags.online_parse_failures += 1;
            OnlineOutcome {
                flags: OnlineFlags::default(),
                parse_failed: true,
            }
        }
    }
}

pub fn parse_online_answer(content: &str) -> Option<OnlineFlags> {
    let obj = extract_json_object(content).ok()?;
    obj.get("technology")?;
    Some(
        OnlineFlags {
            technology: obj.flag("technology"),
            phrases: obj.strings("phrases"),
            internet: obj.flag("internet"),
            participate: obj.tri("participate"),
        }
        .normalized(),
    )
}

/// Yes/no answer from the first word of a reply.
pub fn parse_yes_no(content: &str) -> Option<bool> {
    let word: String = content
        .trim()
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    match word.to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Step 3. Queries each consecutive pair and merges "Yes" pairs
/// transitively. An unusable answer counts as "No".
pub fn link_related(
    case_id: &str,
    sentences: &[String],
    online: &[OnlineFlags],
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> Vec<SentenceUnit> {
    let joins: Vec<bool> = sentences
        .windows(2)
        .map(|pair| {
            let msg = ctx.prompts.link_message(&pair[0], &pair[1]);
            ctx.ask_parsed(msg, flags, parse_yes_no).unwrap_or_else(|| {
                flags.link_failures += 1;
                false
            })
        })
        .collect();
    build_units(case_id, sentences, online, &joins)
}

/// Groups sentences into units given whether each consecutive pair joins.
pub fn build_units(
    case_id: &str,
    sentences: &[String],
    online: &[OnlineFlags],
    joins: &[bool],
) -> Vec<SentenceUnit> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..sentences.len() {
        if i > 0 && joins.get(i - 1).copied().unwrap_or(false) {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(k, idx)| {
            let text = idx
                .iter()
                .map(|&i| sentences[i].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let flags = idx
                .iter()
                .filter_map(|&i| online.get(i))
                .fold(OnlineFlags::default(), |acc, f| acc.or(f));
            SentenceUnit {
                unit_id: format!("{case_id}-u{k}"),
                case_id: case_id.to_string(),
                sentence_indices: idx,
                text,
                flags,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LetterOutcome {
    pub letter: Option<char>,
    pub theme: Option<ThemeLabel>,
}

/// Option letter at the start of a reply: `A`, `A.`, `(A)`, `**A**`,
/// `Answer: A`. Letters outside `alphabet` are rejected.
pub fn parse_letter(content: &str, alphabet: RangeInclusive<char>) -> Option<char> {
    let mut s = content.trim();
    for prefix in ["the answer is", "answer:", "answer", "option"] {
        if s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
            s = s[prefix.len()..].trim_start();
        }
    }
    let s = s.trim_start_matches(|c: char| {
        matches!(c, '*' | '(' | '[' | '"' | '\'' | '`') || c.is_whitespace()
    });
    let mut chars = s.chars();
    let c = chars.next()?.to_ascii_uppercase();
    if chars.next().is_some_and(char::is_alphanumeric) {
        return None;
    }
    alphabet.contains(&c).then_some(c)
}

/// Steps 4a to 4c: one forced-choice prompt, mapped through the prompt's
/// letter table. An invalid letter (after one re-ask) yields no theme.
pub fn classify_letter(
    kind: PromptKind,
    unit: &SentenceUnit,
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> LetterOutcome {
    let alphabet = kind.alphabet().expect("forced-choice prompt");
    let msg = ctx.prompts.sentence_message(kind, &unit.text);
    let letter = ctx.ask_parsed(msg, flags, |c| parse_letter(c, alphabet.clone()));
    if letter.is_none() {
        flags.invalid_letters += 1;
    }
    LetterOutcome {
        letter,
        theme: letter.and_then(|l| kind.theme_for(l)),
    }
}

pub fn classify_harm(
    unit: &SentenceUnit,
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> LetterOutcome {
    classify_letter(PromptKind::Harm, unit, ctx, flags)
}

pub fn classify_interpersonal(
    unit: &SentenceUnit,
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> LetterOutcome {
    classify_letter(PromptKind::Interpersonal, unit, ctx, flags)
}

pub fn classify_activity(
    unit: &SentenceUnit,
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> LetterOutcome {
    classify_letter(PromptKind::Activity, unit, ctx, flags)
}

/// Answers to the information-source question set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceEvidence {
    pub sm: bool,
    pub nok: bool,
    pub source_known: bool,
    pub source: Option<char>,
}

impl SourceEvidence {
    pub fn resolve(&self) -> SourceOfInformation {
        match (self.source_known, self.source) {
            (true, Some('B')) => SourceOfInformation::LeSearches,
            (true, Some('A')) => SourceOfInformation::NokExplicit,
            (false, _) if self.sm || self.nok => SourceOfInformation::NokImplicit,
            _ => SourceOfInformation::Unknown,
        }
    }
}

pub fn parse_source_answer(content: &str) -> Option<SourceEvidence> {
    let obj = extract_json_object(content).ok()?;
    if !["sm", "nok", "source_known", "source"]
        .iter()
        .any(|k| obj.get(k).is_some())
    {
        return None;
    }
    let source = obj.text("source").and_then(|s| {
        let t = s.trim().trim_start_matches(['(', '[', '*']);
        let mut chars = t.chars();
        match (chars.next().map(|c| c.to_ascii_uppercase()), chars.next()) {
            (Some(c @ ('A' | 'B')), None) => Some(c),
            (Some(c @ ('A' | 'B')), Some(n)) if !n.is_alphanumeric() => Some(c),
            _ => {
                let lower = t.to_lowercase();
                if lower.contains("kin") {
                    Some('A')
                } else if lower.contains("search") || lower.contains("device") {
                    Some('B')
                } else {
                    None
                }
            }
        }
    });
    Some(SourceEvidence {
        sm: obj.flag("sm"),
        nok: obj.flag("nok"),
        source_known: obj.flag("source_known"),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceOutcome {
    pub evidence: Option<SourceEvidence>,
    pub source: SourceOfInformation,
}

/// Step 4d. Unreadable answers resolve to `Unknown`.
pub fn classify_source(
    unit: &SentenceUnit,
    ctx: &StepContext<'_>,
    flags: &mut CaseFlags,
) -> SourceOutcome {
    let msg = ctx.prompts.sentence_message(PromptKind::Source, &unit.text);
    match ctx.ask_parsed(msg, flags, parse_source_answer) {
        Some(ev) => SourceOutcome {
            evidence: Some(ev),
            source: ev.resolve(),
        },
        None => {
            flags.source_parse_failures += 1;
            SourceOutcome {
                evidence: None,
                source: SourceOfInformation::Unknown,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::TriState;
    use crate::llm::{Fixture, FixtureRule, MatchMode, ScriptedLlm, Unmatched};
    use proptest::prelude::*;

    fn run<T>(
        fixture: Fixture,
        f: impl FnOnce(&StepContext<'_>, &mut CaseFlags) -> T,
    ) -> (T, CaseFlags) {
        let llm = ScriptedLlm::new(fixture);
        let prompts = PromptSet::builtin();
        let ctx = StepContext {
            llm: &llm,
            prompts: &prompts,
            model: "m",
            reask: true,
        };
        let mut flags = CaseFlags::default();
        let out = f(&ctx, &mut flags);
        (out, flags)
    }

    fn always(answer: &str) -> Fixture {
        Fixture::new(vec![FixtureRule::new(MatchMode::Any, "", answer)])
    }

    #[test]
    fn split_single_sentence() {
        let text = "V was found deceased at home.";
        let (out, flags) = run(always("[\"V was found deceased at home.\"]"), |c, f| {
            split_sentences(text, c, f)
        });
        assert_eq!(out.sentences, [text]);
        assert!(!out.fallback && !flags.split_fallback);
    }

    #[test]
    fn split_three_sentences_exact() {
        let text = "V was last seen alive at night. V's grandmother went to check on him. V was found on his bed.";
        let answer = "1. V was last seen alive at night.\n2. V's grandmother went to check on him.\n3. V was found on his bed.";
        let (out, _) = run(always(answer), |c, f| split_sentences(text, c, f));
        assert_eq!(out.sentences.len(), 3);
        assert_eq!(out.distance, Some(0.0));
    }

    #[test]
    fn hallucinated_clause_engages_fallback() {
        let text = "V was last seen alive at night. V's grandmother went to check on him. V was found on his bed.";
        let answer = "[\"V was last seen alive at night.\", \"V's grandmother went to check on him after an argument about grades.\", \"V was found on his bed.\"]";
        let (out, flags) = run(always(answer), |c, f| split_sentences(text, c, f));
        assert!(out.fallback && flags.split_fallback);
        assert!(out.distance.unwrap() >= SPLIT_TOLERANCE);
        assert_eq!(out.sentences, fallback_split(text));
        assert_eq!(out.sentences.len(), 3);
    }

    #[test]
    fn llm_failure_falls_back() {
        let (out, flags) = run(Fixture::new(Vec::new()), |c, f| {
            split_sentences("One. Two.", c, f)
        });
        assert!(out.fallback);
        assert_eq!(out.sentences, ["One.", "Two."]);
        assert_eq!(flags.llm_errors.len(), 1);
    }

    #[test]
    fn fallback_rules() {
        assert_eq!(
            fallback_split("Dr. Smith arrived at 9 a.m. The V was 15. \"Help,\" V wrote? No reply.\n\nCME text."),
            vec!["Dr. Smith arrived at 9 a.m. The V was 15.", "\"Help,\" V wrote?", "No reply.", "CME text."]
        );
        assert_eq!(
            fallback_split("found by V. The end."),
            ["found by V.", "The end."]
        );
        assert!(fallback_split("   ").is_empty());
    }

    proptest! {
        #[test]
        fn fallback_preserves_text(words in proptest::collection::vec("[A-Za-z]{1,8}[.?!]?", 1..40)) {
            let text = words.join(" ");
            let parts = fallback_split(&text);
            prop_assert_eq!(split_distance(&text, &parts), 0.0);
        }
    }

    #[test]
    fn sentence_list_formats() {
        assert_eq!(
            parse_sentence_list("Here you go: ['A b.', 'C d.']"),
            ["A b.", "C d."]
        );
        assert_eq!(
            parse_sentence_list("Sentences:\n1) A b.\n2) C d."),
            ["A b.", "C d."]
        );
        assert_eq!(parse_sentence_list("- \"A b.\"\n- C d."), ["A b.", "C d."]);
        assert_eq!(parse_sentence_list("A b.\nC d."), ["A b.", "C d."]);
    }

    #[test]
    fn online_examples() {
        let cases = [
            ("{'technology':'No', 'phrases': [], 'internet':'No', 'participate':'No'}", false, false),
            ("{'technology':'Yes', 'phrases': ['called'], 'internet':'No', 'participate':'No'}", true, false),
            ("{'technology':'Yes', 'phrases': ['phone', 'websites', 'chat forums'], 'internet':'Yes', 'participate':'Yes'}", true, true),
        ];
        for (answer, tech, online) in cases {
            let f = parse_online_answer(answer).unwrap();
            assert_eq!(f.technology, tech);
            assert_eq!(f.is_online(), online, "{answer}");
        }
    }

    #[test]
    fn online_answer_invariant_enforced() {
        let f = parse_online_answer(
            "{'technology':'No','phrases':['x'],'internet':'Yes','participate':'Yes'}",
        )
        .unwrap();
        assert_eq!(f, OnlineFlags::default());
        assert!(parse_online_answer("{'foo': 1}").is_none());
    }

    #[test]
    fn unknown_participation_is_not_online() {
        let f = parse_online_answer(
            "{'technology':'Yes','phrases':['phone'],'internet':'Yes','participate':'Unknown'}",
        )
        .unwrap();
        assert_eq!(f.participate, TriState::Unknown);
        assert!(!f.is_online());
    }

    #[test]
    fn reask_then_degrade() {
        let fixture = Fixture::new(vec![
            FixtureRule::new(MatchMode::Sequence, "", "not json"),
            FixtureRule::new(
                MatchMode::Sequence,
                "",
                "{'technology':'Yes','phrases':[],'internet':'Yes','participate':'Yes'}",
            ),
        ]);
        let (out, flags) = run(fixture, |c, f| detect_online("s", c, f));
        assert!(out.flags.is_online() && !out.parse_failed);
        assert_eq!(flags.reasks, 1);

        let (out, flags) = run(always("still not json"), |c, f| detect_online("s", c, f));
        assert!(out.parse_failed);
        assert_eq!(out.flags, OnlineFlags::default());
        assert_eq!(flags.online_parse_failures, 1);
        assert_eq!(flags.reasks, 1);
    }

    #[test]
    fn reask_keeps_message_suffix() {
        let prompts = PromptSet::builtin();
        let fixture = Fixture::new(vec![
            FixtureRule::new(MatchMode::Sequence, "", "??"),
            FixtureRule::new(MatchMode::Suffix, "Sentence: s", "B").requiring(REASK_PREFIX.trim()),
        ]);
        let unit = build_units("c", &["s".to_string()], &[], &[]).remove(0);
        let llm = ScriptedLlm::new(fixture);
        let ctx = StepContext {
            llm: &llm,
            prompts: &prompts,
            model: "m",
            reask: true,
        };
        let mut flags = CaseFlags::default();
        let out = classify_harm(&unit, &ctx, &mut flags);
        assert_eq!(out.theme, Some(ThemeLabel::GraphicDisclosure));
        assert_eq!(llm.calls(), 2);
    }

    fn units_from_answers(n: usize, yes: &[usize]) -> Vec<Vec<usize>> {
        let sentences: Vec<String> = (0..n).map(|i| format!("s{i}.")).collect();
        let mut rules: Vec<FixtureRule> = yes
            .iter()
            .map(|&i| {
                FixtureRule::new(
                    MatchMode::Suffix,
                    format!("First Sentence: s{i}.\n\nSecond Sentence: s{}.", i + 1),
                    "Yes",
                )
            })
            .collect();
        rules.push(FixtureRule::new(MatchMode::Any, "", "No"));
        let (units, _) = run(Fixture::new(rules), |c, f| {
            link_related("c", &sentences, &[], c, f)
        });
        units.into_iter().map(|u| u.sentence_indices).collect()
    }

    /// Union-find over the pairs answered "Yes".
    fn union_find_groups(n: usize, yes: &[usize]) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for &i in yes {
            let (a, b) = (find(&mut parent, i), find(&mut parent, i + 1));
            parent[b] = a;
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort();
        out
    }

    #[test]
    fn linking_cases() {
        assert_eq!(units_from_answers(1, &[]), vec![vec![0]]);
        assert_eq!(
            units_from_answers(4, &[]),
            vec![vec![0], vec![1], vec![2], vec![3]]
        );
        assert_eq!(
            units_from_answers(4, &[1]),
            vec![vec![0], vec![1, 2], vec![3]]
        );
        assert_eq!(units_from_answers(4, &[1]), union_find_groups(4, &[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn linking_matches_union_find(n in 1usize..9, mask in any::<u16>()) {
            let yes: Vec<usize> = (0..n.saturating_sub(1)).filter(|i| mask >> i & 1 == 1).collect();
            prop_assert_eq!(units_from_answers(n, &yes), union_find_groups(n, &yes));
        }
    }

    #[test]
    fn unit_flags_are_or_of_members() {
        let s: Vec<String> = vec!["a".into(), "b".into()];
        let online = vec![
            OnlineFlags {
                technology: true,
                phrases: vec!["phone".into()],
                internet: false,
                participate: TriState::Yes,
            },
            OnlineFlags {
                technology: true,
                phrases: vec!["chat".into()],
                internet: true,
                participate: TriState::Unknown,
            },
        ];
        let u = build_units("c", &s, &online, &[true]);
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].text, "a b");
        assert!(u[0].flags.is_online());
        assert_eq!(u[0].flags.phrases, ["phone", "chat"]);
    }

    #[test]
    fn link_failure_counts_as_no() {
        let s: Vec<String> = vec!["a".into(), "b".into()];
        let (units, flags) = run(always("Perhaps"), |c, f| link_related("c", &s, &[], c, f));
        assert_eq!(units.len(), 2);
        assert_eq!(flags.link_failures, 1);
    }

    #[test]
    fn letter_parsing() {
        let a = || 'A'..='T';
        assert_eq!(parse_letter("A", a()), Some('A'));
        assert_eq!(parse_letter(" q.", a()), Some('Q'));
        assert_eq!(parse_letter("(B) V posted a video", a()), Some('B'));
        assert_eq!(parse_letter("**C**", a()), Some('C'));
        assert_eq!(parse_letter("Answer: D", a()), Some('D'));
        assert_eq!(parse_letter("T. None of the above", a()), Some('T'));
        assert_eq!(parse_letter("U", a()), None);
        assert_eq!(parse_letter("None", a()), None);
        assert_eq!(parse_letter("", a()), None);
    }

    #[test]
    fn letter_examples() {
        let unit = build_units("c", &["x".to_string()], &[], &[]).remove(0);
        let theme = |kind: PromptKind, ans: &str| {
            run(always(ans), |c, f| classify_letter(kind, &unit, c, f))
                .0
                .theme
        };
        use ThemeLabel as T;
        assert_eq!(theme(PromptKind::Harm, "A"), Some(T::Disclosure));
        assert_eq!(theme(PromptKind::Harm, "T"), None);
        assert_eq!(theme(PromptKind::Harm, "Q"), Some(T::OtherHarmContent));
        assert_eq!(
            theme(PromptKind::Interpersonal, "F"),
            Some(T::OnlineConflict)
        );
        assert_eq!(theme(PromptKind::Interpersonal, "S"), None);
        assert_eq!(
            theme(PromptKind::Interpersonal, "O"),
            Some(T::OnlineRelationships)
        );
        assert_eq!(
            theme(PromptKind::Activity, "P"),
            Some(T::WithdrawingOrLowUse)
        );
        assert_eq!(theme(PromptKind::Activity, "U"), None);
        assert_eq!(
            theme(PromptKind::Activity, "I"),
            Some(T::ProblemsWithOnlineSchool)
        );
        let (out, flags) = run(always("Z"), |c, f| {
            classify_letter(PromptKind::Harm, &unit, c, f)
        });
        assert_eq!(
            out,
            LetterOutcome {
                letter: None,
                theme: None
            }
        );
        assert_eq!(flags.invalid_letters, 1);
    }

    #[test]
    fn source_examples() {
        let r = |s: &str| parse_source_answer(s).unwrap().resolve();
        use SourceOfInformation as S;
        assert_eq!(
            r("{'sm': false, 'nok': false, 'source_known': true, 'source': 'B'}"),
            S::LeSearches
        );
        assert_eq!(
            r("{'sm': false, 'nok': true, 'source_known': true, 'source': 'A'}"),
            S::NokExplicit
        );
        assert_eq!(
            r("{'sm': true, 'nok': false, 'source_known': false}"),
            S::NokImplicit
        );
        assert_eq!(
            r("{'sm': false, 'nok': false, 'source_known': false, 'source': ''}"),
            S::Unknown
        );
        assert_eq!(r("{\"sm\": \"No\", \"nok\": \"Yes\", \"source_known\": \"Yes\", \"source\": \"A) next of kin\"}"), S::NokExplicit);
        assert_eq!(r("{'source_known': true, 'source': 'C'}"), S::Unknown);
        let unit = build_units("c", &["x".to_string()], &[], &[]).remove(0);
        let (out, flags) = run(
            Fixture::new(vec![]).with_unmatched(Unmatched::Respond("nope".into())),
            |c, f| classify_source(&unit, c, f),
        );
        assert_eq!(out.source, S::Unknown);
        assert_eq!(flags.source_parse_failures, 1);
    }
}
