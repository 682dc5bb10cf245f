//! Zero-shot classification of narratives into online-activity themes.
//!
//! Per case: split the narrative into sentences, flag sentences describing
//! online activity, merge related neighbours into units, then run three
//! forced-choice theme prompts and one source prompt on every online unit.

pub mod prompts;
pub mod steps;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CaseRecord;
use crate::llm::{parallel_map, LlmClient, TriState};
use crate::taxonomy::{SourceClass, SourceOfInformation, ThemeLabel};
pub use prompts::{PromptKind, PromptSet};
pub use steps::{
    classify_activity, classify_harm, classify_interpersonal, classify_source, detect_online,
    fallback_split, link_related, split_sentences, SourceEvidence, StepContext,
};

/// Answers to the online-activity question set for one sentence or unit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineFlags {
    pub technology: bool,
    pub phrases: Vec<String>,
    pub internet: bool,
    pub participate: TriState,
}

impl OnlineFlags {
    /// Technology, internet and participation all answered yes.
    pub fn is_online(&self) -> bool {
        self.technology && self.internet && self.participate == TriState::Yes
    }

    /// Without technology nothing else can be asserted.
    pub fn normalized(self) -> Self {
        if self.technology {
            self
        } else {
            OnlineFlags::default()
        }
    }

    /// Field-wise OR; phrase lists are concatenated. Participation is yes if
    /// any member says yes, else unknown if any member is unknown.
    pub fn or(mut self, other: &OnlineFlags) -> Self {
        self.technology |= other.technology;
        self.internet |= other.internet;
        self.phrases.extend(other.phrases.iter().cloned());
        self.participate = match (self.participate, other.participate) {
            (TriState::Yes, _) | (_, TriState::Yes) => TriState::Yes,
            (TriState::Unknown, _) | (_, TriState::Unknown) => TriState::Unknown,
            _ => TriState::No,
        };
        self
    }
}

/// A sentence, or a run of linked consecutive sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub unit_id: String,
    pub case_id: String,
    pub sentence_indices: Vec<usize>,
    pub text: String,
    pub flags: OnlineFlags,
}

/// Things that went wrong while processing a case. Nothing here aborts the
/// case; each failure degrades to a conservative answer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseFlags {
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub split_fallback: bool,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub online_parse_failures: u32,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub link_failures: u32,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub invalid_letters: u32,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub source_parse_failures: u32,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub reasks: u32,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub llm_errors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skipped: Option<String>,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl CaseFlags {
    pub fn is_clean(&self) -> bool {
        *self == CaseFlags::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechKind {
    Messaging,
    SocialMedia,
    Gaming,
    Device,
    Other,
}

/// Maps technology phrases to kinds. A phrase takes every kind with a
/// matching key; a key matches when some word of the phrase starts with it
/// (multi-word keys must appear verbatim). Phrases matching nothing are
/// `Other`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechKindTable {
    pub entries: Vec<(TechKind, Vec<String>)>,
}

impl Default for TechKindTable {
    fn default() -> Self {
        let e = |k, keys: &[&str]| (k, keys.iter().map(|s| s.to_string()).collect());
        TechKindTable {
            entries: vec![
                e(
                    TechKind::Messaging,
                    &[
                        "text", "messag", "chat", "sms", "email", "e-mail", "dm", "snapchat",
                        "discord",
                    ],
                ),
                e(
                    TechKind::SocialMedia,
                    &[
                        "social media",
                        "post",
                        "facebook",
                        "instagram",
                        "tiktok",
                        "twitter",
                        "tumblr",
                        "youtube",
                        "follower",
                        "live-stream",
                        "livestream",
                    ],
                ),
                e(TechKind::Gaming, &["gam", "xbox", "playstation"]),
                e(
                    TechKind::Device,
                    &[
                        "phone", "computer", "laptop", "tablet", "ipad", "device", "browser",
                    ],
                ),
            ],
        }
    }
}

impl TechKindTable {
    pub fn kinds_of(&self, phrase: &str) -> BTreeSet<TechKind> {
        let lower = phrase.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !(c.is_alphanumeric() || c == '-'))
            .filter(|w| !w.is_empty())
            .collect();
        let mut kinds: BTreeSet<TechKind> = self
            .entries
            .iter()
            .filter(|(_, keys)| {
                keys.iter().any(|k| {
                    if k.contains(' ') {
                        lower.contains(k.as_str())
                    } else {
                        words.iter().any(|w| w.starts_with(k.as_str()))
                    }
                })
            })
            .map(|(kind, _)| *kind)
            .collect();
        if kinds.is_empty() && !lower.trim().is_empty() {
            kinds.insert(TechKind::Other);
        }
        kinds
    }
}

/// Step-4 labels for one online unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitResult {
    pub unit_id: String,
    pub sentence_indices: Vec<usize>,
    pub themes: BTreeSet<ThemeLabel>,
    pub source: SourceOfInformation,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub via_social_media: bool,
    #[serde(skip)]
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub online_mentioned: bool,
    pub technology_kinds: BTreeSet<TechKind>,
    pub themes: BTreeSet<ThemeLabel>,
    pub source: SourceOfInformation,
    /// Implicit next-of-kin evidence came through social media.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub source_via_social_media: bool,
    pub per_unit: Vec<UnitResult>,
    #[serde(skip_serializing_if = "CaseFlags::is_clean", default)]
    pub flags: CaseFlags,
}

impl CaseResult {
    pub fn source_class(&self) -> SourceClass {
        SourceClass::from_pipeline(self.source, self.source_via_social_media)
    }
}

/// Case-level union of the labeled online units. The source is the
/// highest-priority unit source (LE searches, then explicit next of kin,
/// then implicit next of kin); among implicit evidence the social-media
/// channel wins.
pub fn aggregate_case(
    case_id: &str,
    units: Vec<UnitResult>,
    table: &TechKindTable,
    flags: CaseFlags,
) -> CaseResult {
    let themes: BTreeSet<ThemeLabel> = units
        .iter()
        .flat_map(|u| u.themes.iter().copied())
        .collect();
    let source = units
        .iter()
        .map(|u| u.source)
        .min_by_key(|s| s.priority())
        .unwrap_or(SourceOfInformation::Unknown);
    let via_sm = source == SourceOfInformation::NokImplicit
        && units
            .iter()
            .any(|u| u.source == SourceOfInformation::NokImplicit && u.via_social_media);
    let technology_kinds = units
        .iter()
        .flat_map(|u| u.phrases.iter())
        .flat_map(|p| table.kinds_of(p))
        .collect();
    CaseResult {
        case_id: case_id.to_string(),
        online_mentioned: !units.is_empty(),
        technology_kinds,
        themes,
        source,
        source_via_social_media: via_sm,
        per_unit: units,
        flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model: String,
    #[serde(skip)]
    pub prompts: PromptSet,
    pub tech_kinds: TechKindTable,
    /// Ask once more when an answer cannot be read.
    pub reask: bool,
    /// Cases processed concurrently; `None` uses the client's budget.
    pub max_parallel: Option<usize>,
}

impl PipelineConfig {
    pub fn new(model: impl Into<String>) -> Self {
        PipelineConfig {
            model: model.into(),
            prompts: PromptSet::builtin(),
            tech_kinds: TechKindTable::default(),
            reask: true,
            max_parallel: None,
        }
    }
}

/// Runs all steps on one case.
pub fn run_case(case: &CaseRecord, llm: &dyn LlmClient, cfg: &PipelineConfig) -> CaseResult {
    let ctx = StepContext {
        llm,
        prompts: &cfg.prompts,
        model: &cfg.model,
        reask: cfg.reask,
    };
    let mut flags = CaseFlags::default();
    let text = case.pipeline_text();
    if text.trim().is_empty() {
        flags.skipped = Some("no narrative text".into());
        return aggregate_case(&case.case_id, Vec::new(), &cfg.tech_kinds, flags);
    }

    let sentences = split_sentences(&text, &ctx, &mut flags).sentences;
    let online: Vec<OnlineFlags> = sentences
        .iter()
        .map(|s| detect_online(s, &ctx, &mut flags).flags)
        .collect();

    // Without any technology sentence no merge can produce an online unit,
    // so the pair queries are skipped.
    let units = if online.iter().any(|f| f.technology) {
        link_related(&case.case_id, &sentences, &online, &ctx, &mut flags)
    } else {
        steps::build_units(&case.case_id, &sentences, &online, &[])
    };

    let labeled: Vec<UnitResult> = units
        .iter()
        .filter(|u| u.flags.is_online())
        .map(|u| {
            let themes = [
                classify_harm(u, &ctx, &mut flags),
                classify_interpersonal(u, &ctx, &mut flags),
                classify_activity(u, &ctx, &mut flags),
            ]
            .iter()
            .filter_map(|o| o.theme)
            .collect();
            let src = classify_source(u, &ctx, &mut flags);
            UnitResult {
                unit_id: u.unit_id.clone(),
                sentence_indices: u.sentence_indices.clone(),
                themes,
                source: src.source,
                via_social_media: src.evidence.is_some_and(|e| e.sm),
                phrases: u.flags.phrases.clone(),
            }
        })
        .collect();
    aggregate_case(&case.case_id, labeled, &cfg.tech_kinds, flags)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub cases: usize,
    pub online_cases: usize,
    pub flagged_cases: usize,
    pub split_fallbacks: usize,
    pub per_theme: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub endpoint: Option<String>,
    pub prompt_hashes: BTreeMap<String, String>,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub started_at: Option<String>,
    pub counts: RunCounts,
    /// Flags of every case that had any.
    pub per_case_flags: BTreeMap<String, CaseFlags>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub results: Vec<CaseResult>,
    pub manifest: RunManifest,
}

/// Processes cases concurrently up to the parallelism budget. Results keep
/// the input order; a failure in one case never stops the run.
pub fn run_pipeline(
    cases: &[CaseRecord],
    llm: &dyn LlmClient,
    cfg: &PipelineConfig,
) -> PipelineRun {
    let workers = cfg.max_parallel.unwrap_or_else(|| llm.max_parallel());
    let results = parallel_map(cases, workers, |c| run_case(c, llm, cfg));

    let mut counts = RunCounts {
        cases: results.len(),
        ..Default::default()
    };
    for t in ThemeLabel::ALL {
        counts.per_theme.insert(t.name().to_string(), 0);
    }
    let mut per_case_flags = BTreeMap::new();
    for r in &results {
        counts.online_cases += r.online_mentioned as usize;
        counts.split_fallbacks += r.flags.split_fallback as usize;
        for t in &r.themes {
            *counts.per_theme.get_mut(t.name()).unwrap() += 1;
        }
        if !r.flags.is_clean() {
            counts.flagged_cases += 1;
            per_case_flags.insert(r.case_id.clone(), r.flags.clone());
        }
    }
    let manifest = RunManifest {
        model: cfg.model.clone(),
        endpoint: None,
        prompt_hashes: cfg.prompts.hashes(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        started_at: None,
        counts,
        per_case_flags,
    };
    PipelineRun { results, manifest }
}

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub fn write_results<W: Write>(mut out: W, results: &[CaseResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_results(path: &Path, results: &[CaseResult]) -> Result<(), ResultsError> {
    let io = |source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_results(std::io::BufWriter::new(file), results).map_err(io)
}

pub fn load_results(path: &Path) -> Result<Vec<CaseResult>, ResultsError> {
    let io = |source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| ResultsError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Circumstances, Sex};
    use crate::llm::{Fixture, FixtureRule, MatchMode, ScriptedLlm, Unmatched};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn case(id: &str, le: &str) -> CaseRecord {
        CaseRecord {
            case_id: id.into(),
            state: "CO".into(),
            year: 2020,
            month: 5,
            day_of_week: 3,
            age_years: 17,
            sex: Sex::Female,
            transgender: false,
            race: "White".into(),
            military: false,
            student: true,
            location_home: true,
            weapon_firearm: false,
            circumstances: Circumstances::default(),
            narrative_le: le.into(),
            narrative_cme: String::new(),
            extras: Default::default(),
        }
    }

    fn unit(id: &str, themes: &[ThemeLabel], source: SourceOfInformation) -> UnitResult {
        UnitResult {
            unit_id: id.into(),
            sentence_indices: vec![0],
            themes: themes.iter().copied().collect(),
            source,
            via_social_media: false,
            phrases: Vec::new(),
        }
    }

    #[test]
    fn union_of_unit_themes() {
        use ThemeLabel as T;
        let r = aggregate_case(
            "c",
            vec![
                unit("u0", &[T::Disclosure], SourceOfInformation::Unknown),
                unit(
                    "u1",
                    &[T::Disclosure, T::OnlineConflict],
                    SourceOfInformation::NokImplicit,
                ),
            ],
            &TechKindTable::default(),
            CaseFlags::default(),
        );
        assert_eq!(
            r.themes,
            [T::Disclosure, T::OnlineConflict].into_iter().collect()
        );
        assert_eq!(r.source, SourceOfInformation::NokImplicit);
        assert!(r.online_mentioned);
    }

    #[test]
    fn no_online_units() {
        let r = aggregate_case(
            "c",
            Vec::new(),
            &TechKindTable::default(),
            CaseFlags::default(),
        );
        assert!(!r.online_mentioned);
        assert!(r.themes.is_empty());
        assert_eq!(r.source, SourceOfInformation::Unknown);
    }

    #[test]
    fn randomized_union_matches_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for i in 0..30 {
            let n = rng.random_range(0..5);
            let units: Vec<UnitResult> = (0..n)
                .map(|k| {
                    let themes: Vec<ThemeLabel> = ThemeLabel::ALL
                        .iter()
                        .copied()
                        .filter(|_| rng.random_bool(0.15))
                        .collect();
                    let src = SourceOfInformation::ALL[rng.random_range(0..4)];
                    unit(&format!("u{k}"), &themes, src)
                })
                .collect();
            let mut oracle = std::collections::HashSet::new();
            for u in &units {
                for t in &u.themes {
                    oracle.insert(*t);
                }
            }
            let best = units.iter().map(|u| u.source.priority()).min();
            let r = aggregate_case(
                &format!("c{i}"),
                units,
                &TechKindTable::default(),
                CaseFlags::default(),
            );
            assert_eq!(r.themes.len(), oracle.len());
            assert!(r.themes.iter().all(|t| oracle.contains(t)));
            assert_eq!(best.unwrap_or(3), r.source.priority());
        }
    }

    #[test]
    fn social_media_channel_wins_among_implicit() {
        let mut a = unit("u0", &[], SourceOfInformation::NokImplicit);
        let mut b = unit("u1", &[], SourceOfInformation::NokImplicit);
        b.via_social_media = true;
        let r = aggregate_case(
            "c",
            vec![a.clone(), b],
            &TechKindTable::default(),
            CaseFlags::default(),
        );
        assert_eq!(r.source_class(), SourceClass::NokImplicitSocialMedia);
        a.source = SourceOfInformation::NokExplicit;
        let mut c = unit("u1", &[], SourceOfInformation::NokImplicit);
        c.via_social_media = true;
        let r = aggregate_case(
            "c",
            vec![a, c],
            &TechKindTable::default(),
            CaseFlags::default(),
        );
        assert_eq!(r.source_class(), SourceClass::NokExplicit);
    }

    #[test]
    fn technology_kinds_table() {
        let t = TechKindTable::default();
        let k = |p: &str| t.kinds_of(p).into_iter().collect::<Vec<_>>();
        assert_eq!(k("text messages"), [TechKind::Messaging]);
        assert_eq!(k("posted"), [TechKind::SocialMedia]);
        assert_eq!(k("Social Media"), [TechKind::SocialMedia]);
        assert_eq!(k("gaming app"), [TechKind::Gaming]);
        assert_eq!(k("V's phone"), [TechKind::Device]);
        assert_eq!(k("websites"), [TechKind::Other]);
        assert!(k("").is_empty());
    }

    #[test]
    fn online_or_keeps_invariant() {
        let f = OnlineFlags::default().or(&OnlineFlags::default());
        assert_eq!(f, OnlineFlags::default());
    }

    #[test]
    fn empty_corpus() {
        let llm = ScriptedLlm::new(Fixture::new(Vec::new()));
        let run = run_pipeline(&[], &llm, &PipelineConfig::new("m"));
        assert!(run.results.is_empty());
        assert_eq!(run.manifest.counts.cases, 0);
        assert_eq!(llm.calls(), 0);
    }

    #[test]
    fn constant_none_answer_gives_no_themes() {
        // Every answer is "T": splitting falls back, nothing parses as JSON,
        // so no sentence is online and no case has a theme.
        let llm = ScriptedLlm::new(
            Fixture::new(vec![FixtureRule::new(MatchMode::Any, "", "T")])
                .with_unmatched(Unmatched::Respond("T".into())),
        );
        let cases = vec![
            case("a", "V texted a friend. V died."),
            case("b", "V was found."),
        ];
        let run = run_pipeline(&cases, &llm, &PipelineConfig::new("m"));
        assert!(run
            .results
            .iter()
            .all(|r| r.themes.is_empty() && !r.online_mentioned));
        assert_eq!(run.manifest.counts.flagged_cases, 2);
    }

    #[test]
    fn all_online_fixture_labels_every_sentence() {
        let p = PromptSet::builtin();
        let text = "V texted a friend that V wanted to die. V's phone was found.";
        let rules = vec![
            FixtureRule::new(
                MatchMode::Suffix,
                format!("Narrative: {text}"),
                "[\"V texted a friend that V wanted to die.\", \"V's phone was found.\"]",
            ),
            FixtureRule::new(
                MatchMode::Suffix,
                "Sentence: V texted a friend that V wanted to die.",
                "{'technology':'Yes','phrases':['texted'],'internet':'Yes','participate':'Yes'}",
            )
            .requiring("'participate'"),
            FixtureRule::new(
                MatchMode::Suffix,
                "Sentence: V's phone was found.",
                "{'technology':'Yes','phrases':['phone'],'internet':'No','participate':'No'}",
            )
            .requiring("'participate'"),
            FixtureRule::new(MatchMode::Substring, "Second Sentence:", "No"),
            FixtureRule::new(MatchMode::Any, "", "A")
                .requiring(p.text(PromptKind::Harm).lines().nth(2).unwrap()),
            FixtureRule::new(MatchMode::Any, "", "S").requiring("S. None of the above"),
            FixtureRule::new(MatchMode::Any, "", "U").requiring("U. None of the above"),
            FixtureRule::new(
                MatchMode::Any,
                "",
                "{'sm': False, 'nok': True, 'source_known': False, 'source': ''}",
            )
            .requiring("'source_known'"),
        ];
        let llm = ScriptedLlm::new(Fixture::new(rules));
        let run = run_pipeline(&[case("x", text)], &llm, &PipelineConfig::new("m"));
        let r = &run.results[0];
        assert!(r.flags.is_clean(), "{:?}", r.flags);
        assert!(r.online_mentioned);
        assert_eq!(r.themes, [ThemeLabel::Disclosure].into_iter().collect());
        assert_eq!(r.source, SourceOfInformation::NokImplicit);
        assert_eq!(
            r.technology_kinds,
            [TechKind::Messaging].into_iter().collect()
        );
        assert_eq!(r.per_unit.len(), 1);
        assert_eq!(r.per_unit[0].sentence_indices, [0]);
        assert_eq!(run.manifest.prompt_hashes.len(), 8);
    }

    #[test]
    fn results_round_trip() {
        let r = aggregate_case(
            "c",
            vec![unit(
                "u0",
                &[ThemeLabel::Victim],
                SourceOfInformation::LeSearches,
            )],
            &TechKindTable::default(),
            CaseFlags {
                split_fallback: true,
                ..Default::default()
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        save_results(&path, std::slice::from_ref(&r)).unwrap();
        let back = load_results(&path).unwrap();
        assert_eq!(back[0].themes, r.themes);
        assert_eq!(back[0].flags, r.flags);
        assert_eq!(back[0].source, r.source);
    }
}
