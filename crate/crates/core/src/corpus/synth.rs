//! Seeded synthetic corpus with planted themes.
//!
//! Narratives are composed from a fixed bank of sentences. Each bank entry
//! carries the answers a well-behaved model would give to every prompt of
//! the classification pipeline, plus the ground truth. Some entries are
//! deliberately answered wrong ("hard" variants are missed, "decoys" are
//! mislabeled) so that downstream precision and recall are below one.
//!
//! Gold labels are returned separately from the narratives and never appear
//! in the text.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CaseRecord, Circumstances, GoldLabel, Sex, YearMonth};
use crate::taxonomy::{SourceClass, ThemeLabel};

/// Scripted answer to the online-activity question set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnlineAnswer {
    pub technology: bool,
    pub phrases: &'static [&'static str],
    pub internet: bool,
    /// `Some(true)` = Yes, `Some(false)` = No, `None` = Unknown.
    pub participate: Option<bool>,
}

impl OnlineAnswer {
    pub const NONE: OnlineAnswer = OnlineAnswer {
        technology: false,
        phrases: &[],
        internet: false,
        participate: Some(false),
    };

    const fn online(phrases: &'static [&'static str]) -> Self {
        OnlineAnswer {
            technology: true,
            phrases,
            internet: true,
            participate: Some(true),
        }
    }

    pub fn is_online(&self) -> bool {
        self.technology && self.internet && self.participate == Some(true)
    }
}

/// Scripted answer to the information-source question set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceAnswer {
    pub sm: bool,
    pub nok: bool,
    pub source_known: bool,
    pub source: Option<char>,
}

impl SourceAnswer {
    pub const LE: SourceAnswer = SourceAnswer {
        sm: false,
        nok: false,
        source_known: true,
        source: Some('B'),
    };
    pub const NOK_EXPLICIT: SourceAnswer = SourceAnswer {
        sm: false,
        nok: true,
        source_known: true,
        source: Some('A'),
    };
    pub const NOK_CONVERSATION: SourceAnswer = SourceAnswer {
        sm: false,
        nok: true,
        source_known: false,
        source: None,
    };
    pub const NOK_SOCIAL_MEDIA: SourceAnswer = SourceAnswer {
        sm: true,
        nok: false,
        source_known: false,
        source: None,
    };
    pub const UNKNOWN: SourceAnswer = SourceAnswer {
        sm: false,
        nok: false,
        source_known: false,
        source: None,
    };

    pub fn class(&self) -> SourceClass {
        match (self.source_known, self.source) {
            (true, Some('B')) => SourceClass::LeSearches,
            (true, Some('A')) => SourceClass::NokExplicit,
            _ if self.sm => SourceClass::NokImplicitSocialMedia,
            _ if self.nok => SourceClass::NokImplicitConversation,
            _ => SourceClass::Unknown,
        }
    }
}

/// A bank sentence (or merged pair) with scripted answers and ground truth.
#[derive(Debug, Clone, Copy)]
pub struct ScriptedSentence {
    pub text: &'static str,
    pub online: OnlineAnswer,
    /// Letters answered to the harm, interpersonal and activity prompts.
    pub letters: [char; 3],
    pub source: SourceAnswer,
    pub truth: Option<ThemeLabel>,
    pub true_source: SourceClass,
}

const fn s(
    text: &'static str,
    online: OnlineAnswer,
    letters: [char; 3],
    source: SourceAnswer,
    truth: Option<ThemeLabel>,
    true_source: SourceClass,
) -> ScriptedSentence {
    ScriptedSentence {
        text,
        online,
        letters,
        source,
        truth,
        true_source,
    }
}

use SourceClass as Sc;
use ThemeLabel as T;

/// Variants for one theme: correctly answered ones and one that the scripted
/// model misses.
pub struct ThemeTemplates {
    pub theme: ThemeLabel,
    pub clear: &'static [ScriptedSentence],
    pub hard: ScriptedSentence,
}

pub const THEME_TEMPLATES: [ThemeTemplates; 12] = [
    ThemeTemplates {
        theme: T::GraphicDisclosure,
        clear: &[
            s("V was live-streaming on social media at the time of the suicide.", OnlineAnswer::online(&["live-streaming", "social media"]), ['D', 'C', 'U'], SourceAnswer::NOK_SOCIAL_MEDIA, Some(T::GraphicDisclosure), Sc::NokImplicitSocialMedia),
            s("V sent a photo of the means of death to a friend over Snapchat before the incident.", OnlineAnswer::online(&["sent a photo", "Snapchat"]), ['C', 'C', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::GraphicDisclosure), Sc::NokImplicitConversation),
        ],
        hard: s("Friends received a video from V showing the preparations.", OnlineAnswer::online(&["video"]), ['S', 'M', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::GraphicDisclosure), Sc::NokImplicitConversation),
    },
    ThemeTemplates {
        theme: T::Disclosure,
        clear: &[
            s("V texted a friend saying that V wanted to die.", OnlineAnswer::online(&["texted"]), ['A', 'A', 'A'], SourceAnswer::NOK_CONVERSATION, Some(T::Disclosure), Sc::NokImplicitConversation),
            s("V posted on Instagram about wanting to end their life, according to V's sister.", OnlineAnswer::online(&["posted", "Instagram"]), ['A', 'A', 'A'], SourceAnswer::NOK_EXPLICIT, Some(T::Disclosure), Sc::NokExplicit),
        ],
        hard: s("V sent several goodbye messages to friends shortly before the incident.", OnlineAnswer::online(&["goodbye messages"]), ['S', 'B', 'A'], SourceAnswer::NOK_CONVERSATION, Some(T::Disclosure), Sc::NokImplicitConversation),
    },
    ThemeTemplates {
        theme: T::SelfHarmContent,
        clear: &[
            s("A search of V's phone by investigators revealed web searches for ways to die.", OnlineAnswer::online(&["phone", "web searches"]), ['E', 'D', 'M'], SourceAnswer::LE, Some(T::SelfHarmContent), Sc::LeSearches),
            s("V had been visiting an online forum about suicide in the weeks before death.", OnlineAnswer::online(&["online forum"]), ['M', 'S', 'K'], SourceAnswer::UNKNOWN, Some(T::SelfHarmContent), Sc::Unknown),
        ],
        hard: s("V's browser history showed videos about suicide methods.", OnlineAnswer::online(&["browser history", "videos"]), ['R', 'S', 'N'], SourceAnswer::LE, Some(T::SelfHarmContent), Sc::LeSearches),
    },
    ThemeTemplates {
        theme: T::Perpetrator,
        clear: &[
            s("V had been sending threatening messages to a classmate online.", OnlineAnswer::online(&["messages", "online"]), ['K', 'Q', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::Perpetrator), Sc::NokImplicitConversation),
            s("V was caught buying drugs through an online marketplace, according to V's father.", OnlineAnswer::online(&["online marketplace"]), ['L', 'S', 'U'], SourceAnswer::NOK_EXPLICIT, Some(T::Perpetrator), Sc::NokExplicit),
        ],
        hard: s("V had shared explicit photos of a former partner in a group chat.", OnlineAnswer::online(&["shared", "group chat"]), ['S', 'K', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::Perpetrator), Sc::NokImplicitConversation),
    },
    ThemeTemplates {
        theme: T::Victim,
        clear: &[
            s("V had been cyberbullied by peers on social media for several months.", OnlineAnswer::online(&["cyberbullied", "social media"]), ['I', 'P', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::Victim), Sc::NokImplicitConversation),
            s("V's mother reported that classmates had posted rumors about V online.", OnlineAnswer::online(&["posted", "online"]), ['J', 'P', 'U'], SourceAnswer::NOK_EXPLICIT, Some(T::Victim), Sc::NokExplicit),
        ],
        hard: s("Someone had created a fake account to mock V.", OnlineAnswer::online(&["fake account"]), ['T', 'S', 'U'], SourceAnswer::UNKNOWN, Some(T::Victim), Sc::Unknown),
    },
    ThemeTemplates {
        theme: T::OtherHarmContent,
        clear: &[
            s("V often watched violent videos online late at night.", OnlineAnswer::online(&["videos", "online"]), ['P', 'S', 'T'], SourceAnswer::UNKNOWN, Some(T::OtherHarmContent), Sc::Unknown),
            s("Investigators found pornography on V's laptop from online sites.", OnlineAnswer::online(&["laptop", "online sites"]), ['Q', 'S', 'N'], SourceAnswer::LE, Some(T::OtherHarmContent), Sc::LeSearches),
        ],
        hard: s("V spent time in online gore communities.", OnlineAnswer::online(&["online gore communities"]), ['M', 'S', 'T'], SourceAnswer::UNKNOWN, Some(T::OtherHarmContent), Sc::Unknown),
    },
    ThemeTemplates {
        theme: T::OnlineConflict,
        clear: &[
            s("V and a friend got into an argument over Facebook messages the day before.", OnlineAnswer::online(&["Facebook messages"]), ['G', 'F', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::OnlineConflict), Sc::NokImplicitConversation),
            s("V broke up with V's girlfriend over text that evening.", OnlineAnswer::online(&["text"]), ['G', 'G', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::OnlineConflict), Sc::NokImplicitConversation),
        ],
        hard: s("V was upset about comments on a video V had uploaded.", OnlineAnswer::online(&["comments", "video", "uploaded"]), ['T', 'M', 'U'], SourceAnswer::NOK_SOCIAL_MEDIA, Some(T::OnlineConflict), Sc::NokImplicitSocialMedia),
    },
    ThemeTemplates {
        theme: T::PersonalSharing,
        clear: &[
            s("V often wrote about feeling worthless in posts on Tumblr.", OnlineAnswer::online(&["posts", "Tumblr"]), ['T', 'J', 'U'], SourceAnswer::NOK_SOCIAL_MEDIA, Some(T::PersonalSharing), Sc::NokImplicitSocialMedia),
            s("V shared details about family problems with followers on TikTok.", OnlineAnswer::online(&["followers", "TikTok"]), ['T', 'K', 'U'], SourceAnswer::NOK_SOCIAL_MEDIA, Some(T::PersonalSharing), Sc::NokImplicitSocialMedia),
        ],
        hard: s("V sent long messages to a friend about V's struggles.", OnlineAnswer::online(&["messages"]), ['S', 'L', 'U'], SourceAnswer::NOK_CONVERSATION, Some(T::PersonalSharing), Sc::NokImplicitConversation),
    },
    ThemeTemplates {
        theme: T::OnlineRelationships,
        clear: &[
            s("V had been in an online relationship with someone V met through a gaming app.", OnlineAnswer::online(&["online relationship", "gaming app"]), ['T', 'N', 'Q'], SourceAnswer::NOK_CONVERSATION, Some(T::OnlineRelationships), Sc::NokImplicitConversation),
            s("V had been talking daily to a person V knew only through Discord.", OnlineAnswer::online(&["Discord"]), ['T', 'O', 'Q'], SourceAnswer::NOK_CONVERSATION, Some(T::OnlineRelationships), Sc::NokImplicitConversation),
        ],
        hard: s("V had a close friend from an online game whom V had never met.", OnlineAnswer::online(&["online game"]), ['T', 'R', 'T'], SourceAnswer::UNKNOWN, Some(T::OnlineRelationships), Sc::Unknown),
    },
    ThemeTemplates {
        theme: T::WithdrawingOrLowUse,
        clear: &[
            s("V's parents had taken away V's phone and laptop as punishment.", OnlineAnswer::online(&["phone", "laptop"]), ['R', 'S', 'P'], SourceAnswer::NOK_CONVERSATION, Some(T::WithdrawingOrLowUse), Sc::NokImplicitConversation),
            s("V had deleted all social media accounts a week prior, according to friends.", OnlineAnswer::online(&["social media accounts"]), ['T', 'S', 'J'], SourceAnswer::NOK_EXPLICIT, Some(T::WithdrawingOrLowUse), Sc::NokExplicit),
        ],
        hard: s("V had stopped replying to group chats in recent weeks.", OnlineAnswer::online(&["group chats"]), ['T', 'R', 'G'], SourceAnswer::NOK_CONVERSATION, Some(T::WithdrawingOrLowUse), Sc::NokImplicitConversation),
    },
    ThemeTemplates {
        theme: T::IntensifyingOrHighUse,
        clear: &[
            s("V's mother stated that V was addicted to video games.", OnlineAnswer::online(&["video games"]), ['R', 'S', 'B'], SourceAnswer::NOK_EXPLICIT, Some(T::IntensifyingOrHighUse), Sc::NokExplicit),
            s("V spent most nights online playing games until early morning.", OnlineAnswer::online(&["online", "playing games"]), ['T', 'S', 'D'], SourceAnswer::UNKNOWN, Some(T::IntensifyingOrHighUse), Sc::Unknown),
        ],
        hard: s("V was constantly on V's phone according to friends.", OnlineAnswer::online(&["phone"]), ['R', 'R', 'T'], SourceAnswer::NOK_EXPLICIT, Some(T::IntensifyingOrHighUse), Sc::NokExplicit),
    },
    ThemeTemplates {
        theme: T::ProblemsWithOnlineSchool,
        clear: &[
            s("V had been struggling with online classes during the school closures.", OnlineAnswer::online(&["online classes"]), ['T', 'S', 'I'], SourceAnswer::UNKNOWN, Some(T::ProblemsWithOnlineSchool), Sc::Unknown),
            s("V was failing virtual school and was upset about remote learning.", OnlineAnswer::online(&["virtual school", "remote learning"]), ['T', 'S', 'I'], SourceAnswer::UNKNOWN, Some(T::ProblemsWithOnlineSchool), Sc::Unknown),
        ],
        hard: s("V had fallen behind on assignments for V's online courses.", OnlineAnswer::online(&["online courses"]), ['T', 'S', 'T'], SourceAnswer::UNKNOWN, Some(T::ProblemsWithOnlineSchool), Sc::Unknown),
    },
];

/// Disclosure planted across two sentences; only the merged unit carries
/// the theme, so it is found only if the pair is linked.
pub const LINKED_DISCLOSURE: [ScriptedSentence; 3] = [
    s("Late that night V posted a message on Snapchat.", OnlineAnswer::online(&["posted", "message", "Snapchat"]), ['T', 'M', 'T'], SourceAnswer::NOK_SOCIAL_MEDIA, None, Sc::NokImplicitSocialMedia),
    s("The message said that V no longer wanted to be alive.", OnlineAnswer::NONE, ['T', 'S', 'U'], SourceAnswer::UNKNOWN, None, Sc::Unknown),
    s("Late that night V posted a message on Snapchat. The message said that V no longer wanted to be alive.", OnlineAnswer::online(&["posted", "message", "Snapchat"]), ['A', 'A', 'A'], SourceAnswer::NOK_SOCIAL_MEDIA, Some(T::Disclosure), Sc::NokImplicitSocialMedia),
];

/// Online activity that belongs to no theme.
pub const BENIGN_ONLINE: [ScriptedSentence; 3] = [
    s(
        "V had been texting a friend earlier that evening about weekend plans.",
        OnlineAnswer::online(&["texting"]),
        ['S', 'R', 'T'],
        SourceAnswer::NOK_CONVERSATION,
        None,
        Sc::NokImplicitConversation,
    ),
    s(
        "V played video games online with friends that afternoon.",
        OnlineAnswer::online(&["video games", "online"]),
        ['T', 'S', 'T'],
        SourceAnswer::UNKNOWN,
        None,
        Sc::Unknown,
    ),
    s(
        "V had messaged a cousin about an upcoming birthday party.",
        OnlineAnswer::online(&["messaged"]),
        ['S', 'R', 'T'],
        SourceAnswer::NOK_CONVERSATION,
        None,
        Sc::NokImplicitConversation,
    ),
];

/// Online activity with no theme that the scripted model labels anyway.
pub const DECOYS: [ScriptedSentence; 3] = [
    s(
        "V posted photos from a concert on social media.",
        OnlineAnswer::online(&["posted", "social media"]),
        ['T', 'K', 'T'],
        SourceAnswer::NOK_SOCIAL_MEDIA,
        None,
        Sc::NokImplicitSocialMedia,
    ),
    s(
        "V argued with a sibling about screen time limits on the family tablet.",
        OnlineAnswer::online(&["screen time", "tablet"]),
        ['G', 'E', 'T'],
        SourceAnswer::NOK_CONVERSATION,
        None,
        Sc::NokImplicitConversation,
    ),
    s(
        "V watched a movie on a streaming service that evening.",
        OnlineAnswer::online(&["streaming service"]),
        ['P', 'S', 'T'],
        SourceAnswer::UNKNOWN,
        None,
        Sc::Unknown,
    ),
];

/// Technology that does not count as online activity.
pub const OFFLINE_TECH: [ScriptedSentence; 3] = [
    s(
        "V's mother called 911 and started CPR.",
        OnlineAnswer {
            technology: true,
            phrases: &["called"],
            internet: false,
            participate: Some(false),
        },
        ['T', 'S', 'U'],
        SourceAnswer::UNKNOWN,
        None,
        Sc::Unknown,
    ),
    s(
        "Investigators recovered V's cell phone from the scene.",
        OnlineAnswer {
            technology: true,
            phrases: &["cell phone"],
            internet: false,
            participate: None,
        },
        ['R', 'S', 'M'],
        SourceAnswer::UNKNOWN,
        None,
        Sc::Unknown,
    ),
    s(
        "V's father called V several times that night but got no answer.",
        OnlineAnswer {
            technology: true,
            phrases: &["called"],
            internet: false,
            participate: Some(false),
        },
        ['T', 'S', 'G'],
        SourceAnswer::UNKNOWN,
        None,
        Sc::Unknown,
    ),
];

const WEAPON_FIREARM: &str = "V died of a self-inflicted gunshot wound.";
const WEAPON_OTHER: [&str; 2] = [
    "V was found hanging in a closet.",
    "V died after an intentional overdose of medication.",
];

const CIRCUMSTANCE_SENTENCES: [&str; 6] = [
    "V had recently been suspended from school.",
    "V had a history of anxiety and was receiving treatment.",
    "V had been feeling sad and hopeless lately.",
    "V had recently broken up with a partner.",
    "V had been arguing with parents about curfew.",
    "V had recently lost a close friendship.",
];

const FILLER: [&str; 5] = [
    "EMS responded and pronounced V deceased at the scene.",
    "V had been drinking alcohol prior to the incident.",
    "V left a handwritten note for the family.",
    "There was no history of prior suicide attempts.",
    "V had seemed calm at dinner that evening.",
];

const CME_SENTENCES: [&str; 3] = [
    "The medical examiner ruled the manner of death suicide.",
    "Toxicology results were negative.",
    "An autopsy was performed and confirmed the cause of death.",
];

/// Every bank sentence the scripted model knows about, including the merged
/// linked-pair text.
pub fn scripted_bank() -> Vec<ScriptedSentence> {
    let mut bank = Vec::new();
    for t in &THEME_TEMPLATES {
        bank.extend_from_slice(t.clear);
        bank.push(t.hard);
    }
    bank.extend_from_slice(&LINKED_DISCLOSURE);
    bank.extend_from_slice(&BENIGN_ONLINE);
    bank.extend_from_slice(&DECOYS);
    bank.extend_from_slice(&OFFLINE_TECH);
    bank
}

/// Linked-pair texts (first, second) the scripted model answers "Yes" for.
pub fn linked_pairs() -> Vec<(&'static str, &'static str)> {
    vec![(LINKED_DISCLOSURE[0].text, LINKED_DISCLOSURE[1].text)]
}

/// Window during which a theme is planted at a different rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateWindow {
    pub start: YearMonth,
    pub end: YearMonth,
    pub rate: f64,
}

impl RateWindow {
    pub fn contains(&self, ym: YearMonth) -> bool {
        self.start <= ym && ym <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemePlan {
    pub theme: ThemeLabel,
    /// Share of cases carrying the theme (outside `window`, if any).
    pub rate: f64,
    #[serde(default)]
    pub window: Option<RateWindow>,
}

/// Generator configuration.
///
/// Theme quotas are exact: a theme with rate `r` is planted in
/// `round(r * n)` cases drawn without replacement (separately inside and
/// outside its window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub first_year: i32,
    pub last_year: i32,
    pub min_age: u32,
    pub max_age: u32,
    pub states: Vec<String>,
    pub races: Vec<(String, f64)>,
    pub themes: Vec<ThemePlan>,
    /// Probability that a planted theme uses the variant the scripted model misses.
    pub miss_rate: f64,
    /// Probability of a mislabeled no-theme online sentence.
    pub decoy_rate: f64,
    pub benign_online_rate: f64,
    pub offline_tech_rate: f64,
    /// Share of cases whose scripted sentence split is corrupted.
    pub corrupt_split_rate: f64,
}

impl Default for CorpusProfile {
    fn default() -> Self {
        let plan = |theme, rate| ThemePlan {
            theme,
            rate,
            window: None,
        };
        CorpusProfile {
            first_year: 2016,
            last_year: 2022,
            min_age: 10,
            max_age: 24,
            states: ["CO", "GA", "MI", "OH", "VA"].map(String::from).to_vec(),
            races: vec![
                ("White".into(), 0.6),
                ("Black".into(), 0.15),
                ("Hispanic".into(), 0.15),
                ("Asian".into(), 0.05),
                ("Other".into(), 0.05),
            ],
            themes: vec![
                plan(T::GraphicDisclosure, 0.04),
                plan(T::Disclosure, 0.18),
                plan(T::SelfHarmContent, 0.06),
                plan(T::Perpetrator, 0.04),
                plan(T::Victim, 0.05),
                plan(T::OtherHarmContent, 0.03),
                plan(T::OnlineConflict, 0.08),
                plan(T::PersonalSharing, 0.04),
                plan(T::OnlineRelationships, 0.03),
                plan(T::WithdrawingOrLowUse, 0.05),
                plan(T::IntensifyingOrHighUse, 0.03),
                ThemePlan {
                    theme: T::ProblemsWithOnlineSchool,
                    rate: 0.01,
                    window: Some(RateWindow {
                        start: YearMonth::new(2020, 3),
                        end: YearMonth::new(2021, 8),
                        rate: 0.30,
                    }),
                },
            ],
            miss_rate: 0.2,
            decoy_rate: 0.06,
            benign_online_rate: 0.2,
            offline_tech_rate: 0.3,
            corrupt_split_rate: 0.05,
        }
    }
}

/// How the scripted model formats its sentence list for a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitStyle {
    JsonList,
    Numbered,
    /// Adds a hallucinated clause, which must trip the edit-distance check.
    Corrupted,
}

/// Per-case bookkeeping for building replay fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScript {
    pub case_id: String,
    /// Sentences of the pipeline text, in order.
    pub sentences: Vec<String>,
    pub split_style: SplitStyle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub cases: Vec<CaseRecord>,
    pub gold: Vec<GoldLabel>,
    pub scripts: Vec<CaseScript>,
}

struct Skeleton {
    year: i32,
    month: u32,
    themes: BTreeSet<ThemeLabel>,
}

pub fn synthesize_corpus(seed: u64, n: usize, profile: &CorpusProfile) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let years = profile.first_year..=profile.last_year;

    let mut skeletons: Vec<Skeleton> = (0..n)
        .map(|_| Skeleton {
            year: rng.random_range(years.clone()),
            month: rng.random_range(1..=12),
            themes: BTreeSet::new(),
        })
        .collect();

    for plan in &profile.themes {
        let (inside, outside): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| {
            let ym = YearMonth::new(skeletons[i].year, skeletons[i].month);
            plan.window.as_ref().is_some_and(|w| w.contains(ym))
        });
        let mut plant = |pool: &[usize], rate: f64, rng: &mut ChaCha8Rng| {
            let k = ((rate * pool.len() as f64).round() as usize).min(pool.len());
            for &i in pool.choose_multiple(rng, k) {
                skeletons[i].themes.insert(plan.theme);
            }
        };
        plant(&outside, plan.rate, &mut rng);
        if let Some(w) = &plan.window {
            plant(&inside, w.rate, &mut rng);
        }
    }

    let mut out = SyntheticCorpus {
        cases: Vec::with_capacity(n),
        gold: Vec::with_capacity(n),
        scripts: Vec::with_capacity(n),
    };
    let width = n.max(1).to_string().len();
    for (i, sk) in skeletons.into_iter().enumerate() {
        let case_id = format!("syn-{seed}-{i:0width$}");
        let (case, gold, script) = build_case(&mut rng, profile, case_id, sk);
        out.cases.push(case);
        out.gold.push(gold);
        out.scripts.push(script);
    }
    out
}

fn build_case(
    rng: &mut ChaCha8Rng,
    profile: &CorpusProfile,
    case_id: String,
    sk: Skeleton,
) -> (CaseRecord, GoldLabel, CaseScript) {
    let age = rng.random_range(profile.min_age..=profile.max_age);
    let sex = if rng.random_bool(0.75) {
        Sex::Male
    } else {
        Sex::Female
    };
    let race = weighted(rng, &profile.races);
    let state = profile
        .states
        .choose(rng)
        .cloned()
        .unwrap_or_else(|| "XX".to_string());
    let firearm = rng.random_bool(0.45);
    let circumstances = Circumstances {
        school_problem: rng.random_bool(if age < 19 { 0.3 } else { 0.08 }),
        mental_health_problem: rng.random_bool(0.4),
        depressed_mood: rng.random_bool(0.35),
        intimate_partner_problem: rng.random_bool(if age >= 15 { 0.25 } else { 0.05 }),
        family_problem: rng.random_bool(0.25),
        other_relationship_problem: rng.random_bool(0.1),
    };

    // Online sentences: planted themes, then benign/decoy/offline extras.
    let mut online: Vec<&'static str> = Vec::new();
    let mut truth_sources: Vec<SourceClass> = Vec::new();
    for theme in &sk.themes {
        let tpl = THEME_TEMPLATES.iter().find(|t| t.theme == *theme).unwrap();
        if rng.random_bool(profile.miss_rate) {
            online.push(tpl.hard.text);
            truth_sources.push(tpl.hard.true_source);
        } else if *theme == T::Disclosure && rng.random_bool(1.0 / 3.0) {
            online.push(LINKED_DISCLOSURE[0].text);
            online.push(LINKED_DISCLOSURE[1].text);
            truth_sources.push(LINKED_DISCLOSURE[2].true_source);
        } else {
            let v = tpl.clear.choose(rng).unwrap();
            online.push(v.text);
            truth_sources.push(v.true_source);
        }
    }
    if rng.random_bool(profile.benign_online_rate) {
        let v = BENIGN_ONLINE.choose(rng).unwrap();
        online.push(v.text);
        truth_sources.push(v.true_source);
    }
    if rng.random_bool(profile.decoy_rate) {
        let v = DECOYS.choose(rng).unwrap();
        online.push(v.text);
        truth_sources.push(v.true_source);
    }
    let online_mentioned = !truth_sources.is_empty();

    let mut middle: Vec<&'static str> = Vec::new();
    for (flag, sentence) in circumstances.flags().iter().zip(CIRCUMSTANCE_SENTENCES) {
        if *flag {
            middle.push(sentence);
        }
    }
    middle.extend(FILLER.choose_multiple(rng, 2));
    if rng.random_bool(profile.offline_tech_rate) {
        middle.push(OFFLINE_TECH.choose(rng).unwrap().text);
    }
    middle.shuffle(rng);
    // Keep linked sentences adjacent: insert the online block as a unit.
    let at = rng.random_range(0..=middle.len());

    let place = if rng.random_bool(0.7) {
        "at home"
    } else {
        "outside the home"
    };
    let sex_word = match sex {
        Sex::Male => "male",
        Sex::Female => "female",
    };
    let intro = format!("V was a {age}-year-old {sex_word} who was found deceased {place}.");
    let weapon = if firearm {
        WEAPON_FIREARM
    } else {
        WEAPON_OTHER.choose(rng).unwrap()
    };

    let mut le: Vec<String> = vec![intro, weapon.to_string()];
    le.extend(middle[..at].iter().map(|s| s.to_string()));
    le.extend(online.iter().map(|s| s.to_string()));
    le.extend(middle[at..].iter().map(|s| s.to_string()));
    let cme: Vec<String> = CME_SENTENCES
        .choose_multiple(rng, 2)
        .map(|s| s.to_string())
        .collect();

    let split_style = if rng.random_bool(profile.corrupt_split_rate) {
        SplitStyle::Corrupted
    } else if rng.random_bool(0.5) {
        SplitStyle::Numbered
    } else {
        SplitStyle::JsonList
    };

    let case = CaseRecord {
        case_id: case_id.clone(),
        state,
        year: sk.year,
        month: sk.month,
        day_of_week: rng.random_range(1..=7),
        age_years: age,
        sex,
        transgender: rng.random_bool(0.02),
        race,
        military: age >= 18 && rng.random_bool(0.04),
        student: rng.random_bool(if age < 19 { 0.9 } else { 0.35 }),
        location_home: place == "at home",
        weapon_firearm: firearm,
        circumstances,
        narrative_le: le.join(" "),
        narrative_cme: cme.join(" "),
        extras: Default::default(),
    };

    let source = truth_sources
        .iter()
        .copied()
        .min_by_key(|c| gold_priority(*c))
        .unwrap_or(SourceClass::Unknown);
    let gold = GoldLabel {
        case_id: case_id.clone(),
        annotator_id: None,
        themes: sk.themes.iter().map(|t| t.name().to_string()).collect(),
        source_of_info: source.name().to_string(),
        online_mentioned,
    };
    let mut sentences = le;
    sentences.extend(cme);
    let script = CaseScript {
        case_id,
        sentences,
        split_style,
    };
    (case, gold, script)
}

/// Same resolution order the pipeline applies, with the social-media
/// channel preferred among implicit next-of-kin evidence.
fn gold_priority(c: SourceClass) -> u8 {
    match c {
        SourceClass::LeSearches => 0,
        SourceClass::NokExplicit => 1,
        SourceClass::NokImplicitSocialMedia => 2,
        SourceClass::NokImplicitConversation => 3,
        SourceClass::Unknown => 4,
    }
}

fn weighted(rng: &mut ChaCha8Rng, options: &[(String, f64)]) -> String {
    let total: f64 = options.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for (name, w) in options {
        if x < *w {
            return name.clone();
        }
        x -= w;
    }
    options
        .last()
        .map(|(n, _)| n.clone())
        .unwrap_or_else(|| "Unknown".into())
}
