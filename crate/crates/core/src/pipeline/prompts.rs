//! Prompt assets and the option-letter tables of the forced-choice prompts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::taxonomy::ThemeLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Split,
    Online,
    Link,
    Harm,
    Interpersonal,
    Activity,
    Source,
}

impl PromptKind {
    pub const ALL: [PromptKind; 7] = [
        PromptKind::Split,
        PromptKind::Online,
        PromptKind::Link,
        PromptKind::Harm,
        PromptKind::Interpersonal,
        PromptKind::Activity,
        PromptKind::Source,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::Split => "step1_split.txt",
            PromptKind::Online => "step2_online.txt",
            PromptKind::Link => "step3_link.txt",
            PromptKind::Harm => "step4a_harm.txt",
            PromptKind::Interpersonal => "step4b_interpersonal.txt",
            PromptKind::Activity => "step4c_activity.txt",
            PromptKind::Source => "step4d_source.txt",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptKind::Split => "split",
            PromptKind::Online => "online",
            PromptKind::Link => "link",
            PromptKind::Harm => "harm",
            PromptKind::Interpersonal => "interpersonal",
            PromptKind::Activity => "activity",
            PromptKind::Source => "source",
        }
    }

    /// Option letters of the three forced-choice prompts.
    pub fn alphabet(self) -> Option<std::ops::RangeInclusive<char>> {
        match self {
            PromptKind::Harm => Some('A'..='T'),
            PromptKind::Interpersonal => Some('A'..='S'),
            PromptKind::Activity => Some('A'..='U'),
            _ => None,
        }
    }

    /// Theme selected by `letter`; `None` for options that code no theme.
    pub fn theme_for(self, letter: char) -> Option<ThemeLabel> {
        use ThemeLabel as T;
        match self {
            PromptKind::Harm => match letter {
                'A' => Some(T::Disclosure),
                'B' | 'C' | 'D' => Some(T::GraphicDisclosure),
                'P' | 'Q' => Some(T::OtherHarmContent),
                'F' | 'K' | 'L' => Some(T::Perpetrator),
                'E' | 'M' | 'N' | 'O' => Some(T::SelfHarmContent),
                'I' | 'J' => Some(T::Victim),
                _ => None,
            },
            PromptKind::Interpersonal => match letter {
                'H' | 'J' | 'K' => Some(T::PersonalSharing),
                'E' | 'F' | 'G' => Some(T::OnlineConflict),
                'N' | 'O' => Some(T::OnlineRelationships),
                _ => None,
            },
            PromptKind::Activity => match letter {
                'J' | 'O' | 'P' => Some(T::WithdrawingOrLowUse),
                'B' | 'C' | 'D' | 'E' | 'F' => Some(T::IntensifyingOrHighUse),
                'I' => Some(T::ProblemsWithOnlineSchool),
                _ => None,
            },
            _ => None,
        }
    }
}

pub const SYSTEM_PROMPT: &str = include_str!("../../prompts/system.txt");

const BUILTIN: [(PromptKind, &str); 7] = [
    (
        PromptKind::Split,
        include_str!("../../prompts/step1_split.txt"),
    ),
    (
        PromptKind::Online,
        include_str!("../../prompts/step2_online.txt"),
    ),
    (
        PromptKind::Link,
        include_str!("../../prompts/step3_link.txt"),
    ),
    (
        PromptKind::Harm,
        include_str!("../../prompts/step4a_harm.txt"),
    ),
    (
        PromptKind::Interpersonal,
        include_str!("../../prompts/step4b_interpersonal.txt"),
    ),
    (
        PromptKind::Activity,
        include_str!("../../prompts/step4c_activity.txt"),
    ),
    (
        PromptKind::Source,
        include_str!("../../prompts/step4d_source.txt"),
    ),
];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("cannot read prompt {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("prompt {0} must contain the {{first}} and {{second}} placeholders")]
    Placeholders(String),
}

/// The prompt texts used for a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system: String,
    texts: BTreeMap<PromptKind, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        PromptSet {
            system: SYSTEM_PROMPT.trim_end().to_string(),
            texts: BUILTIN
                .iter()
                .map(|(k, t)| (*k, t.trim_end().to_string()))
                .collect(),
        }
    }

    /// Loads prompt files from `dir`. Files that are absent keep the
    /// built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = PromptSet::builtin();
        let read = |name: &str| -> Result<Option<String>, PromptError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(t) => Ok(Some(t.trim_end().to_string())),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(source) => Err(PromptError::Io {
                    path: path.display().to_string(),
                    source,
                }),
            }
        };
        if let Some(t) = read("system.txt")? {
            set.system = t;
        }
        for kind in PromptKind::ALL {
            if let Some(t) = read(kind.file_name())? {
                set.texts.insert(kind, t);
            }
        }
        let link = set.text(PromptKind::Link);
        if !link.contains("{first}") || !link.contains("{second}") {
            return Err(PromptError::Placeholders(
                PromptKind::Link.file_name().into(),
            ));
        }
        Ok(set)
    }

    pub fn text(&self, kind: PromptKind) -> &str {
        &self.texts[&kind]
    }

    /// SHA-256 of each prompt text, hex encoded, keyed by prompt name.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = self
            .texts
            .iter()
            .map(|(k, t)| (k.name().to_string(), sha256_hex(t.as_bytes())))
            .collect();
        out.insert("system".into(), sha256_hex(self.system.as_bytes()));
        out
    }

    pub fn split_message(&self, narrative: &str) -> String {
        format!("{}\n\nNarrative: {narrative}", self.text(PromptKind::Split))
    }

    /// User message for the online-detection and Step-4 prompts.
    pub fn sentence_message(&self, kind: PromptKind, sentence: &str) -> String {
        format!("{}\n\nSentence: {sentence}", self.text(kind))
    }

    pub fn link_message(&self, first: &str, second: &str) -> String {
        self.text(PromptKind::Link)
            .replace("{first}", first)
            .replace("{second}", second)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Prefix sent with the single retry after an unusable answer.
pub const REASK_PREFIX: &str =
    "Your previous answer could not be read. Follow the answer format exactly.\n\n";
