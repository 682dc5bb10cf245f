//! Theme and information-source vocabularies shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Broad grouping of the twelve themes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    HarmToSelf,
    HarmToOthers,
    Interpersonal,
    ActivityLevels,
    LifeEvents,
}

/// Phase of the integrated motivational-volitional model a theme is tied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImvPhase {
    PreMotivational,
    Motivational,
    Volitional,
}

/// Which Durkheimian norm a theme transgresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DurkheimNorm {
    Integration,
    Regulation,
    Both,
}

/// One of the twelve online-activity themes.
///
/// Declaration order is the canonical reporting order and is relied on by
/// every report writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ThemeLabel {
    GraphicDisclosure,
    Disclosure,
    SelfHarmContent,
    Perpetrator,
    Victim,
    OtherHarmContent,
    OnlineConflict,
    PersonalSharing,
    OnlineRelationships,
    WithdrawingOrLowUse,
    IntensifyingOrHighUse,
    ProblemsWithOnlineSchool,
}

impl ThemeLabel {
    pub const ALL: [ThemeLabel; 12] = [
        ThemeLabel::GraphicDisclosure,
        ThemeLabel::Disclosure,
        ThemeLabel::SelfHarmContent,
        ThemeLabel::Perpetrator,
        ThemeLabel::Victim,
        ThemeLabel::OtherHarmContent,
        ThemeLabel::OnlineConflict,
        ThemeLabel::PersonalSharing,
        ThemeLabel::OnlineRelationships,
        ThemeLabel::WithdrawingOrLowUse,
        ThemeLabel::IntensifyingOrHighUse,
        ThemeLabel::ProblemsWithOnlineSchool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ThemeLabel::GraphicDisclosure => "GraphicDisclosure",
            ThemeLabel::Disclosure => "Disclosure",
            ThemeLabel::SelfHarmContent => "SelfHarmContent",
            ThemeLabel::Perpetrator => "Perpetrator",
            ThemeLabel::Victim => "Victim",
            ThemeLabel::OtherHarmContent => "OtherHarmContent",
            ThemeLabel::OnlineConflict => "OnlineConflict",
            ThemeLabel::PersonalSharing => "PersonalSharing",
            ThemeLabel::OnlineRelationships => "OnlineRelationships",
            ThemeLabel::WithdrawingOrLowUse => "WithdrawingOrLowUse",
            ThemeLabel::IntensifyingOrHighUse => "IntensifyingOrHighUse",
            ThemeLabel::ProblemsWithOnlineSchool => "ProblemsWithOnlineSchool",
        }
    }

    pub fn category(self) -> Category {
        use ThemeLabel::*;
        match self {
            GraphicDisclosure | Disclosure | SelfHarmContent => Category::HarmToSelf,
            Perpetrator | Victim | OtherHarmContent => Category::HarmToOthers,
            OnlineConflict | PersonalSharing | OnlineRelationships => Category::Interpersonal,
            WithdrawingOrLowUse | IntensifyingOrHighUse => Category::ActivityLevels,
            ProblemsWithOnlineSchool => Category::LifeEvents,
        }
    }

    pub fn imv_phase(self) -> ImvPhase {
        match self.category() {
            Category::HarmToSelf | Category::HarmToOthers => ImvPhase::Volitional,
            Category::Interpersonal | Category::ActivityLevels => ImvPhase::Motivational,
            Category::LifeEvents => ImvPhase::PreMotivational,
        }
    }

    pub fn durkheim_norm(self) -> DurkheimNorm {
        match self.category() {
            Category::HarmToSelf | Category::HarmToOthers => DurkheimNorm::Regulation,
            Category::Interpersonal | Category::ActivityLevels => DurkheimNorm::Integration,
            Category::LifeEvents => DurkheimNorm::Both,
        }
    }
}

impl fmt::Display for ThemeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl FromStr for ThemeLabel {
    type Err = UnknownLabel;

    /// Accepts the canonical name as well as spaced, hyphenated or
    /// snake_case spellings ("Self-Harm Content", "self_harm_content").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s);
        ThemeLabel::ALL
            .into_iter()
            .find(|t| squash(t.name()) == key)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// Case-level source of the information about online activities, as
/// resolved by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceOfInformation {
    LeSearches,
    NokExplicit,
    NokImplicit,
    Unknown,
}

impl SourceOfInformation {
    pub const ALL: [SourceOfInformation; 4] = [
        SourceOfInformation::LeSearches,
        SourceOfInformation::NokExplicit,
        SourceOfInformation::NokImplicit,
        SourceOfInformation::Unknown,
    ];

    /// Lower value wins when several units disagree.
    pub fn priority(self) -> u8 {
        match self {
            SourceOfInformation::LeSearches => 0,
            SourceOfInformation::NokExplicit => 1,
            SourceOfInformation::NokImplicit => 2,
            SourceOfInformation::Unknown => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceOfInformation::LeSearches => "LeSearches",
            SourceOfInformation::NokExplicit => "NokExplicit",
            SourceOfInformation::NokImplicit => "NokImplicit",
            SourceOfInformation::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for SourceOfInformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Five-way source classification used when scoring against annotations;
/// the implicit next-of-kin class is split by channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceClass {
    LeSearches,
    NokExplicit,
    NokImplicitConversation,
    NokImplicitSocialMedia,
    Unknown,
}

impl SourceClass {
    pub const ALL: [SourceClass; 5] = [
        SourceClass::LeSearches,
        SourceClass::NokExplicit,
        SourceClass::NokImplicitConversation,
        SourceClass::NokImplicitSocialMedia,
        SourceClass::Unknown,
    ];

    pub fn index(self) -> usize {
        SourceClass::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceClass::LeSearches => "LeSearches",
            SourceClass::NokExplicit => "NokExplicit",
            SourceClass::NokImplicitConversation => "NokImplicitConversation",
            SourceClass::NokImplicitSocialMedia => "NokImplicitSocialMedia",
            SourceClass::Unknown => "Unknown",
        }
    }

    /// Collapses the channel split back onto the pipeline's four values.
    pub fn coarse(self) -> SourceOfInformation {
        match self {
            SourceClass::LeSearches => SourceOfInformation::LeSearches,
            SourceClass::NokExplicit => SourceOfInformation::NokExplicit,
            SourceClass::NokImplicitConversation | SourceClass::NokImplicitSocialMedia => {
                SourceOfInformation::NokImplicit
            }
            SourceClass::Unknown => SourceOfInformation::Unknown,
        }
    }

    pub fn from_pipeline(source: SourceOfInformation, via_social_media: bool) -> Self {
        match source {
            SourceOfInformation::LeSearches => SourceClass::LeSearches,
            SourceOfInformation::NokExplicit => SourceClass::NokExplicit,
            SourceOfInformation::NokImplicit if via_social_media => {
                SourceClass::NokImplicitSocialMedia
            }
            SourceOfInformation::NokImplicit => SourceClass::NokImplicitConversation,
            SourceOfInformation::Unknown => SourceClass::Unknown,
        }
    }
}

impl fmt::Display for SourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceClass {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s);
        if let Some(c) = SourceClass::ALL
            .into_iter()
            .find(|c| squash(c.name()) == key)
        {
            return Ok(c);
        }
        // A bare "NokImplicit" carries no channel; treat it as conversation.
        match key.as_str() {
            "nokimplicit" => Ok(SourceClass::NokImplicitConversation),
            "" => Ok(SourceClass::Unknown),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_themes_in_five_categories() {
        assert_eq!(ThemeLabel::ALL.len(), 12);
        let count = |c| ThemeLabel::ALL.iter().filter(|t| t.category() == c).count();
        assert_eq!(count(Category::HarmToSelf), 3);
        assert_eq!(count(Category::HarmToOthers), 3);
        assert_eq!(count(Category::Interpersonal), 3);
        assert_eq!(count(Category::ActivityLevels), 2);
        assert_eq!(count(Category::LifeEvents), 1);
    }

    #[test]
    fn theme_names_parse_in_several_spellings() {
        for t in ThemeLabel::ALL {
            assert_eq!(t.name().parse::<ThemeLabel>().unwrap(), t);
        }
        assert_eq!(
            "Self-Harm Content".parse::<ThemeLabel>().unwrap(),
            ThemeLabel::SelfHarmContent
        );
        assert_eq!(
            "problems_with_online_school".parse::<ThemeLabel>().unwrap(),
            ThemeLabel::ProblemsWithOnlineSchool
        );
        assert!("Cyberstalking".parse::<ThemeLabel>().is_err());
    }

    #[test]
    fn source_class_round_trips_to_pipeline_values() {
        for s in SourceOfInformation::ALL {
            assert_eq!(SourceClass::from_pipeline(s, false).coarse(), s);
            assert_eq!(SourceClass::from_pipeline(s, true).coarse(), s);
        }
    }
}
