//! The unified 13-way taxonomy and the mapping from each platform's native
//! label set onto it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Source};

/// Binary task label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Benign,
    Illicit,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::Benign, BinaryLabel::Illicit];

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Benign => "benign",
            BinaryLabel::Illicit => "illicit",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            BinaryLabel::Benign => BinaryLabel::Illicit,
            BinaryLabel::Illicit => BinaryLabel::Benign,
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BinaryLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" => Ok(BinaryLabel::Benign),
            "illicit" => Ok(BinaryLabel::Illicit),
            other => Err(CorpusError::UnknownLabel(other.to_string())),
        }
    }
}

/// Twelve illicit categories plus `benign`. The set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnifiedCategory {
    #[serde(rename = "porn")]
    Porn,
    #[serde(rename = "surrogacy")]
    Surrogacy,
    #[serde(rename = "gambling")]
    Gambling,
    #[serde(rename = "drug")]
    Drug,
    #[serde(rename = "weapon")]
    Weapon,
    #[serde(rename = "data-theft")]
    DataTheft,
    #[serde(rename = "money-laundry")]
    MoneyLaundry,
    #[serde(rename = "advertisement")]
    Advertisement,
    #[serde(rename = "counterfeit")]
    Counterfeit,
    #[serde(rename = "hacking")]
    Hacking,
    #[serde(rename = "fraud")]
    Fraud,
    #[serde(rename = "others")]
    Others,
    #[serde(rename = "benign")]
    Benign,
}

impl UnifiedCategory {
    /// All 13 values in taxonomy-table order (illicit first, benign last).
    pub const ALL: [UnifiedCategory; 13] = [
        UnifiedCategory::Porn,
        UnifiedCategory::Surrogacy,
        UnifiedCategory::Gambling,
        UnifiedCategory::Drug,
        UnifiedCategory::Weapon,
        UnifiedCategory::DataTheft,
        UnifiedCategory::MoneyLaundry,
        UnifiedCategory::Advertisement,
        UnifiedCategory::Counterfeit,
        UnifiedCategory::Hacking,
        UnifiedCategory::Fraud,
        UnifiedCategory::Others,
        UnifiedCategory::Benign,
    ];

    /// The twelve illicit categories.
    pub fn illicit() -> impl Iterator<Item = UnifiedCategory> {
        Self::ALL.into_iter().filter(|c| c.is_illicit())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnifiedCategory::Porn => "porn",
            UnifiedCategory::Surrogacy => "surrogacy",
            UnifiedCategory::Gambling => "gambling",
            UnifiedCategory::Drug => "drug",
            UnifiedCategory::Weapon => "weapon",
            UnifiedCategory::DataTheft => "data-theft",
            UnifiedCategory::MoneyLaundry => "money-laundry",
            UnifiedCategory::Advertisement => "advertisement",
            UnifiedCategory::Counterfeit => "counterfeit",
            UnifiedCategory::Hacking => "hacking",
            UnifiedCategory::Fraud => "fraud",
            UnifiedCategory::Others => "others",
            UnifiedCategory::Benign => "benign",
        }
    }

    pub fn is_illicit(self) -> bool {
        self != UnifiedCategory::Benign
    }

    pub fn binary_label(self) -> BinaryLabel {
        if self.is_illicit() {
            BinaryLabel::Illicit
        } else {
            BinaryLabel::Benign
        }
    }
}

impl fmt::Display for UnifiedCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnifiedCategory {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == wanted)
            .ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
    }
}

/// Platform label → unified category, one row per source label.
const SOURCE_LABELS: &[(Source, &str, UnifiedCategory)] = &[
    (Source::Twitter, "porn", UnifiedCategory::Porn),
    (Source::Twitter, "surrogacy", UnifiedCategory::Surrogacy),
    (Source::Twitter, "gambling", UnifiedCategory::Gambling),
    (Source::Twitter, "drug", UnifiedCategory::Drug),
    (Source::Twitter, "weapon", UnifiedCategory::Weapon),
    (Source::Twitter, "data_leakage", UnifiedCategory::DataTheft),
    (
        Source::Twitter,
        "money-laundry",
        UnifiedCategory::MoneyLaundry,
    ),
    (
        Source::Twitter,
        "crowdturfing",
        UnifiedCategory::Advertisement,
    ),
    (
        Source::Twitter,
        "fake_document",
        UnifiedCategory::Counterfeit,
    ),
    (Source::Twitter, "harassment", UnifiedCategory::Others),
    (Source::SearchEngine, "Illegal Sex", UnifiedCategory::Porn),
    (
        Source::SearchEngine,
        "Illegal Surrogacy",
        UnifiedCategory::Surrogacy,
    ),
    (Source::SearchEngine, "Gambling", UnifiedCategory::Gambling),
    (
        Source::SearchEngine,
        "Illegal Drug Sales",
        UnifiedCategory::Drug,
    ),
    (
        Source::SearchEngine,
        "Illegal Weapon Sales",
        UnifiedCategory::Weapon,
    ),
    (
        Source::SearchEngine,
        "Data Theft",
        UnifiedCategory::DataTheft,
    ),
    (
        Source::SearchEngine,
        "Money Laundering",
        UnifiedCategory::MoneyLaundry,
    ),
    (
        Source::SearchEngine,
        "Black Hat SEO & Adv.",
        UnifiedCategory::Advertisement,
    ),
    (
        Source::SearchEngine,
        "Fake Account",
        UnifiedCategory::Counterfeit,
    ),
    (
        Source::SearchEngine,
        "Fake Certificate",
        UnifiedCategory::Counterfeit,
    ),
    (
        Source::SearchEngine,
        "Counterfeit Goods",
        UnifiedCategory::Counterfeit,
    ),
    (
        Source::SearchEngine,
        "Hacking Service",
        UnifiedCategory::Hacking,
    ),
    (
        Source::SearchEngine,
        "Financial Fraud",
        UnifiedCategory::Fraud,
    ),
    (Source::SearchEngine, "Others", UnifiedCategory::Others),
];

/// Every (source, native label, unified category) row of the mapping table.
pub fn source_label_table() -> &'static [(Source, &'static str, UnifiedCategory)] {
    SOURCE_LABELS
}

/// Maps a platform-native label onto the unified taxonomy.
///
/// The lookup is exact on the native spelling for the given source.
/// Anything else is [`CorpusError::UnmappedLabel`]; callers that want to
/// route stragglers to `others` do so explicitly.
pub fn unify_category(raw_label: &str, source: Source) -> Result<UnifiedCategory, CorpusError> {
    let raw = raw_label.trim();
    SOURCE_LABELS
        .iter()
        .find(|(s, label, _)| *s == source && *label == raw)
        .map(|(_, _, cat)| *cat)
        .ok_or_else(|| CorpusError::UnmappedLabel {
            label: raw.to_string(),
            source_tag: source,
        })
}

/// Looks a label up across every source, ignoring case and punctuation.
/// Used when matching free-form names against the known taxonomy.
pub fn lookup_any_source(label: &str) -> Option<UnifiedCategory> {
    let key = loose_key(label);
    UnifiedCategory::ALL
        .into_iter()
        .find(|c| loose_key(c.as_str()) == key)
        .or_else(|| {
            SOURCE_LABELS
                .iter()
                .find(|(_, native, _)| loose_key(native) == key)
                .map(|(_, _, cat)| *cat)
        })
}

fn loose_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}
